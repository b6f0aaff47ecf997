#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "volterra/game.hpp"

namespace volterra {

// Grid/ensemble knobs shared by the built-in scenario drivers.
struct RunSettings {
  std::size_t cells = 64;
  std::size_t paths = 10000;
  std::uint64_t seed = 7451;
  std::size_t workers = 1;
};

// One reference comparison: a library-produced profile against a value
// computed by independent code (dense quadrature or closed form), with the
// acceptance bound stated next to the outcome.
struct OracleResult {
  std::string name;
  std::vector<double> reference;
  std::vector<double> observed;
  double tolerance = 0.0;
  double margin = 0.0;  // worst |observed - reference|
  bool pass = false;
  std::string note;
};

inline OracleResult compare_profiles(std::string name, std::vector<double> reference,
                                     std::vector<double> observed, double tolerance,
                                     std::string note = "") {
  if (reference.size() != observed.size())
    throw InvalidArgument("compare_profiles: size mismatch in " + name);
  OracleResult r;
  r.name = std::move(name);
  r.reference = std::move(reference);
  r.observed = std::move(observed);
  r.tolerance = tolerance;
  for (std::size_t i = 0; i < r.reference.size(); ++i)
    r.margin = std::max(r.margin, std::abs(r.observed[i] - r.reference[i]));
  r.pass = r.margin <= tolerance;
  r.note = std::move(note);
  return r;
}

struct ScenarioReport {
  std::vector<OracleResult> oracles;
  std::vector<double> nodes;  // grid nodes of the profile columns
  std::vector<std::pair<std::string, std::vector<double>>> profiles;

  bool all_pass() const {
    for (const auto& o : oracles)
      if (!o.pass) return false;
    return true;
  }
  const OracleResult* find(const std::string& name) const {
    for (const auto& o : oracles)
      if (o.name == name) return &o;
    return nullptr;
  }
};

// Shared defaults of the consumption scenarios: two-sided jump marks and a
// constant deterministic intensity pair.
inline MarkSet consumption_marks() { return MarkSet({-0.6, 1.1}, {0.7, 0.4}); }

struct BuiltScenario {
  TimeChangeModel model;
  MarkSet marks;
  GameScenario game;
  GameOptions options;
};

// ---------------------------------------------------------------------------
// Zero-sum consumption on a cash flow with lagged self-excitation: the state
// feeds back through a drift weight alpha(t - s) and a lagged jump loading,
// and both players share one consumption rate with exactly opposite
// objectives. All coefficients are deterministic, so the costate collapses
// to a deterministic profile with a vanishing jump representation, and the
// whole first-order structure can be checked against a dense quadrature
// reference (dense_adjoint_51).
struct Scenario51 {
  double horizon = 1.0;
  double alpha0 = 0.8;  // lag weight alpha(v) = alpha0 + alpha1 * v
  double alpha1 = 0.07;
  double gamma0 = 0.25;         // jump loading, constant over time and marks
  double eta0 = 0.3;            // backward relaxation rate (inert: h == 0)
  double terminal_slope = 1.0;  // K: costate value at the horizon
  double rho = 0.5;             // utility weight, F = rho * ln c
  double c_floor = 1e-3;        // the log utility needs a positive floor
  double c_max = 5.0;
  double x0 = 1.0;
  double lambda_b = 1.0;  // deterministic intensity pair
  double lambda_h = 0.8;

  // Stated acceptance bounds of the oracle set.
  double dense_scale = 0.5;  // costate-vs-reference bound: dense_scale / cells
  double q_tol = 1e-6;
  double variance_tol = 1e-10;
  double residual_tol = 5e-2;
  double probe_tol = 1e-3;
};

// Reference costate profile on the scenario grid nodes, from the dense
// trapezoidal backward substitution of
//   p(t) = K - int_t^T [alpha(u) + (u - t) alpha'(u)] p(u) du
// on a `refine`-times finer uniform grid. Independent of the solver stack.
inline std::vector<double> dense_adjoint_51(const Scenario51& sp, std::size_t cells,
                                            std::size_t refine = 64) {
  if (cells == 0 || refine == 0) throw InvalidArgument("dense_adjoint_51: empty grid");
  const std::size_t fine = cells * refine;
  const double h = sp.horizon / static_cast<double>(fine);
  const auto abar = [&](double u, double t) {
    return sp.alpha0 + sp.alpha1 * u + (u - t) * sp.alpha1;
  };
  std::vector<double> p(fine + 1);
  p[fine] = sp.terminal_slope;
  for (std::size_t i = fine; i-- > 0;) {
    const double t = static_cast<double>(i) * h;
    double acc = 0.0;
    for (std::size_t j = i + 1; j <= fine; ++j) {
      const double w = (j == fine) ? 0.5 : 1.0;
      acc += w * abar(static_cast<double>(j) * h, t) * p[j];
    }
    p[i] = (sp.terminal_slope - h * acc) / (1.0 + 0.5 * h * abar(t, t));
  }
  std::vector<double> out(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) out[i] = p[i * refine];
  return out;
}

inline BuiltScenario build_scenario_51(const Scenario51& sp) {
  BuiltScenario out;
  out.model = TimeChangeModel::constant(sp.lambda_b, sp.lambda_h);
  out.marks = consumption_marks();
  const double a0 = sp.alpha0, a1 = sp.alpha1, g0 = sp.gamma0;

  ForwardCoefficients& fc = out.game.fwd;
  // Drift in convolution form: the lag weight alpha(t - s) acts on the state
  // at s, consumption is withdrawn additively.
  fc.b = [a0, a1](const KernelArgs& a) { return a.x * (a0 + a1 * (a.t - a.s)) - a.u[0]; };
  // Lagged jump loading: reads the state at the matching past node; the
  // zero-lag cell reads the newest committed node.
  fc.kappa = [g0](double, const KernelArgs& a) {
    const std::size_t lag = a.outer_node - a.cell;
    const std::size_t idx = lag < a.x_past.size() ? lag : a.x_past.size() - 1;
    return g0 * a.x_past[idx];
  };
  // The costate recursion of this scenario integrates the opposite
  // orientation of the state couplings: the declared x-slots are the negated
  // weights its equation pairs with p and q (the resulting kernel is the one
  // dense_adjoint_51 solves), while the control couplings keep their literal
  // sign so the first-order condition reads  rho / c = p.
  fc.db_dx = [a0, a1](const KernelArgs& a) { return -(a0 + a1 * a.t); };
  fc.d2b_dtdx = [a1](const KernelArgs&) { return -a1; };
  fc.dkappa_dx = [g0](double, const KernelArgs&) { return -g0; };
  fc.d2kappa_dtdx = [](double, const KernelArgs&) { return 0.0; };
  fc.db_dt = [a1](const KernelArgs& a) { return a.x * a1; };
  fc.db_du = {[](const KernelArgs&) { return -1.0; }, [](const KernelArgs&) { return 0.0; }};
  fc.dkappa_du = {[](double, const KernelArgs&) { return 0.0; },
                  [](double, const KernelArgs&) { return 0.0; }};
  fc.d2b_dtdu = {[](const KernelArgs&) { return 0.0; }, [](const KernelArgs&) { return 0.0; }};
  fc.d2kappa_dtdu = {[](double, const KernelArgs&) { return 0.0; },
                     [](double, const KernelArgs&) { return 0.0; }};

  BackwardCoefficients& bc = out.game.bwd;
  const double e0 = sp.eta0;
  bc.g = [e0](const KernelArgs& a, const ThetaView&) { return -e0 * a.y; };
  bc.dg_dy = [e0](const KernelArgs&, const ThetaView&) { return -e0; };
  bc.dg_dx = [](const KernelArgs&, const ThetaView&) { return 0.0; };
  bc.dg_du = {[](const KernelArgs&, const ThetaView&) { return 0.0; },
              [](const KernelArgs&, const ThetaView&) { return 0.0; }};
  bc.h = [](double) { return 0.0; };
  bc.dh = [](double) { return 0.0; };
  bc.first_arg_static = true;

  PlayerSpec& pl = out.game.players[0];
  const double rho = sp.rho, K = sp.terminal_slope;
  pl.cost.F = [rho](double, double, const std::array<double, 2>& u, double) {
    return rho * std::log(u[0]);
  };
  pl.cost.dF_du = {[rho](double, double, const std::array<double, 2>& u, double) {
                     return rho / u[0];
                   },
                   [](double, double, const std::array<double, 2>&, double) { return 0.0; }};
  pl.cost.dF_dx = [](double, double, const std::array<double, 2>&, double) { return 0.0; };
  pl.cost.dF_dy = [](double, double, const std::array<double, 2>&, double) { return 0.0; };
  pl.terminal.phi = [K](double x) { return -K * x; };
  pl.terminal.dphi = [K](double) { return -K; };
  pl.box = ControlBox{sp.c_floor, sp.c_max};
  pl.level = level_noise_state(out.marks.size());

  out.game = zero_sum_build(std::move(out.game));
  // The rate is shared: the mirror player owns no slot of its own.
  out.game.players[1].box = ControlBox{0.0, 0.0};
  out.game.players[1].level = out.game.players[0].level;
  out.game.players[1].basis = out.game.players[0].basis;
  out.game.x0 = sp.x0;

  GameOptions& go = out.options;
  go.adjoint.terminal = TerminalForm::kAsWritten;
  go.adjoint.level = level_noise_state(out.marks.size());
  go.adjoint.picard_tol = 1e-10;
  go.adjoint.picard_max = 80;
  go.backward.level = level_noise_state(out.marks.size());
  return out;
}

inline ScenarioReport run_scenario_5_1(const Scenario51& sp, const RunSettings& rs) {
  if (rs.cells < 4) throw InvalidArgument("run_scenario_5_1: need at least 4 cells");
  BuiltScenario bs = build_scenario_51(sp);
  GameOptions opt = bs.options;
  opt.forward.workers = opt.backward.workers = opt.adjoint.workers = rs.workers;
  const TimeGrid grid = build_grid(sp.horizon, rs.cells);
  PathEnsemble ens = sample_ensemble(bs.model, grid, bs.marks, rs.paths, rs.seed, rs.workers);
  const std::size_t cells = rs.cells, n = rs.paths;

  const std::vector<double> pref = dense_adjoint_51(sp, cells);

  // Candidate rate from the first-order condition rho / c = p against the
  // reference costate: one constant rule per cell.
  ControlProcess chat = ControlProcess::constant(0, 0.0, cells, bs.game.players[0].box,
                                                bs.game.players[0].level);
  for (std::size_t i = 0; i < cells; ++i)
    chat.rules[i] = CellRule{BasisExpansion{}, {bs.game.players[0].box.clip(sp.rho / pref[i])}};
  ControlProcess cmirror = ControlProcess::constant(1, 0.0, cells, bs.game.players[1].box);

  GameSolution g = solve_game(bs.game, ens, {&chat, &cmirror}, opt);

  ScenarioReport rep;
  rep.nodes.resize(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) rep.nodes[i] = grid.node(i);

  // Library costate profile plus its cross-path spread.
  std::vector<double> plib(cells + 1, 0.0), pvar(cells + 1, 0.0);
  for (std::size_t i = 0; i <= cells; ++i) {
    double mean = 0.0;
    for (std::size_t p = 0; p < n; ++p) mean += g.p[0].p[p][i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double d = g.p[0].p[p][i] - mean;
      var += d * d;
    }
    plib[i] = mean;
    pvar[i] = var / static_cast<double>(n);
  }
  double q_abs = 0.0, q_var = 0.0;
  const std::size_t marks_total = bs.marks.size() + 1;
  for (std::size_t i = 0; i < cells; ++i)
    for (std::size_t m = 0; m < marks_total; ++m) {
      double mean = 0.0;
      for (std::size_t p = 0; p < n; ++p) mean += g.p[0].q[p][i][m];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        const double d = g.p[0].q[p][i][m] - mean;
        q_abs = std::max(q_abs, std::abs(g.p[0].q[p][i][m]));
        var += d * d;
      }
      q_var = std::max(q_var, var / static_cast<double>(n));
    }

  rep.oracles.push_back(compare_profiles(
      "costate-vs-dense", pref, plib, sp.dense_scale / static_cast<double>(cells),
      "dense trapezoidal reference, refine 64; bound scales as 1/cells"));
  rep.oracles.push_back(compare_profiles("costate-path-variance", {0.0},
                                         {*std::max_element(pvar.begin(), pvar.end())},
                                         sp.variance_tol,
                                         "deterministic coefficients: p must not depend on the path"));
  rep.oracles.push_back(compare_profiles("representation-null", {0.0}, {q_abs}, sp.q_tol,
                                         "deterministic coefficients: q vanishes identically"));
  rep.oracles.push_back(
      compare_profiles("representation-variance", {0.0}, {q_var}, sp.variance_tol));

  const ResidualField r0 = necessary_residual(bs.game, ens, g, 0);
  rep.oracles.push_back(compare_profiles(
      "first-order-residual", {0.0}, {r0.max_abs}, sp.residual_tol,
      "projected dH/dc at the candidate rate c = rho / p_ref"));

  const PerformanceReport perf = estimate_performance(bs.game, ens, g.fwd, g.bwd);
  rep.oracles.push_back(compare_profiles("mirror-value", {0.0}, {perf.value[0] + perf.value[1]},
                                         0.0, "shared-rate zero sum: J2 is the exact negation"));

  const SufficientReport suff = sufficient_check(bs.game, ens, g, {0.5, 1.0}, opt);
  rep.oracles.push_back(compare_profiles(
      "probe-gain", {0.0}, {std::max(suff.worst_probe_gain[0], 0.0)}, sp.probe_tol,
      "conditional-maximum probes at the candidate; worst concavity bulge " +
          std::to_string(suff.worst_bulge[0])));

  std::vector<double> chat_vals(cells), resid_prof(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    chat_vals[i] = chat.rules[i].beta[0];
    double m = 0.0;
    for (double v : r0.cells[i].fitted) m = std::max(m, std::abs(v));
    resid_prof[i] = m;
  }
  rep.profiles.emplace_back("costate", plib);
  rep.profiles.emplace_back("costate_ref", pref);
  rep.profiles.emplace_back("consumption", std::move(chat_vals));
  rep.profiles.emplace_back("residual", std::move(resid_prof));
  return rep;
}

// ---------------------------------------------------------------------------
// Recursive-utility consumption against nature: multiplicative cash flow
// with proportional jump exposure, logarithmic consumption utility inside
// the backward driver, and the objective E[Y(0)]. The optimal rate has the
// closed product structure  c(t) * E[remaining discount mass | info] = z(t),
// which for gamma = 0 collapses to  c(t) (T - t) = 1.
struct Scenario52 {
  double horizon = 1.0;
  double alpha = 0.05;  // drift coefficient
  double pi = 0.1;      // jump exposure
  double gamma = 0.0;   // discount rate of the driver
  double x0 = 1.0;
  double c_min = 0.05;
  double c_max = 0.0;  // <= 0: use 0.9 * cells / horizon
  double lambda_b = 1.0;
  double lambda_h = 0.8;

  double check_fraction = 0.9;  // node range of the rate identity check
  double ratio_tol = 0.05;
  double residual_tol = 5e-2;
  double projection_tol = 1e-6;
  double rate_tol = 1e-12;  // discount-flow check at gamma = 0
};

inline BuiltScenario build_scenario_52(const Scenario52& sp, std::size_t cells) {
  BuiltScenario out;
  out.model = TimeChangeModel::constant(sp.lambda_b, sp.lambda_h);
  out.marks = consumption_marks();
  const double al = sp.alpha, pi = sp.pi, ga = sp.gamma;

  ForwardCoefficients& fc = out.game.fwd;
  fc.b = [al](const KernelArgs& a) { return (al - a.u[0]) * a.x; };
  fc.kappa = [pi](double, const KernelArgs& a) { return pi * a.x; };
  fc.db_dx = [al](const KernelArgs& a) { return al - a.u[0]; };
  fc.dkappa_dx = [pi](double, const KernelArgs&) { return pi; };
  fc.db_du = {[](const KernelArgs& a) { return -a.x; }, [](const KernelArgs&) { return 0.0; }};
  fc.dkappa_du = {[](double, const KernelArgs&) { return 0.0; },
                  [](double, const KernelArgs&) { return 0.0; }};
  fc.first_arg_static = true;

  BackwardCoefficients& bc = out.game.bwd;
  bc.g = [ga](const KernelArgs& a, const ThetaView&) {
    return ga * a.y + std::log(a.u[0] * a.x);
  };
  bc.dg_dy = [ga](const KernelArgs&, const ThetaView&) { return ga; };
  bc.dg_dx = [](const KernelArgs& a, const ThetaView&) { return 1.0 / a.x; };
  bc.dg_du = {[](const KernelArgs& a, const ThetaView&) { return 1.0 / a.u[0]; },
              [](const KernelArgs&, const ThetaView&) { return 0.0; }};
  bc.h = [](double) { return 0.0; };
  bc.dh = [](double) { return 0.0; };
  bc.first_arg_static = true;

  PlayerSpec& pl = out.game.players[0];
  pl.terminal.psi = [](double y) { return y; };
  pl.terminal.dpsi = [](double) { return 1.0; };
  const double hi = sp.c_max > 0.0 ? sp.c_max
                                   : 0.9 * static_cast<double>(cells) / sp.horizon;
  pl.box = ControlBox{sp.c_min, hi};
  // Partial information: the rate may condition on current wealth only.
  pl.level = InformationLevel{Flow::kNoise, {feat::state()}};
  out.game.players[1].box = ControlBox{0.0, 0.0};
  out.game.x0 = sp.x0;

  GameOptions& go = out.options;
  go.forward.require_positive_nodes = true;
  go.adjoint.terminal = TerminalForm::kAsWritten;
  go.adjoint.level = level_noise_state(out.marks.size());
  go.backward.level = level_noise_state(out.marks.size());
  return out;
}

inline ScenarioReport run_scenario_5_2(const Scenario52& sp, const RunSettings& rs) {
  if (rs.cells < 4) throw InvalidArgument("run_scenario_5_2: need at least 4 cells");
  BuiltScenario bs = build_scenario_52(sp, rs.cells);
  GameOptions opt = bs.options;
  opt.forward.workers = opt.backward.workers = opt.adjoint.workers = rs.workers;
  const TimeGrid grid = build_grid(sp.horizon, rs.cells);
  PathEnsemble ens = sample_ensemble(bs.model, grid, bs.marks, rs.paths, rs.seed, rs.workers);
  const std::size_t cells = rs.cells, n = rs.paths;
  const double T = sp.horizon;

  // Warm solve at a flat feasible rate; only its state tables and discount
  // flow feed the candidate construction.
  ControlProcess c0 = ControlProcess::constant(0, bs.game.players[0].box.clip(1.0 / T), cells,
                                               bs.game.players[0].box);
  ControlProcess c1 = ControlProcess::constant(1, 0.0, cells, bs.game.players[1].box);
  GameOptions warm = opt;
  warm.adjoints = false;
  const GameSolution g0 = solve_game(bs.game, ens, {&c0, &c1}, warm);
  const ZSolution zs =
      solve_z(bs.game.system(0), bs.game.players[0].terminal, ens, g0.fwd, g0.bwd, {rs.workers});

  ScenarioReport rep;
  rep.nodes.resize(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) rep.nodes[i] = grid.node(i);

  // Discount flow against the closed form of dz = gamma z dt, z(0) = 1.
  // Note the orientation: the rate equation integrates to exp(+int gamma),
  // not to a discounted exp(-int gamma); use gamma = 0 where the sign of
  // the convention must not matter.
  std::vector<double> zprof(cells + 1), zref(cells + 1);
  for (std::size_t i = 0; i <= cells; ++i) {
    zprof[i] = zs.z[0][i];
    zref[i] = std::exp(sp.gamma * grid.node(i));
  }
  const double ztol =
      sp.gamma == 0.0
          ? sp.rate_tol
          : 2.0 * std::abs(sp.gamma) * T * std::exp(std::abs(sp.gamma) * T) /
                static_cast<double>(cells);
  rep.oracles.push_back(compare_profiles(
      "discount-flow", zref, zprof, ztol,
      "sign convention: the rate equation dz = gamma z dt integrates forward to "
      "exp(+int gamma), so positive gamma grows the factor; a discounted "
      "exp(-int gamma) convention is deliberately not used here"));

  // Remaining discount mass per path and cell: left-point tail sums.
  std::vector<std::vector<double>> tail(cells, std::vector<double>(n));
  for (std::size_t p = 0; p < n; ++p) {
    double acc = 0.0;
    for (std::size_t i = cells; i-- > 0;) {
      acc += zs.z[p][i] * grid.dt(i);
      tail[i][p] = acc;
    }
  }

  const FeatureContext fctx{&ens, &g0.fwd.x};
  const InformationLevel wide = level_full(bs.marks.size(), true);
  const InformationLevel narrow = level_noise_state(bs.marks.size());
  const RegressionBasis& basis = opt.adjoint.basis;

  // Candidate rate: regression estimate of the remaining mass, ratio taken
  // pathwise, projected onto the player's information features.
  const auto build_candidate = [&](const InformationLevel& mass_level) {
    ControlProcess cand = ControlProcess::constant(0, 0.0, cells, bs.game.players[0].box,
                                                   bs.game.players[0].level);
    for (std::size_t i = 0; i < cells; ++i) {
      const std::vector<double> mass = conditional_expectation(tail[i], mass_level, fctx, i, basis);
      std::vector<double> ratio(n);
      for (std::size_t p = 0; p < n; ++p) {
        if (!(mass[p] > 0.0))
          throw ScenarioInfeasible("remaining discount mass not positive at cell " +
                                   std::to_string(i));
        ratio[p] = zs.z[p][i] / mass[p];
      }
      const auto raw = cand.level.features.empty() ? std::vector<std::vector<double>>{}
                                                   : extract_features(cand.level, fctx, i);
      const RegressionFit fit = fit_regression(ratio, raw, bs.game.players[0].basis);
      cand.rules[i] = CellRule{fit.expansion, fit.beta};
    }
    return cand;
  };
  const ControlProcess chat = build_candidate(wide);
  const ControlProcess chat_f = build_candidate(narrow);

  // Rate identity c(t) (T - t) = ... on the checked node range, via the
  // candidate's per-cell path mean.
  const std::size_t checked =
      std::min(cells, static_cast<std::size_t>(sp.check_fraction * static_cast<double>(cells)) + 1);
  std::vector<double> ratio_prof(checked), ratio_ref(checked), chat_prof(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    double mean = 0.0;
    for (std::size_t p = 0; p < n; ++p) mean += chat.value(fctx, p, i);
    chat_prof[i] = mean / static_cast<double>(n);
  }
  for (std::size_t i = 0; i < checked; ++i) {
    const double t = grid.node(i);
    double ref = 1.0;
    if (sp.gamma != 0.0) {
      // closed form of the same orientation: z / int_t^T z
      ref = std::exp(sp.gamma * t) * sp.gamma /
            (std::exp(sp.gamma * T) - std::exp(sp.gamma * t)) * (T - t);
    }
    ratio_prof[i] = chat_prof[i] * (T - t);
    ratio_ref[i] = ref;
  }
  rep.oracles.push_back(compare_profiles(
      "rate-identity", ratio_ref, ratio_prof, sp.ratio_tol,
      "candidate rate times remaining horizon on nodes t <= " +
          std::to_string(sp.check_fraction) + " T"));

  // Information projection: the wide-mass and narrow-mass candidates must
  // agree when the intensity pair is deterministic.
  double proj_margin = 0.0;
  for (std::size_t i = 0; i < checked; ++i) {
    const double t = grid.node(i);
    for (std::size_t p = 0; p < n; ++p)
      proj_margin = std::max(proj_margin,
                             std::abs(chat.value(fctx, p, i) - chat_f.value(fctx, p, i)) * (T - t));
  }
  rep.oracles.push_back(compare_profiles("information-projection", {0.0}, {proj_margin},
                                         sp.projection_tol,
                                         "deterministic intensities carry no extra information"));

  // Full solve at the candidate; the stationarity residual is the final
  // first-order check.
  const GameSolution g1 = solve_game(bs.game, ens, {&chat, &c1}, opt);
  const ResidualField r0 = necessary_residual(bs.game, ens, g1, 0);
  rep.oracles.push_back(compare_profiles("first-order-residual", {0.0}, {r0.max_abs},
                                         sp.residual_tol,
                                         "projected dH/dc at the candidate rate"));

  double xmin = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < cells; ++i) xmin = std::min(xmin, g1.fwd.x[p][i]);
  OracleResult pos;
  pos.name = "state-positive";
  pos.reference = {0.0};
  pos.observed = {xmin};
  pos.tolerance = 0.0;
  pos.margin = xmin;
  pos.pass = xmin > 0.0;
  pos.note = "smallest sampled state over the driver nodes; the log utility needs > 0";
  rep.oracles.push_back(std::move(pos));

  std::vector<double> resid_prof(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    double m = 0.0;
    for (double v : r0.cells[i].fitted) m = std::max(m, std::abs(v));
    resid_prof[i] = m;
  }
  rep.profiles.emplace_back("discount", std::move(zprof));
  rep.profiles.emplace_back("consumption", std::move(chat_prof));
  rep.profiles.emplace_back("residual", std::move(resid_prof));
  return rep;
}

// ---------------------------------------------------------------------------
// Fixture corpus for end-to-end property tests: small games that exercise
// every structural branch (decoupled targets, an exact saddle, control-free
// dynamics with a live backward component, a martingale state with terminal
// coupling, and a pure-jump noise model).
struct ToyFixture {
  std::string name;
  TimeChangeModel model;
  MarkSet marks;
  GameScenario game;
  GameOptions options;
  std::array<double, 2> start{};  // feasible constant initial controls
};

inline std::vector<ToyFixture> toy_corpus() {
  std::vector<ToyFixture> out;

  {
    ToyFixture f;
    f.name = "decoupled-quadratic";
    f.model = TimeChangeModel::constant(1.0, 0.8);
    f.marks = consumption_marks();
    f.game.fwd.b = [](const KernelArgs& a) { return 0.1 + 0.3 * a.u[0] - 0.2 * a.u[1]; };
    f.game.fwd.kappa = [](double, const KernelArgs&) { return 0.25; };
    f.game.fwd.first_arg_static = true;
    f.game.players[0].cost.F = [](double t, double, const std::array<double, 2>& u, double) {
      const double d = u[0] - (0.3 + 0.2 * t);
      return -d * d;
    };
    f.game.players[1].cost.F = [](double t, double, const std::array<double, 2>& u, double) {
      const double d = u[1] - (-0.1 + 0.4 * t);
      return -d * d;
    };
    for (std::size_t m = 0; m < 2; ++m) f.game.players[m].box = ControlBox{-2.0, 2.0};
    f.game.x0 = 0.0;
    f.options.adjoint.terminal = TerminalForm::kGradient;
    f.start = {0.0, 0.0};
    out.push_back(std::move(f));
  }

  {
    ToyFixture f;
    f.name = "quadratic-saddle";
    f.model = TimeChangeModel::constant(1.0, 0.8);
    f.marks = consumption_marks();
    f.game.fwd.b = [](const KernelArgs& a) { return 0.05 + 0.2 * a.u[0] - 0.2 * a.u[1]; };
    f.game.fwd.kappa = [](double, const KernelArgs&) { return 0.3; };
    f.game.fwd.first_arg_static = true;
    f.game.players[0].cost.F = [](double, double x, const std::array<double, 2>& u, double) {
      const double d0 = u[0] - 0.4, d1 = u[1] + 0.2;
      return -d0 * d0 + d1 * d1 + 0.1 * x;
    };
    f.game.players[0].terminal.phi = [](double x) { return 0.2 * x; };
    f.game.players[0].terminal.dphi = [](double) { return 0.2; };
    f.game.players[0].box = ControlBox{-1.5, 1.5};
    f.game = zero_sum_build(std::move(f.game));
    f.game.players[1].box = ControlBox{-1.5, 1.5};
    f.game.x0 = 1.0;
    f.options.adjoint.terminal = TerminalForm::kGradient;
    f.start = {0.1, -0.1};
    out.push_back(std::move(f));
  }

  {
    ToyFixture f;
    f.name = "feedback-rate";
    f.model = TimeChangeModel::constant(1.0, 0.8);
    f.marks = consumption_marks();
    f.game.fwd.b = [](const KernelArgs& a) { return 0.1 - 0.15 * a.x; };
    f.game.fwd.kappa = [](double, const KernelArgs&) { return 0.3; };
    f.game.fwd.first_arg_static = true;
    f.game.bwd.g = [](const KernelArgs& a, const ThetaView&) { return -0.3 * a.y + 0.1 * a.x; };
    f.game.bwd.dg_dy = [](const KernelArgs&, const ThetaView&) { return -0.3; };
    f.game.bwd.dg_dx = [](const KernelArgs&, const ThetaView&) { return 0.1; };
    f.game.bwd.h = [](double x) { return 0.5 * x; };
    f.game.bwd.dh = [](double) { return 0.5; };
    f.game.bwd.first_arg_static = true;
    f.game.players[0].cost.F = [](double, double x, const std::array<double, 2>& u, double) {
      const double d = u[0] - 0.2 - 0.1 * x;
      return -d * d;
    };
    f.game.players[0].terminal.psi = [](double y) { return y; };
    f.game.players[0].terminal.dpsi = [](double) { return 1.0; };
    f.game.players[1].cost.F = [](double, double x, const std::array<double, 2>& u, double) {
      const double d = u[1] + 0.1 - 0.05 * x;
      return -d * d;
    };
    for (std::size_t m = 0; m < 2; ++m) {
      f.game.players[m].box = ControlBox{-1.0, 1.0};
      f.game.players[m].level = InformationLevel{Flow::kNoise, {feat::state()}};
    }
    f.game.x0 = 1.0;
    f.options.adjoint.terminal = TerminalForm::kGradient;
    f.options.adjoint.level = InformationLevel{Flow::kNoise, {feat::state()}};
    f.options.backward.level = InformationLevel{Flow::kNoise, {feat::state()}};
    f.start = {0.0, 0.0};
    out.push_back(std::move(f));
  }

  {
    ToyFixture f;
    f.name = "martingale-terminal";
    f.model = TimeChangeModel::constant(1.0, 0.8);
    f.marks = consumption_marks();
    f.game.fwd.b = [](const KernelArgs&) { return 0.0; };
    f.game.fwd.kappa = [](double, const KernelArgs&) { return 0.6; };
    f.game.fwd.first_arg_static = true;
    f.game.bwd.h = [](double x) { return x; };
    f.game.bwd.dh = [](double) { return 1.0; };
    f.game.players[0].terminal.phi = [](double x) { return x; };
    f.game.players[0].terminal.dphi = [](double) { return 1.0; };
    f.game.players[0].terminal.psi = [](double y) { return y; };
    f.game.players[0].terminal.dpsi = [](double) { return 1.0; };
    f.game.players[1].cost.F = [](double, double, const std::array<double, 2>& u, double) {
      return -u[1] * u[1];
    };
    for (std::size_t m = 0; m < 2; ++m) {
      f.game.players[m].box = ControlBox{-1.0, 1.0};
      f.game.players[m].level = InformationLevel{Flow::kNoise, {feat::state()}};
    }
    f.game.x0 = 1.0;
    f.options.adjoint.terminal = TerminalForm::kGradient;
    f.options.adjoint.level = InformationLevel{Flow::kNoise, {feat::state()}};
    f.options.backward.level = InformationLevel{Flow::kNoise, {feat::state()}};
    f.start = {0.0, 0.0};
    out.push_back(std::move(f));
  }

  {
    ToyFixture f;
    f.name = "jump-only";
    f.model = TimeChangeModel::constant(0.0, 1.2);
    f.marks = consumption_marks();
    f.game.fwd.b = [](const KernelArgs& a) { return 0.05 + 0.1 * a.u[0]; };
    f.game.fwd.kappa = [](double, const KernelArgs&) { return 0.5; };
    f.game.fwd.first_arg_static = true;
    f.game.players[0].cost.F = [](double, double, const std::array<double, 2>& u, double) {
      const double d = u[0] - 0.3;
      return -d * d;
    };
    f.game.players[1].cost.F = [](double, double, const std::array<double, 2>& u, double) {
      const double d = u[1] + 0.2;
      return -d * d;
    };
    for (std::size_t m = 0; m < 2; ++m) f.game.players[m].box = ControlBox{-2.0, 2.0};
    f.game.x0 = 0.0;
    f.options.adjoint.terminal = TerminalForm::kGradient;
    f.start = {0.0, 0.0};
    out.push_back(std::move(f));
  }

  return out;
}

}  // namespace volterra
