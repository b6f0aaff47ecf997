#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "volterra/adjoint.hpp"
#include "volterra/backward.hpp"
#include "volterra/common.hpp"
#include "volterra/control.hpp"
#include "volterra/features.hpp"
#include "volterra/forward.hpp"
#include "volterra/hamiltonian.hpp"
#include "volterra/noise.hpp"
#include "volterra/regression.hpp"

namespace volterra {

// One side of a two-player game: running and end-point rewards, the
// admissible control box, and the information the control may depend on.
struct PlayerSpec {
  RunningCost cost;
  TerminalCost terminal;
  ControlBox box;
  InformationLevel level = level_trivial();
  RegressionBasis basis;
};

// Shared state and backward dynamics plus both players' payoffs. Each player
// maximizes
//   J_m = E[ sum_i F_m(t_i, X_i, u_i, Y_i) dt_i + phi_m(X_T) + psi_m(Y_0) ].
struct GameScenario {
  ForwardCoefficients fwd;
  BackwardCoefficients bwd;
  std::array<PlayerSpec, 2> players{};
  double x0 = 0.0;

  HamiltonianSystem system(std::size_t m) const {
    return HamiltonianSystem{&fwd, &bwd, &players[m].cost};
  }
};

struct GameOptions {
  ForwardOptions forward;
  BackwardOptions backward;
  AdjointOptions adjoint;
  bool adjoints = true;  // stationarity work needs them; plain valuation does not
};

struct GameSolution {
  ForwardSolution fwd;
  BackwardSolution bwd;
  std::array<ZSolution, 2> z{};
  std::array<AdjointSolution, 2> p{};
  bool has_adjoints = false;
};

// Backward value of the scenario; a scenario without backward dynamics has
// Y identically zero and skips the solve.
inline BackwardSolution solve_backward(const GameScenario& scn, const PathEnsemble& ens,
                                       const ForwardSolution& fwd, const BackwardOptions& opt) {
  if (!scn.bwd.h && !scn.bwd.g) {
    BackwardSolution b;
    b.y.assign(ens.paths(), std::vector<double>(ens.grid.cells() + 1, 0.0));
    return b;
  }
  return solve_bsvie(scn.bwd, ens, fwd, opt);
}

// Full solve at fixed controls: state, backward value, then both players'
// adjoint pairs.
inline GameSolution solve_game(const GameScenario& scn, const PathEnsemble& ens,
                               std::array<const ControlProcess*, 2> controls,
                               const GameOptions& opt) {
  GameSolution sol;
  sol.fwd = solve_fsvie(scn.fwd, ens, controls, scn.x0, opt.forward);
  sol.bwd = solve_backward(scn, ens, sol.fwd, opt.backward);
  if (opt.adjoints) {
    for (std::size_t m = 0; m < 2; ++m) {
      const HamiltonianSystem sys = scn.system(m);
      ZOptions zo;
      zo.workers = opt.forward.workers;
      sol.z[m] = solve_z(sys, scn.players[m].terminal, ens, sol.fwd, sol.bwd, zo);
      sol.p[m] = solve_adjoint_p(sys, scn.players[m].terminal, ens, sol.fwd, sol.bwd, sol.z[m],
                                 opt.adjoint);
    }
    sol.has_adjoints = true;
  }
  return sol;
}

struct PerformanceReport {
  std::array<double, 2> value{};
  std::array<double, 2> se{};
  std::array<std::vector<double>, 2> per_path{};
};

// Monte Carlo estimate of both players' objectives. Reductions are serial so
// that exactly negated payoffs give exactly negated estimates.
inline PerformanceReport estimate_performance(const GameScenario& scn, const PathEnsemble& ens,
                                              const ForwardSolution& fwd,
                                              const BackwardSolution& bwd) {
  const std::size_t n = ens.paths();
  const std::size_t cells = ens.grid.cells();
  PerformanceReport rep;
  for (std::size_t m = 0; m < 2; ++m) {
    auto& pp = rep.per_path[m];
    pp.assign(n, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      double acc = 0.0;
      for (std::size_t i = 0; i < cells; ++i)
        acc += eval_F(scn.players[m].cost, ens.grid.node(i), fwd.x[p][i], fwd.u[p][i],
                      bwd.y[p][i]) *
               ens.grid.dt(i);
      acc += eval_phi(scn.players[m].terminal, fwd.x[p][cells]);
      acc += eval_psi(scn.players[m].terminal, bwd.y[p][0]);
      if (!std::isfinite(acc)) throw NumericalBlowup("objective not finite", cells);
      pp[p] = acc;
    }
    double mean = 0.0;
    for (double v : pp) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : pp) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n > 1 ? n - 1 : 1);
    rep.value[m] = mean;
    rep.se[m] = std::sqrt(var / static_cast<double>(n));
  }
  return rep;
}

// Evaluation point for player m's Hamiltonian partials on a solved game.
inline HamiltonianContext game_context(const PathEnsemble& ens, const GameSolution& g,
                                       std::size_t m, std::size_t path, std::size_t cell) {
  const std::size_t marks = ens.marks.size() + 1;
  HamiltonianContext ctx = make_context(ens, path, cell, g.fwd);
  ctx.y = g.bwd.y[path][cell];
  ctx.z = g.z[m].z[path][cell];
  ctx.p = g.p[m].p[path][cell];
  ctx.q = g.p[m].q[path][cell];
  ctx.p_nodes = std::span<const double>(g.p[m].p[path].data(), g.p[m].p[path].size());
  ctx.z_nodes = std::span<const double>(g.z[m].z[path].data(), g.z[m].z[path].size());
  ctx.bsol = &g.bwd;
  if (g.p[m].has_dp) ctx.dp = &g.p[m].dp;
  if (g.bwd.has_theta)
    for (std::size_t k = 0; k < marks; ++k) ctx.theta_diag[k] = g.bwd.theta_at(cell, path, cell, k, marks);
  return ctx;
}

// Stationarity residual of player m: the control partial of the Hamiltonian,
// projected cell by cell onto the player's own information. The projected
// values are the ascent direction used by the equilibrium search.
struct ResidualField {
  std::vector<RegressionFit> cells;      // per-cell conditional fit
  std::vector<std::vector<double>> raw;  // [cell][path] pathwise partials
  double max_abs = 0.0;                  // of projected values
  double rms = 0.0;
};

inline ResidualField necessary_residual(const GameScenario& scn, const PathEnsemble& ens,
                                        const GameSolution& g, std::size_t m) {
  if (!g.has_adjoints) throw InvalidArgument("necessary_residual: game solved without adjoints");
  const std::size_t n = ens.paths();
  const std::size_t cells = ens.grid.cells();
  const HamiltonianSystem sys = scn.system(m);
  const FeatureContext fctx{&ens, &g.fwd.x};

  ResidualField res;
  res.raw.assign(cells, std::vector<double>(n, 0.0));
  res.cells.resize(cells);
  double sq = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    auto& row = res.raw[i];
    for (std::size_t p = 0; p < n; ++p) {
      HamiltonianContext ctx = game_context(ens, g, m, p, i);
      row[p] = eval_dH_du(sys, ctx, m);
    }
    res.cells[i] =
        conditional_expectation_fit(row, scn.players[m].level, fctx, i, scn.players[m].basis);
    for (double v : res.cells[i].fitted) {
      res.max_abs = std::max(res.max_abs, std::fabs(v));
      sq += v * v;
    }
  }
  res.rms = std::sqrt(sq / static_cast<double>(n * cells));
  return res;
}

// One projected ascent step: refit each cell rule to the clipped current
// value plus step times the projected residual.
inline ControlProcess ascend_control(const GameScenario& scn, const PathEnsemble& ens,
                                     const GameSolution& g, std::size_t m,
                                     const ResidualField& res, const ControlProcess& current,
                                     double step) {
  const std::size_t n = ens.paths();
  const std::size_t cells = ens.grid.cells();
  const FeatureContext fctx{&ens, &g.fwd.x};
  ControlProcess next = current;
  next.pert.reset();
  std::vector<double> target(n);
  for (std::size_t i = 0; i < cells; ++i) {
    const auto raw = current.level.features.empty() ? std::vector<std::vector<double>>{}
                                                    : extract_features(current.level, fctx, i);
    for (std::size_t p = 0; p < n; ++p)
      target[p] = current.value(fctx, p, i) + step * res.cells[i].fitted[p];
    const RegressionFit fit = fit_regression(target, raw, scn.players[m].basis);
    next.rules[i] = CellRule{fit.expansion, fit.beta};
  }
  return next;
}

struct NashOptions {
  double step = 0.5;
  std::size_t max_rounds = 40;
  double tol = 1e-4;  // on the projected residual, both players
  GameOptions game;
};

struct NashReport {
  std::array<ControlProcess, 2> controls{};
  GameSolution solution;
  std::vector<std::array<double, 2>> residual_history;  // per round, max |residual|
  std::size_t rounds = 0;
  bool converged = false;
};

// Alternating projected residual ascent: player 0 steps, the game is
// re-solved, player 1 steps against the update.
inline NashReport find_nash(const GameScenario& scn, const PathEnsemble& ens,
                            std::array<ControlProcess, 2> init, const NashOptions& opt) {
  NashReport rep;
  rep.controls = std::move(init);
  for (std::size_t r = 0; r < opt.max_rounds; ++r) {
    GameSolution g = solve_game(scn, ens, {&rep.controls[0], &rep.controls[1]}, opt.game);
    const ResidualField r0 = necessary_residual(scn, ens, g, 0);
    const ResidualField r1 = necessary_residual(scn, ens, g, 1);
    rep.residual_history.push_back({r0.max_abs, r1.max_abs});
    rep.rounds = r + 1;
    if (r0.max_abs <= opt.tol && r1.max_abs <= opt.tol) {
      rep.converged = true;
      rep.solution = std::move(g);
      return rep;
    }
    rep.controls[0] = ascend_control(scn, ens, g, 0, r0, rep.controls[0], opt.step);
    GameSolution g2 = solve_game(scn, ens, {&rep.controls[0], &rep.controls[1]}, opt.game);
    const ResidualField r1b = necessary_residual(scn, ens, g2, 1);
    rep.controls[1] = ascend_control(scn, ens, g2, 1, r1b, rep.controls[1], opt.step);
  }
  rep.solution = solve_game(scn, ens, {&rep.controls[0], &rep.controls[1]}, opt.game);
  const ResidualField r0 = necessary_residual(scn, ens, rep.solution, 0);
  const ResidualField r1 = necessary_residual(scn, ens, rep.solution, 1);
  rep.residual_history.push_back({r0.max_abs, r1.max_abs});
  rep.converged = r0.max_abs <= opt.tol && r1.max_abs <= opt.tol;
  return rep;
}

struct PerturbationReport {
  double central = 0.0;    // common-noise central difference of J_m
  double predicted = 0.0;  // residual paired with the bump direction
  double eps = 0.0;
  double rel_gap = 0.0;
};

// Derivative of player m's objective along a windowed control bump, measured
// two independent ways: re-simulation on the same noise at +/- eps, and the
// pathwise residual paired with the bump direction.
inline PerturbationReport perturbation_derivative(const GameScenario& scn, const PathEnsemble& ens,
                                                  std::array<const ControlProcess*, 2> controls,
                                                  std::size_t m, ControlPerturbation pert,
                                                  const GameSolution& base,
                                                  const ResidualField& res,
                                                  const GameOptions& opt) {
  if (pert.hi_cell > ens.grid.cells() || pert.lo_cell >= pert.hi_cell)
    throw InvalidArgument("perturbation_derivative: empty cell window");
  const std::size_t n = ens.paths();
  const double w = scn.players[m].box.width();
  const double eps = 1e-4 * (std::isfinite(w) && w < 1e6 ? w : 1.0);

  const auto run = [&](double scale) {
    ControlProcess bumped = *controls[m];
    pert.scale = scale;
    bumped.pert = pert;
    std::array<const ControlProcess*, 2> cc = controls;
    cc[m] = &bumped;
    const ForwardSolution f = solve_fsvie(scn.fwd, ens, cc, scn.x0, opt.forward);
    const BackwardSolution b = solve_backward(scn, ens, f, opt.backward);
    return estimate_performance(scn, ens, f, b).value[m];
  };

  PerturbationReport rep;
  rep.eps = eps;
  rep.central = (run(eps) - run(-eps)) / (2.0 * eps);

  const FeatureContext fctx{&ens, &base.fwd.x};
  const auto& level = scn.players[m].level;
  std::vector<double> alpha(n, 0.0);
  std::vector<double> raw(level.features.size());
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t f = 0; f < raw.size(); ++f)
      raw[f] = level.features[f].fn(fctx, p, pert.lo_cell);
    alpha[p] = pert.alpha.eval(raw);
  }
  for (std::size_t j = pert.lo_cell; j < pert.hi_cell; ++j) {
    double pair = 0.0;
    for (std::size_t p = 0; p < n; ++p) pair += res.raw[j][p] * alpha[p];
    rep.predicted += pair / static_cast<double>(n) * ens.grid.dt(j);
  }
  rep.rel_gap = std::fabs(rep.central - rep.predicted) /
                std::max({std::fabs(rep.central), std::fabs(rep.predicted), 1e-12});
  return rep;
}

// Wraps player 0's payoffs into an exactly negated opponent. Negation
// commutes with every IEEE operation used downstream, so estimates and
// residuals of the built player are bitwise negations.
inline GameScenario zero_sum_build(GameScenario scn) {
  const PlayerSpec& a = scn.players[0];
  PlayerSpec& b = scn.players[1];
  const auto neg = [](const CostFn& f) -> CostFn {
    if (!f) return nullptr;
    return [f](double t, double x, const std::array<double, 2>& u, double y) {
      return -f(t, x, u, y);
    };
  };
  b.cost.F = neg(a.cost.F);
  b.cost.dF_dx = neg(a.cost.dF_dx);
  b.cost.dF_dy = neg(a.cost.dF_dy);
  for (std::size_t m = 0; m < 2; ++m) b.cost.dF_du[m] = neg(a.cost.dF_du[m]);
  const auto neg1 = [](const std::function<double(double)>& f) -> std::function<double(double)> {
    if (!f) return nullptr;
    return [f](double v) { return -f(v); };
  };
  b.terminal.phi = neg1(a.terminal.phi);
  b.terminal.dphi = neg1(a.terminal.dphi);
  b.terminal.psi = neg1(a.terminal.psi);
  b.terminal.dpsi = neg1(a.terminal.dpsi);
  return scn;
}

struct SaddleReport {
  std::array<double, 2> base{};
  std::array<double, 2> worst_gain{};  // best unilateral improvement found
};

// Probes constant unilateral deviations of each player on the whole horizon.
// At an equilibrium no probe should improve the deviating player's value.
inline SaddleReport saddle_check(const GameScenario& scn, const PathEnsemble& ens,
                                 std::array<const ControlProcess*, 2> controls,
                                 const std::vector<double>& shifts, const GameOptions& opt) {
  const auto value = [&](std::array<const ControlProcess*, 2> cc) {
    const ForwardSolution f = solve_fsvie(scn.fwd, ens, cc, scn.x0, opt.forward);
    const BackwardSolution b = solve_backward(scn, ens, f, opt.backward);
    return estimate_performance(scn, ens, f, b).value;
  };
  SaddleReport rep;
  rep.base = value(controls);
  rep.worst_gain = {-std::numeric_limits<double>::infinity(),
                    -std::numeric_limits<double>::infinity()};
  if (shifts.empty()) {
    rep.worst_gain = {0.0, 0.0};
    return rep;
  }
  for (std::size_t m = 0; m < 2; ++m)
    for (double d : shifts) {
      ControlProcess bumped = *controls[m];
      bumped.pert = ControlPerturbation{0, ens.grid.cells(), CellRule{BasisExpansion{}, {1.0}}, d};
      std::array<const ControlProcess*, 2> cc = controls;
      cc[m] = &bumped;
      rep.worst_gain[m] = std::max(rep.worst_gain[m], value(cc)[m] - rep.base[m]);
    }
  return rep;
}

struct SufficientReport {
  std::array<double, 2> worst_probe_gain{};  // conditional-max probes of H
  std::array<double, 2> worst_bulge{};       // midpoint concavity defect
};

// Verifies the candidate controls conditionally maximize each player's
// projected Hamiltonian: probing the control slot inside the box must not
// raise its ensemble mean, and symmetric probes must bend downward.
inline SufficientReport sufficient_check(const GameScenario& scn, const PathEnsemble& ens,
                                         const GameSolution& g, const std::vector<double>& fracs,
                                         const GameOptions&) {
  if (!g.has_adjoints) throw InvalidArgument("sufficient_check: game solved without adjoints");
  const std::size_t n = ens.paths();
  const std::size_t cells = ens.grid.cells();
  SufficientReport rep;
  rep.worst_probe_gain = {-std::numeric_limits<double>::infinity(),
                          -std::numeric_limits<double>::infinity()};
  rep.worst_bulge = rep.worst_probe_gain;
  if (fracs.empty()) {
    rep.worst_probe_gain = {0.0, 0.0};
    rep.worst_bulge = {0.0, 0.0};
    return rep;
  }
  for (std::size_t m = 0; m < 2; ++m) {
    const HamiltonianSystem sys = scn.system(m);
    const PlayerSpec& pl = scn.players[m];
    const ProjectedAdjoint proj =
        project_adjoint(ens, g.fwd, g.p[m], g.z[m], pl.level, pl.basis);
    const double w = pl.box.width();
    const double half = std::isfinite(w) && w < 1e6 ? 0.5 * w : 1.0;
    for (std::size_t i = 0; i < cells; ++i)
      for (double frac : fracs) {
        const double delta = frac * half;
        double up = 0.0, dn = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
          HamiltonianContext ctx = game_context(ens, g, m, p, i);
          const double u0 = ctx.u[m];
          const double base = eval_HF(sys, ctx, proj);
          ctx.u[m] = pl.box.clip(u0 + delta);
          const double hp = eval_HF(sys, ctx, proj);
          ctx.u[m] = pl.box.clip(u0 - delta);
          const double hm = eval_HF(sys, ctx, proj);
          up += hp - base;
          dn += hm - base;
        }
        up /= static_cast<double>(n);
        dn /= static_cast<double>(n);
        rep.worst_probe_gain[m] = std::max({rep.worst_probe_gain[m], up, dn});
        rep.worst_bulge[m] = std::max(rep.worst_bulge[m], up + dn);
      }
  }
  return rep;
}

}  // namespace volterra
