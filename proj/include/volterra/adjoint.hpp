#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "volterra/backward.hpp"
#include "volterra/common.hpp"
#include "volterra/features.hpp"
#include "volterra/forward.hpp"
#include "volterra/hamiltonian.hpp"
#include "volterra/na_derivative.hpp"
#include "volterra/noise.hpp"
#include "volterra/parallel.hpp"
#include "volterra/regression.hpp"

namespace volterra {

struct ZOptions {
  std::size_t workers = 1;
};

// First adjoint process: forward Euler driven by the y- and theta-partials
// of the Hamiltonian. Both partials are structurally free of p, so z is
// solved before the second adjoint.
struct ZSolution {
  std::vector<std::vector<double>> z;  // [path][node]
  double min_value = 0.0;              // pathwise minimum, sign monitor
};

inline ZSolution solve_z(const HamiltonianSystem& sys, const TerminalCost& tc,
                         const PathEnsemble& ens, const ForwardSolution& fwd,
                         const BackwardSolution& bsol, const ZOptions& opt = {}) {
  if (!sys.fwd || !sys.bwd) throw InvalidArgument("solve_z: system coefficients missing");
  const std::size_t n = ens.paths();
  const std::size_t cells = ens.grid.cells();
  const std::size_t marks = ens.marks.size() + 1;

  ZSolution sol;
  sol.z.assign(n, std::vector<double>(cells + 1, 0.0));
  std::vector<double> path_min(n, 0.0);

  parallel_for(n, opt.workers, [&](std::size_t p) {
    auto& zrow = sol.z[p];
    zrow[0] = eval_dpsi(tc, bsol.y[p][0]);
    double mn = zrow[0];
    for (std::size_t i = 0; i < cells; ++i) {
      HamiltonianContext ctx = make_context(ens, p, i, fwd);
      ctx.y = bsol.y[p][i];
      ctx.z = zrow[i];
      ctx.z_nodes = std::span<const double>(zrow.data(), i + 1);
      ctx.bsol = &bsol;
      if (bsol.has_theta)
        for (std::size_t m = 0; m < marks; ++m)
          ctx.theta_diag[m] = bsol.theta_at(i, p, i, m, marks);

      double acc = zrow[i] + eval_dH_dy(sys, ctx) * ens.grid.dt(i) +
                   eval_dH_dtheta(sys, ctx, 0) * ens.increment(p, i, 0);
      for (std::size_t k = 1; k < marks; ++k) {
        const double mass = ens.marks.mass(k - 1);
        if (mass > 0.0)
          acc += eval_dH_dtheta(sys, ctx, k) / mass * ens.increment(p, i, k);
      }
      if (!std::isfinite(acc)) throw NumericalBlowup("z dynamics produced a non-finite value", i + 1);
      zrow[i + 1] = acc;
      mn = std::min(mn, acc);
    }
    path_min[p] = mn;
  });

  sol.min_value = *std::min_element(path_min.begin(), path_min.end());
  return sol;
}

// Terminal condition for the second adjoint. kAsWritten pairs the negated
// terminal-reward slope with the payoff level times z(T); kGradient uses the
// plain chain rule on both terms.
enum class TerminalForm { kAsWritten, kGradient };

struct AdjointOptions {
  TerminalForm terminal = TerminalForm::kAsWritten;
  InformationLevel level;                      // conditioning for the backward step
  RegressionBasis basis;                       // projection basis
  std::optional<InformationLevel> pred_level;  // representation features (default: level)
  RegressionBasis q_basis;                     // representation-coefficient basis
  NaDerivativeOptions dp_options;              // noise-derivative tables of p
  std::size_t picard_max = 50;
  double picard_tol = 1e-6;
  std::size_t workers = 1;
};

struct AdjointSolution {
  std::vector<std::vector<double>> p;               // [path][node]
  std::vector<std::vector<std::vector<double>>> q;  // [path][cell][mark]
  std::vector<NaDerivativeField> dp;  // per node: noise derivative of p; empty unless active
  bool has_dp = false;
  std::size_t iterations = 0;
  std::vector<double> defects;
};

// Second adjoint: backward projected scheme for the state costate. The
// diagonal drift-slope term is treated semi-implicitly,
//   p_i * (1 - dt_i * E[b_x(t_i, t_i) | F_i]) = E[p_{i+1} + dt_i * R_i | F_i],
// where R_i collects every other x-partial term of the Hamiltonian evaluated
// on the previous outer iterate (anticipated p values, q, and the noise
// derivative tables stay frozen within a sweep). q comes from a joint
// regression of the one-step residual onto the cell's noise increments. The
// noise-derivative tables of p are maintained only when the analytic
// first-argument derivative of the noise kernel is supplied; without that
// callback the corresponding cross term is treated as structurally zero.
inline AdjointSolution solve_adjoint_p(const HamiltonianSystem& sys, const TerminalCost& tc,
                                       const PathEnsemble& ens, const ForwardSolution& fwd,
                                       const BackwardSolution& bsol, const ZSolution& zs,
                                       const AdjointOptions& opt) {
  if (!sys.fwd || !sys.bwd) throw InvalidArgument("solve_adjoint_p: system coefficients missing");
  const std::size_t n = ens.paths();
  const std::size_t cells = ens.grid.cells();
  const std::size_t marks = ens.marks.size() + 1;
  const InformationLevel& pred = opt.pred_level ? *opt.pred_level : opt.level;
  const bool need_dp = static_cast<bool>(sys.fwd->dkappa_dt) && !sys.fwd->first_arg_static;
  const FeatureContext fctx{&ens, &fwd.x};

  AdjointSolution sol;
  sol.p.assign(n, std::vector<double>(cells + 1, 0.0));
  sol.q.assign(n, std::vector<std::vector<double>>(cells, std::vector<double>(marks, 0.0)));
  sol.has_dp = need_dp;

  for (std::size_t p = 0; p < n; ++p) {
    const double xT = fwd.x[p][cells];
    const double zT = zs.z[p][cells];
    const double pT = opt.terminal == TerminalForm::kAsWritten
                          ? -eval_dphi(tc, xT) + eval_h(*sys.bwd, xT) * zT
                          : eval_dphi(tc, xT) + eval_dh(*sys.bwd, xT) * zT;
    if (!std::isfinite(pT)) throw NumericalBlowup("adjoint terminal value non-finite", cells);
    std::fill(sol.p[p].begin(), sol.p[p].end(), pT);
  }

  auto refresh_dp = [&](std::vector<NaDerivativeField>& dp) {
    dp.resize(cells);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < cells; ++j) {
      for (std::size_t p = 0; p < n; ++p) col[p] = sol.p[p][j];
      dp[j] = na_derivative(col, ens, fctx, opt.dp_options);
    }
  };
  if (need_dp) refresh_dp(sol.dp);

  std::vector<std::vector<double>> p_prev;
  auto q_prev = sol.q;
  std::vector<std::vector<double>> rest_store(cells, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> bx_store(cells, std::vector<double>(n, 0.0));
  std::vector<double> resp(n), eta(n);
  std::size_t rising = 0;
  bool converged = false;

  for (std::size_t it = 0; it < opt.picard_max; ++it) {
    p_prev = sol.p;
    q_prev = sol.q;

    for (std::size_t ii = cells; ii-- > 0;) {
      const double dt = ens.grid.dt(ii);
      auto& rest = rest_store[ii];
      auto& bx = bx_store[ii];
      parallel_for(n, opt.workers, [&](std::size_t p) {
        HamiltonianContext ctx = make_context(ens, p, ii, fwd);
        ctx.y = bsol.y[p][ii];
        ctx.z = zs.z[p][ii];
        ctx.p = 0.0;  // diagonal drift-slope term handled implicitly
        ctx.q = q_prev[p][ii];
        ctx.p_nodes = std::span<const double>(p_prev[p].data(), p_prev[p].size());
        ctx.z_nodes = std::span<const double>(zs.z[p].data(), zs.z[p].size());
        ctx.bsol = &bsol;
        if (need_dp) ctx.dp = &sol.dp;
        if (bsol.has_theta)
          for (std::size_t m = 0; m < marks; ++m)
            ctx.theta_diag[m] = bsol.theta_at(ii, p, ii, m, marks);
        rest[p] = eval_dH_dx(sys, ctx);
        bx[p] = eval_db_dx(*sys.fwd, detail::diag_args(ctx));
        resp[p] = sol.p[p][ii + 1] + dt * rest[p];
      });
      const std::vector<double> fit_resp =
          conditional_expectation(resp, opt.level, fctx, ii, opt.basis);
      const std::vector<double> fit_bx =
          conditional_expectation(bx, opt.level, fctx, ii, opt.basis);
      for (std::size_t p = 0; p < n; ++p) {
        const double denom = 1.0 - dt * fit_bx[p];
        if (!(std::fabs(denom) > 0.05))
          throw NumericalBlowup("adjoint diagonal step near-singular", ii);
        const double v = fit_resp[p] / denom;
        if (!std::isfinite(v)) throw NumericalBlowup("adjoint value non-finite", ii);
        sol.p[p][ii] = v;
      }
    }

    for (std::size_t ii = 0; ii < cells; ++ii) {
      const double dt = ens.grid.dt(ii);
      for (std::size_t p = 0; p < n; ++p)
        eta[p] = sol.p[p][ii + 1] + dt * (rest_store[ii][p] + bx_store[ii][p] * sol.p[p][ii]) -
                 sol.p[p][ii];
      const auto coef = detail::representation_cell(eta, ens, fctx, pred, opt.q_basis, ii);
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t m = 0; m < marks; ++m) sol.q[p][ii][m] = coef[m][p];
    }

    double change = 0.0, norm = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t i = 0; i <= cells; ++i) {
        const double d = sol.p[p][i] - p_prev[p][i];
        change += d * d;
        norm += sol.p[p][i] * sol.p[p][i];
      }
    const double count = static_cast<double>(n * (cells + 1));
    const double defect = std::sqrt(change / count) / (std::sqrt(norm / count) + 1.0);
    if (!sol.defects.empty() && defect > sol.defects.back()) {
      if (++rising >= 3)
        throw NoConvergence("adjoint fixed point diverging", sol.defects);
    } else {
      rising = 0;
    }
    sol.defects.push_back(defect);
    sol.iterations = it + 1;
    if (defect <= opt.picard_tol) {
      converged = true;
      break;
    }
    if (need_dp) refresh_dp(sol.dp);
  }

  if (!converged) throw NoConvergence("adjoint fixed point did not converge", sol.defects);
  if (need_dp) refresh_dp(sol.dp);
  return sol;
}

// Conditional projections of both adjoints onto a chosen information level,
// for assembling the projected Hamiltonian.
inline ProjectedAdjoint project_adjoint(const PathEnsemble& ens, const ForwardSolution& fwd,
                                        const AdjointSolution& adj, const ZSolution& zs,
                                        const InformationLevel& level,
                                        const RegressionBasis& basis) {
  const std::size_t n = ens.paths();
  const std::size_t cells = ens.grid.cells();
  const std::size_t marks = ens.marks.size() + 1;
  const FeatureContext fctx{&ens, &fwd.x};

  ProjectedAdjoint proj;
  proj.p.assign(n, std::vector<double>(cells + 1, 0.0));
  proj.z.assign(n, std::vector<double>(cells + 1, 0.0));
  proj.q.assign(n, std::vector<std::vector<double>>(cells, std::vector<double>(marks, 0.0)));

  std::vector<double> col(n);
  for (std::size_t i = 0; i <= cells; ++i) {
    const std::size_t cell = std::min(i, cells - 1);
    for (std::size_t p = 0; p < n; ++p) col[p] = adj.p[p][i];
    auto fit = conditional_expectation(col, level, fctx, cell, basis);
    for (std::size_t p = 0; p < n; ++p) proj.p[p][i] = fit[p];
    for (std::size_t p = 0; p < n; ++p) col[p] = zs.z[p][i];
    fit = conditional_expectation(col, level, fctx, cell, basis);
    for (std::size_t p = 0; p < n; ++p) proj.z[p][i] = fit[p];
  }
  for (std::size_t i = 0; i < cells; ++i)
    for (std::size_t m = 0; m < marks; ++m) {
      for (std::size_t p = 0; p < n; ++p) col[p] = adj.q[p][i][m];
      const auto fit = conditional_expectation(col, level, fctx, i, basis);
      for (std::size_t p = 0; p < n; ++p) proj.q[p][i][m] = fit[p];
    }
  return proj;
}

}  // namespace volterra
