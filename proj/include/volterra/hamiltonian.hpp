#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "volterra/backward.hpp"
#include "volterra/common.hpp"
#include "volterra/forward.hpp"
#include "volterra/na_derivative.hpp"
#include "volterra/noise.hpp"

namespace volterra {

using CostFn = std::function<double(double t, double x, const std::array<double, 2>& u, double y)>;

// Running reward of one player, with optional analytic partials (null slots
// fall back to central differences).
struct RunningCost {
  CostFn F;
  CostFn dF_dx;
  CostFn dF_dy;
  std::array<CostFn, 2> dF_du{};
};

inline double eval_F(const RunningCost& rc, double t, double x, const std::array<double, 2>& u,
                     double y) {
  return rc.F ? rc.F(t, x, u, y) : 0.0;
}

inline double eval_dF_dx(const RunningCost& rc, double t, double x, const std::array<double, 2>& u,
                         double y) {
  if (!rc.F) return 0.0;
  if (rc.dF_dx) return rc.dF_dx(t, x, u, y);
  const double h = fd_step(x);
  return (rc.F(t, x + h, u, y) - rc.F(t, x - h, u, y)) / (2.0 * h);
}

inline double eval_dF_dy(const RunningCost& rc, double t, double x, const std::array<double, 2>& u,
                         double y) {
  if (!rc.F) return 0.0;
  if (rc.dF_dy) return rc.dF_dy(t, x, u, y);
  const double h = fd_step(y);
  return (rc.F(t, x, u, y + h) - rc.F(t, x, u, y - h)) / (2.0 * h);
}

inline double eval_dF_du(const RunningCost& rc, std::size_t m, double t, double x,
                         const std::array<double, 2>& u, double y) {
  if (!rc.F) return 0.0;
  if (rc.dF_du[m]) return rc.dF_du[m](t, x, u, y);
  const double h = fd_step(u[m]);
  std::array<double, 2> up = u, um = u;
  up[m] += h;
  um[m] -= h;
  return (rc.F(t, x, up, y) - rc.F(t, x, um, y)) / (2.0 * h);
}

// End-point rewards: phi acts on the terminal state X(T), psi on the
// initial backward value Y(0). Null derivative slots fall back to central
// differences.
struct TerminalCost {
  std::function<double(double x)> phi;
  std::function<double(double x)> dphi;
  std::function<double(double y)> psi;
  std::function<double(double y)> dpsi;
};

inline double eval_phi(const TerminalCost& tc, double x) { return tc.phi ? tc.phi(x) : 0.0; }

inline double eval_dphi(const TerminalCost& tc, double x) {
  if (tc.dphi) return tc.dphi(x);
  if (!tc.phi) return 0.0;
  const double s = fd_step(x);
  return (tc.phi(x + s) - tc.phi(x - s)) / (2.0 * s);
}

inline double eval_psi(const TerminalCost& tc, double y) { return tc.psi ? tc.psi(y) : 0.0; }

inline double eval_dpsi(const TerminalCost& tc, double y) {
  if (tc.dpsi) return tc.dpsi(y);
  if (!tc.psi) return 0.0;
  const double s = fd_step(y);
  return (tc.psi(y + s) - tc.psi(y - s)) / (2.0 * s);
}

// Coefficient callbacks the Hamiltonian is assembled from.
struct HamiltonianSystem {
  const ForwardCoefficients* fwd = nullptr;
  const BackwardCoefficients* bwd = nullptr;
  const RunningCost* cost = nullptr;
};

// Evaluation point: one (path, node) with overridable scalar slots. Tables
// (p, z, state, representation fields) stay fixed while slots are bumped,
// which is what makes single-slot finite differences of the full value
// match the structural partial assembly.
struct HamiltonianContext {
  const PathEnsemble* ens = nullptr;
  std::size_t path = 0;
  std::size_t node = 0;

  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double p = 0.0;
  std::array<double, 2> u{0.0, 0.0};
  std::vector<double> q;           // representation of p at this cell, mark 0 = Brownian
  std::vector<double> theta_diag;  // theta(t, t, .), mark 0 = Brownian

  std::span<const double> p_nodes{};
  std::span<const double> z_nodes{};
  std::span<const double> x_nodes{};
  const BackwardSolution* bsol = nullptr;             // theta(t_j, t_i) and its slice derivative
  const std::vector<NaDerivativeField>* dp = nullptr;  // per node j: noise derivative of p(t_j)

  ThetaView theta_view() const {
    ThetaView th;
    if (!theta_diag.empty()) {
      th.brownian = theta_diag[0];
      th.jump = std::span<const double>(theta_diag.data() + 1, theta_diag.size() - 1);
    }
    return th;
  }
};

inline HamiltonianContext make_context(const PathEnsemble& ens, std::size_t path, std::size_t node,
                                       const ForwardSolution& fs) {
  if (node >= ens.grid.cells()) throw InvalidArgument("hamiltonian context: node must be < cells");
  HamiltonianContext ctx;
  ctx.ens = &ens;
  ctx.path = path;
  ctx.node = node;
  ctx.x = fs.x[path][node];
  ctx.u = fs.u[path][node];
  ctx.x_nodes = std::span<const double>(fs.x[path].data(), fs.x[path].size());
  ctx.q.assign(ens.marks.size() + 1, 0.0);
  ctx.theta_diag.assign(ens.marks.size() + 1, 0.0);
  return ctx;
}

namespace detail {

inline KernelArgs diag_args(const HamiltonianContext& ctx) {
  const TimeGrid& grid = ctx.ens->grid;
  KernelArgs a;
  a.t = grid.node(ctx.node);
  a.s = a.t;
  a.lambda_b = ctx.ens->tc[ctx.path].lambda_b[ctx.node];
  a.lambda_h = ctx.ens->tc[ctx.path].lambda_h[ctx.node];
  a.u = ctx.u;
  a.x = ctx.x;
  a.y = ctx.y;
  if (!ctx.x_nodes.empty())
    a.x_past = std::span<const double>(ctx.x_nodes.data(), ctx.node + 1);
  a.outer_node = ctx.node;
  a.cell = ctx.node;
  return a;
}

// Kernel arguments for the two-time sums: current time t_i in the slot
// `inner`, the summation node t_j in the slot `outer`. State, controls, y
// and theta come from the context; intensities from the summation cell.
inline KernelArgs cross_args(const HamiltonianContext& ctx, std::size_t j) {
  const TimeGrid& grid = ctx.ens->grid;
  KernelArgs a;
  a.t = grid.node(j);
  a.s = grid.node(ctx.node);
  a.lambda_b = ctx.ens->tc[ctx.path].lambda_b[j];
  a.lambda_h = ctx.ens->tc[ctx.path].lambda_h[j];
  a.u = ctx.u;
  a.x = ctx.x;
  a.y = ctx.y;
  if (!ctx.x_nodes.empty())
    a.x_past = std::span<const double>(ctx.x_nodes.data(), ctx.node + 1);
  a.outer_node = j;
  a.cell = ctx.node;
  return a;
}

}  // namespace detail

// Diagonal part: running reward plus the first-order pairings of the
// coefficients at (t, t) with the costate, its representation, and the
// backward costate.
inline double eval_H0(const HamiltonianSystem& sys, const HamiltonianContext& ctx) {
  const KernelArgs a = detail::diag_args(ctx);
  const TimeGrid& grid = ctx.ens->grid;
  double h = eval_F(*sys.cost, grid.node(ctx.node), ctx.x, ctx.u, ctx.y);
  h += sys.fwd->b(a) * ctx.p;
  h += sys.fwd->kappa(0.0, a) * ctx.q[0] * a.lambda_b;
  for (std::size_t k = 0; k < ctx.ens->marks.size(); ++k)
    h += sys.fwd->kappa(ctx.ens->marks.point(k), a) * ctx.q[k + 1] * a.lambda_h *
         ctx.ens->marks.mass(k);
  h += eval_g(*sys.bwd, a, ctx.theta_view()) * ctx.z;
  return h;
}

// Volterra correction: future sensitivity of the drift/noise kernels to the
// current time paired with the costate path and its noise derivative, plus
// past sensitivity of the driver to its slice time paired with the backward
// costate, including the drift of the representation in its slice argument.
inline double eval_H1(const HamiltonianSystem& sys, const HamiltonianContext& ctx) {
  const TimeGrid& grid = ctx.ens->grid;
  const std::size_t cells = grid.cells();
  const std::size_t marks = ctx.ens->marks.size() + 1;
  const std::size_t i = ctx.node;
  double h = 0.0;

  if (!sys.fwd->first_arg_static) {
    for (std::size_t j = i; j < cells; ++j) {
      const KernelArgs a = detail::cross_args(ctx, j);
      const double pj = j < ctx.p_nodes.size() ? ctx.p_nodes[j] : 0.0;
      h += eval_db_dt(*sys.fwd, a) * pj * grid.dt(j);
      if (ctx.dp) {
        for (std::size_t m = 0; m < marks; ++m) {
          const double z = m == 0 ? 0.0 : ctx.ens->marks.point(m - 1);
          const double dpv = (*ctx.dp)[j].at(ctx.path, i, m);
          h += eval_dkappa_dt(*sys.fwd, z, a) * dpv * ctx.ens->weight(ctx.path, j, m);
        }
      }
    }
  }

  const ThetaView th = ctx.theta_view();
  const bool past_t = has_first_arg_terms(*sys.bwd);
  const bool past_theta = ctx.bsol && ctx.bsol->has_theta && has_theta_terms(*sys.bwd);
  if (past_t || past_theta) {
    for (std::size_t j = 0; j < i; ++j) {
      const KernelArgs a = detail::cross_args(ctx, j);
      const double zj = j < ctx.z_nodes.size() ? ctx.z_nodes[j] : 0.0;
      if (past_t) h += eval_dg_dt(*sys.bwd, a, th) * zj * grid.dt(j);
      if (past_theta) {
        for (std::size_t m = 0; m < marks; ++m)
          h += eval_dg_dtheta(*sys.bwd, m, a, th) *
               ctx.bsol->dtheta_dt_at(j, ctx.path, i, m, marks) * zj * grid.dt(j);
      }
    }
  }
  return h;
}

inline double eval_H(const HamiltonianSystem& sys, const HamiltonianContext& ctx) {
  return eval_H0(sys, ctx) + eval_H1(sys, ctx);
}

// Per-path conditional-expectation estimates of the costate triple; used to
// evaluate the Hamiltonian on projected information.
struct ProjectedAdjoint {
  std::vector<std::vector<double>> p;  // [path][node]
  std::vector<std::vector<double>> z;  // [path][node]
  std::vector<std::vector<std::vector<double>>> q;  // [path][cell][mark]
};

inline double eval_HF(const HamiltonianSystem& sys, HamiltonianContext ctx,
                      const ProjectedAdjoint& proj) {
  ctx.p = proj.p[ctx.path][ctx.node];
  ctx.z = proj.z[ctx.path][ctx.node];
  ctx.q = proj.q[ctx.path][ctx.node];
  ctx.p_nodes = std::span<const double>(proj.p[ctx.path].data(), proj.p[ctx.path].size());
  ctx.z_nodes = std::span<const double>(proj.z[ctx.path].data(), proj.z[ctx.path].size());
  return eval_H(sys, ctx);
}

// ---- structural partial derivatives ----

inline double eval_dH_dx(const HamiltonianSystem& sys, const HamiltonianContext& ctx) {
  const KernelArgs a = detail::diag_args(ctx);
  const TimeGrid& grid = ctx.ens->grid;
  const std::size_t cells = grid.cells();
  const std::size_t marks = ctx.ens->marks.size() + 1;
  const std::size_t i = ctx.node;
  const ThetaView th = ctx.theta_view();

  double d = eval_dF_dx(*sys.cost, grid.node(i), ctx.x, ctx.u, ctx.y);
  d += eval_db_dx(*sys.fwd, a) * ctx.p;
  d += eval_dkappa_dx(*sys.fwd, 0.0, a) * ctx.q[0] * a.lambda_b;
  for (std::size_t k = 0; k < ctx.ens->marks.size(); ++k)
    d += eval_dkappa_dx(*sys.fwd, ctx.ens->marks.point(k), a) * ctx.q[k + 1] * a.lambda_h *
         ctx.ens->marks.mass(k);
  d += eval_dg_dx(*sys.bwd, a, th) * ctx.z;

  if (!sys.fwd->first_arg_static) {
    for (std::size_t j = i; j < cells; ++j) {
      const KernelArgs c = detail::cross_args(ctx, j);
      const double pj = j < ctx.p_nodes.size() ? ctx.p_nodes[j] : 0.0;
      d += eval_d2b_dtdx(*sys.fwd, c) * pj * grid.dt(j);
      if (ctx.dp) {
        for (std::size_t m = 0; m < marks; ++m) {
          const double z = m == 0 ? 0.0 : ctx.ens->marks.point(m - 1);
          d += eval_d2kappa_dtdx(*sys.fwd, z, c) * (*ctx.dp)[j].at(ctx.path, i, m) *
               ctx.ens->weight(ctx.path, j, m);
        }
      }
    }
  }
  if (has_first_arg_terms(*sys.bwd)) {
    for (std::size_t j = 0; j < i; ++j) {
      const KernelArgs c = detail::cross_args(ctx, j);
      const double zj = j < ctx.z_nodes.size() ? ctx.z_nodes[j] : 0.0;
      d += eval_d2g_dtdx(*sys.bwd, c, th) * zj * grid.dt(j);
    }
  }
  return d;
}

inline double eval_dH_dy(const HamiltonianSystem& sys, const HamiltonianContext& ctx) {
  const KernelArgs a = detail::diag_args(ctx);
  const TimeGrid& grid = ctx.ens->grid;
  const ThetaView th = ctx.theta_view();
  double d = eval_dF_dy(*sys.cost, grid.node(ctx.node), ctx.x, ctx.u, ctx.y);
  d += eval_dg_dy(*sys.bwd, a, th) * ctx.z;
  if (has_first_arg_terms(*sys.bwd)) {
    for (std::size_t j = 0; j < ctx.node; ++j) {
      const KernelArgs c = detail::cross_args(ctx, j);
      const double zj = j < ctx.z_nodes.size() ? ctx.z_nodes[j] : 0.0;
      d += eval_d2g_dtdy(*sys.bwd, c, th) * zj * grid.dt(j);
    }
  }
  return d;
}

inline double eval_dH_dtheta(const HamiltonianSystem& sys, const HamiltonianContext& ctx,
                             std::size_t mark) {
  const KernelArgs a = detail::diag_args(ctx);
  const TimeGrid& grid = ctx.ens->grid;
  const ThetaView th = ctx.theta_view();
  double d = eval_dg_dtheta(*sys.bwd, mark, a, th) * ctx.z;
  if (has_first_arg_terms(*sys.bwd)) {
    for (std::size_t j = 0; j < ctx.node; ++j) {
      const KernelArgs c = detail::cross_args(ctx, j);
      const double zj = j < ctx.z_nodes.size() ? ctx.z_nodes[j] : 0.0;
      d += eval_d2g_dtdtheta(*sys.bwd, mark, c, th) * zj * grid.dt(j);
    }
  }
  return d;
}

inline double eval_dH_du(const HamiltonianSystem& sys, const HamiltonianContext& ctx,
                         std::size_t m) {
  const KernelArgs a = detail::diag_args(ctx);
  const TimeGrid& grid = ctx.ens->grid;
  const std::size_t cells = grid.cells();
  const std::size_t marks = ctx.ens->marks.size() + 1;
  const std::size_t i = ctx.node;
  const ThetaView th = ctx.theta_view();

  double d = eval_dF_du(*sys.cost, m, grid.node(i), ctx.x, ctx.u, ctx.y);
  d += eval_db_du(*sys.fwd, m, a) * ctx.p;
  d += eval_dkappa_du(*sys.fwd, m, 0.0, a) * ctx.q[0] * a.lambda_b;
  for (std::size_t k = 0; k < ctx.ens->marks.size(); ++k)
    d += eval_dkappa_du(*sys.fwd, m, ctx.ens->marks.point(k), a) * ctx.q[k + 1] * a.lambda_h *
         ctx.ens->marks.mass(k);
  d += eval_dg_du(*sys.bwd, m, a, th) * ctx.z;

  if (!sys.fwd->first_arg_static) {
    for (std::size_t j = i; j < cells; ++j) {
      const KernelArgs c = detail::cross_args(ctx, j);
      const double pj = j < ctx.p_nodes.size() ? ctx.p_nodes[j] : 0.0;
      d += eval_d2b_dtdu(*sys.fwd, m, c) * pj * grid.dt(j);
      if (ctx.dp) {
        for (std::size_t km = 0; km < marks; ++km) {
          const double z = km == 0 ? 0.0 : ctx.ens->marks.point(km - 1);
          d += eval_d2kappa_dtdu(*sys.fwd, m, z, c) * (*ctx.dp)[j].at(ctx.path, i, km) *
               ctx.ens->weight(ctx.path, j, km);
        }
      }
    }
  }
  if (has_first_arg_terms(*sys.bwd)) {
    for (std::size_t j = 0; j < i; ++j) {
      const KernelArgs c = detail::cross_args(ctx, j);
      const double zj = j < ctx.z_nodes.size() ? ctx.z_nodes[j] : 0.0;
      d += eval_d2g_dtdu(*sys.bwd, m, c, th) * zj * grid.dt(j);
    }
  }
  return d;
}

struct HamiltonianPartials {
  double dx = 0.0;
  double dy = 0.0;
  std::array<double, 2> du{0.0, 0.0};
  std::vector<double> dtheta;
};

inline HamiltonianPartials eval_partials(const HamiltonianSystem& sys,
                                         const HamiltonianContext& ctx) {
  HamiltonianPartials out;
  out.dx = eval_dH_dx(sys, ctx);
  out.dy = eval_dH_dy(sys, ctx);
  out.du = {eval_dH_du(sys, ctx, 0), eval_dH_du(sys, ctx, 1)};
  const std::size_t marks = ctx.ens->marks.size() + 1;
  out.dtheta.resize(marks);
  for (std::size_t m = 0; m < marks; ++m) out.dtheta[m] = eval_dH_dtheta(sys, ctx, m);
  return out;
}

// ---- finite differences of the assembled value, for cross-checks ----

inline double fd_dH_dx(const HamiltonianSystem& sys, const HamiltonianContext& ctx) {
  const double h = fd_step(ctx.x);
  HamiltonianContext cp = ctx, cm = ctx;
  cp.x += h;
  cm.x -= h;
  return (eval_H(sys, cp) - eval_H(sys, cm)) / (2.0 * h);
}

inline double fd_dH_dy(const HamiltonianSystem& sys, const HamiltonianContext& ctx) {
  const double h = fd_step(ctx.y);
  HamiltonianContext cp = ctx, cm = ctx;
  cp.y += h;
  cm.y -= h;
  return (eval_H(sys, cp) - eval_H(sys, cm)) / (2.0 * h);
}

inline double fd_dH_dtheta(const HamiltonianSystem& sys, const HamiltonianContext& ctx,
                           std::size_t mark) {
  const double h = fd_step(ctx.theta_diag[mark]);
  HamiltonianContext cp = ctx, cm = ctx;
  cp.theta_diag[mark] += h;
  cm.theta_diag[mark] -= h;
  return (eval_H(sys, cp) - eval_H(sys, cm)) / (2.0 * h);
}

inline double fd_dH_du(const HamiltonianSystem& sys, const HamiltonianContext& ctx,
                       std::size_t m) {
  const double h = fd_step(ctx.u[m]);
  HamiltonianContext cp = ctx, cm = ctx;
  cp.u[m] += h;
  cm.u[m] -= h;
  return (eval_H(sys, cp) - eval_H(sys, cm)) / (2.0 * h);
}

}  // namespace volterra
