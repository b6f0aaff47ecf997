#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "volterra/common.hpp"
#include "volterra/control.hpp"
#include "volterra/noise.hpp"
#include "volterra/parallel.hpp"

namespace volterra {

// Arguments handed to two-time coefficient kernels. `t` is the first
// (outer) time argument, `s` the left endpoint of cell `cell`. State,
// controls and intensities are the values the kernel acts on; `x_past`
// exposes the state path for history-dependent kernels: in the forward
// solve every committed node (0..outer_node-1), in driver slices and
// Hamiltonian sums the nodes up to the evaluation cell.
struct KernelArgs {
  double t = 0.0;
  double s = 0.0;
  double lambda_b = 0.0;
  double lambda_h = 0.0;
  std::array<double, 2> u{0.0, 0.0};
  double x = 0.0;
  double y = 0.0;
  std::span<const double> x_past{};
  std::size_t outer_node = 0;
  std::size_t cell = 0;
};

using Kernel = std::function<double(const KernelArgs&)>;
using MarkKernel = std::function<double(double z, const KernelArgs&)>;

// Drift/noise kernels of a forward Volterra equation, plus optional
// analytic derivatives. Null derivative slots fall back to central
// differences of the kernel itself; kernels that read `x_past` or use
// index arithmetic must supply their own derivatives.
struct ForwardCoefficients {
  Kernel b;
  MarkKernel kappa;

  Kernel db_dt;
  MarkKernel dkappa_dt;

  Kernel db_dx;
  MarkKernel dkappa_dx;
  std::array<Kernel, 2> db_du{};
  std::array<MarkKernel, 2> dkappa_du{};

  Kernel d2b_dtdx;
  MarkKernel d2kappa_dtdx;
  std::array<Kernel, 2> d2b_dtdu{};
  std::array<MarkKernel, 2> d2kappa_dtdu{};

  // Both kernels ignore their first time argument; every derivative in it
  // is structurally zero and the Volterra correction terms drop out.
  bool first_arg_static = false;
};

inline double fd_step(double scale) {
  const double a = std::abs(scale);
  return 1e-5 * (a > 1.0 ? a : 1.0);
}

namespace detail {

template <class F>
double central_diff(F&& f, double at) {
  const double h = fd_step(at);
  return (f(at + h) - f(at - h)) / (2.0 * h);
}

template <class F>
double nested_diff(F&& f, double at1, double at2) {
  const double h1 = fd_step(at1), h2 = fd_step(at2);
  const double pp = f(at1 + h1, at2 + h2), pm = f(at1 + h1, at2 - h2);
  const double mp = f(at1 - h1, at2 + h2), mm = f(at1 - h1, at2 - h2);
  return (pp - pm - mp + mm) / (4.0 * h1 * h2);
}

}  // namespace detail

inline double eval_db_dt(const ForwardCoefficients& fc, const KernelArgs& a) {
  if (fc.first_arg_static) return 0.0;
  if (fc.db_dt) return fc.db_dt(a);
  return detail::central_diff(
      [&](double t) {
        KernelArgs b = a;
        b.t = t;
        return fc.b(b);
      },
      a.t);
}

inline double eval_dkappa_dt(const ForwardCoefficients& fc, double z, const KernelArgs& a) {
  if (fc.first_arg_static) return 0.0;
  if (fc.dkappa_dt) return fc.dkappa_dt(z, a);
  return detail::central_diff(
      [&](double t) {
        KernelArgs b = a;
        b.t = t;
        return fc.kappa(z, b);
      },
      a.t);
}

inline double eval_db_dx(const ForwardCoefficients& fc, const KernelArgs& a) {
  if (fc.db_dx) return fc.db_dx(a);
  return detail::central_diff(
      [&](double x) {
        KernelArgs b = a;
        b.x = x;
        return fc.b(b);
      },
      a.x);
}

inline double eval_dkappa_dx(const ForwardCoefficients& fc, double z, const KernelArgs& a) {
  if (fc.dkappa_dx) return fc.dkappa_dx(z, a);
  return detail::central_diff(
      [&](double x) {
        KernelArgs b = a;
        b.x = x;
        return fc.kappa(z, b);
      },
      a.x);
}

inline double eval_db_du(const ForwardCoefficients& fc, std::size_t m, const KernelArgs& a) {
  if (fc.db_du[m]) return fc.db_du[m](a);
  return detail::central_diff(
      [&](double u) {
        KernelArgs b = a;
        b.u[m] = u;
        return fc.b(b);
      },
      a.u[m]);
}

inline double eval_dkappa_du(const ForwardCoefficients& fc, std::size_t m, double z,
                             const KernelArgs& a) {
  if (fc.dkappa_du[m]) return fc.dkappa_du[m](z, a);
  return detail::central_diff(
      [&](double u) {
        KernelArgs b = a;
        b.u[m] = u;
        return fc.kappa(z, b);
      },
      a.u[m]);
}

inline double eval_d2b_dtdx(const ForwardCoefficients& fc, const KernelArgs& a) {
  if (fc.first_arg_static) return 0.0;
  if (fc.d2b_dtdx) return fc.d2b_dtdx(a);
  return detail::nested_diff(
      [&](double t, double x) {
        KernelArgs b = a;
        b.t = t;
        b.x = x;
        return fc.b(b);
      },
      a.t, a.x);
}

inline double eval_d2kappa_dtdx(const ForwardCoefficients& fc, double z, const KernelArgs& a) {
  if (fc.first_arg_static) return 0.0;
  if (fc.d2kappa_dtdx) return fc.d2kappa_dtdx(z, a);
  return detail::nested_diff(
      [&](double t, double x) {
        KernelArgs b = a;
        b.t = t;
        b.x = x;
        return fc.kappa(z, b);
      },
      a.t, a.x);
}

inline double eval_d2b_dtdu(const ForwardCoefficients& fc, std::size_t m, const KernelArgs& a) {
  if (fc.first_arg_static) return 0.0;
  if (fc.d2b_dtdu[m]) return fc.d2b_dtdu[m](a);
  return detail::nested_diff(
      [&](double t, double u) {
        KernelArgs b = a;
        b.t = t;
        b.u[m] = u;
        return fc.b(b);
      },
      a.t, a.u[m]);
}

inline double eval_d2kappa_dtdu(const ForwardCoefficients& fc, std::size_t m, double z,
                                const KernelArgs& a) {
  if (fc.first_arg_static) return 0.0;
  if (fc.d2kappa_dtdu[m]) return fc.d2kappa_dtdu[m](z, a);
  return detail::nested_diff(
      [&](double t, double u) {
        KernelArgs b = a;
        b.t = t;
        b.u[m] = u;
        return fc.kappa(z, b);
      },
      a.t, a.u[m]);
}

struct ForwardOptions {
  double blowup = 1e12;
  std::size_t workers = 1;
  // Check state positivity at nodes 0..N-1 (where drift/driver terms are
  // evaluated); a violation throws ScenarioInfeasible.
  bool require_positive_nodes = false;
};

struct ForwardSolution {
  std::vector<std::vector<double>> x;                // [path][node], nodes 0..N
  std::vector<std::vector<std::array<double, 2>>> u;  // [path][cell]
};

// Left-point Euler scheme for
//   X(t) = x0 + int_0^t b(t,s,...) ds + int_0^t int kappa(t,s,z,...) mu(ds dz)
// with the outer time argument re-evaluated at every node (O(N^2) kernel
// calls per path). The z = 0 slot of kappa multiplies the Brownian part.
inline ForwardSolution solve_fsvie(const ForwardCoefficients& fc, const PathEnsemble& ens,
                                   std::array<const ControlProcess*, 2> controls, double x0,
                                   const ForwardOptions& opt = {}) {
  if (!fc.b || !fc.kappa) throw InvalidArgument("solve_fsvie: b and kappa kernels are required");
  const TimeGrid& grid = ens.grid;
  const std::size_t cells = grid.cells();
  const std::size_t npaths = ens.paths();
  ForwardSolution sol;
  sol.x.assign(npaths, std::vector<double>(cells + 1, 0.0));
  sol.u.assign(npaths, std::vector<std::array<double, 2>>(cells, {0.0, 0.0}));

  FeatureContext ctx{&ens, &sol.x};
  parallel_for(npaths, opt.workers, [&](std::size_t p) {
    auto& xs = sol.x[p];
    auto& us = sol.u[p];
    xs[0] = x0;
    for (std::size_t i = 0; i < cells; ++i) {
      if (opt.require_positive_nodes && !(xs[i] > 0.0))
        throw ScenarioInfeasible("state not positive at node " + std::to_string(i) +
                                 " on path " + std::to_string(p) +
                                 " (x = " + std::to_string(xs[i]) + ")");
      for (std::size_t m = 0; m < 2; ++m)
        us[i][m] = controls[m] ? controls[m]->value(ctx, p, i) : 0.0;

      double acc = x0;
      const double t = grid.node(i + 1);
      for (std::size_t j = 0; j <= i; ++j) {
        KernelArgs a;
        a.t = t;
        a.s = grid.node(j);
        a.lambda_b = ens.tc[p].lambda_b[j];
        a.lambda_h = ens.tc[p].lambda_h[j];
        a.u = us[j];
        a.x = xs[j];
        a.y = 0.0;
        a.x_past = std::span<const double>(xs.data(), i + 1);
        a.outer_node = i + 1;
        a.cell = j;
        acc += fc.b(a) * grid.dt(j);
        acc += fc.kappa(0.0, a) * ens.increment(p, j, 0);
        for (std::size_t k = 0; k < ens.marks.size(); ++k)
          acc += fc.kappa(ens.marks.point(k), a) * ens.increment(p, j, k + 1);
      }
      if (!std::isfinite(acc) || std::abs(acc) > opt.blowup)
        throw NumericalBlowup("forward state diverged", i + 1);
      xs[i + 1] = acc;
    }
  });
  return sol;
}

struct MeanTestReport {
  std::vector<double> model_mean;  // per node, closed mean recursion
  std::vector<double> mc_mean;     // per node, ensemble average
  std::vector<double> se;          // per node
  double max_se_units = 0.0;
};

// Compares ensemble means of a solved path family against the deterministic
// mean recursion m(t_i) = x0 + sum_j [B0 + B1 m(t_j)] dt_j, where B0/B1 are
// read off the drift kernel at x = 0 and x = 1. Valid for drift kernels
// affine in x with deterministic time/control dependence and no path-history
// reads.
inline MeanTestReport forward_mean_test(const ForwardCoefficients& fc, const PathEnsemble& ens,
                                        const ForwardSolution& sol) {
  const TimeGrid& grid = ens.grid;
  const std::size_t cells = grid.cells();
  const std::size_t npaths = ens.paths();
  if (sol.x.size() != npaths) throw InvalidArgument("forward_mean_test: ensemble/solution mismatch");

  MeanTestReport rep;
  rep.model_mean.assign(cells + 1, 0.0);
  rep.mc_mean.assign(cells + 1, 0.0);
  rep.se.assign(cells + 1, 0.0);

  const std::vector<double> zeros(cells + 1, 0.0);
  std::vector<double> m(cells + 1, 0.0);
  m[0] = sol.x[0][0];
  for (std::size_t i = 0; i < cells; ++i) {
    double acc = m[0];
    for (std::size_t j = 0; j <= i; ++j) {
      KernelArgs a;
      a.t = grid.node(i + 1);
      a.s = grid.node(j);
      a.lambda_b = ens.tc[0].lambda_b[j];
      a.lambda_h = ens.tc[0].lambda_h[j];
      a.u = sol.u[0][j];
      a.x_past = std::span<const double>(zeros.data(), j + 1);
      a.outer_node = i + 1;
      a.cell = j;
      a.x = 0.0;
      const double b0 = fc.b(a);
      a.x = 1.0;
      const double b1 = fc.b(a) - b0;
      acc += (b0 + b1 * m[j]) * grid.dt(j);
    }
    m[i + 1] = acc;
  }
  rep.model_mean = m;

  for (std::size_t i = 0; i <= cells; ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t p = 0; p < npaths; ++p) {
      const double v = sol.x[p][i];
      s1 += v;
      s2 += v * v;
    }
    const double mean = s1 / static_cast<double>(npaths);
    const double var =
        (s2 / static_cast<double>(npaths) - mean * mean) * static_cast<double>(npaths) /
        static_cast<double>(npaths > 1 ? npaths - 1 : 1);
    rep.mc_mean[i] = mean;
    rep.se[i] = std::sqrt(var / static_cast<double>(npaths));
    if (rep.se[i] > 0.0) {
      const double units = std::abs(mean - m[i]) / rep.se[i];
      if (units > rep.max_se_units) rep.max_se_units = units;
    } else if (mean != m[i]) {
      rep.max_se_units = 1e300;
    }
  }
  return rep;
}

}  // namespace volterra
