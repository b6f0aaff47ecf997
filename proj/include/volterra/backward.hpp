#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "volterra/common.hpp"
#include "volterra/forward.hpp"
#include "volterra/na_derivative.hpp"
#include "volterra/noise.hpp"
#include "volterra/regression.hpp"

namespace volterra {

// Martingale-representation values handed to driver kernels: the Brownian
// slot plus one slot per jump mark.
struct ThetaView {
  double brownian = 0.0;
  std::span<const double> jump{};

  double at(std::size_t mark) const {  // mark 0 = Brownian
    if (mark == 0) return brownian;
    return mark - 1 < jump.size() ? jump[mark - 1] : 0.0;
  }
};

using Driver = std::function<double(const KernelArgs&, const ThetaView&)>;

// Driver and terminal functional of a backward Volterra equation
//   Y(t) = h(X(T)) - int_t^T g(t,s,...,Y(s),theta(t,s,.)) ds
//          + int_t^T int theta(t,s,z) mu(ds dz),
// plus optional analytic derivatives (null slots fall back to central
// differences of g). `uses_theta` must be set when g reads its theta
// argument; it turns on the inner fixed-point iteration and the per-slice
// representation tables.
struct BackwardCoefficients {
  Driver g;  // null means g == 0
  std::function<double(double x)> h;
  std::function<double(double x)> dh;  // null => finite difference of h

  Driver dg_dt;  // derivative in the first time argument
  Driver dg_dx;
  Driver dg_dy;
  Driver dg_dtheta0;
  std::function<double(std::size_t k, const KernelArgs&, const ThetaView&)> dg_dthetak;
  std::array<Driver, 2> dg_du{};

  Driver d2g_dtdx;
  Driver d2g_dtdy;
  Driver d2g_dtdtheta0;
  std::function<double(std::size_t k, const KernelArgs&, const ThetaView&)> d2g_dtdthetak;
  std::array<Driver, 2> d2g_dtdu{};

  bool uses_theta = false;
  // The driver ignores its first time argument; every derivative in it is
  // structurally zero.
  bool first_arg_static = false;
};

inline double eval_g(const BackwardCoefficients& bc, const KernelArgs& a, const ThetaView& th) {
  return bc.g ? bc.g(a, th) : 0.0;
}

// True when the driver can contribute first-time-argument derivative terms
// to the two-time sums (either via the driver itself or declared slots).
inline bool has_first_arg_terms(const BackwardCoefficients& bc) {
  return !bc.first_arg_static &&
         (bc.g || bc.dg_dt || bc.d2g_dtdx || bc.d2g_dtdy || bc.d2g_dtdtheta0 || bc.d2g_dtdthetak ||
          bc.d2g_dtdu[0] || bc.d2g_dtdu[1]);
}

inline bool has_theta_terms(const BackwardCoefficients& bc) {
  return bc.dg_dtheta0 || bc.dg_dthetak || (bc.g && bc.uses_theta);
}

inline double eval_h(const BackwardCoefficients& bc, double x) { return bc.h ? bc.h(x) : 0.0; }

inline double eval_dh(const BackwardCoefficients& bc, double x) {
  if (!bc.h) return 0.0;
  if (bc.dh) return bc.dh(x);
  const double s = fd_step(x);
  return (bc.h(x + s) - bc.h(x - s)) / (2.0 * s);
}

namespace detail {

template <class F>
double driver_diff_t(F&& call, const KernelArgs& a, const ThetaView& th) {
  const double h = fd_step(a.t);
  KernelArgs ap = a, am = a;
  ap.t += h;
  am.t -= h;
  return (call(ap, th) - call(am, th)) / (2.0 * h);
}

}  // namespace detail

inline double eval_dg_dt(const BackwardCoefficients& bc, const KernelArgs& a, const ThetaView& th) {
  if (bc.first_arg_static) return 0.0;
  if (bc.dg_dt) return bc.dg_dt(a, th);
  if (!bc.g) return 0.0;
  return detail::driver_diff_t(bc.g, a, th);
}

inline double eval_dg_dx(const BackwardCoefficients& bc, const KernelArgs& a, const ThetaView& th) {
  if (bc.dg_dx) return bc.dg_dx(a, th);
  if (!bc.g) return 0.0;
  const double h = fd_step(a.x);
  KernelArgs ap = a, am = a;
  ap.x += h;
  am.x -= h;
  return (bc.g(ap, th) - bc.g(am, th)) / (2.0 * h);
}

inline double eval_dg_dy(const BackwardCoefficients& bc, const KernelArgs& a, const ThetaView& th) {
  if (bc.dg_dy) return bc.dg_dy(a, th);
  if (!bc.g) return 0.0;
  const double h = fd_step(a.y);
  KernelArgs ap = a, am = a;
  ap.y += h;
  am.y -= h;
  return (bc.g(ap, th) - bc.g(am, th)) / (2.0 * h);
}

inline double eval_dg_du(const BackwardCoefficients& bc, std::size_t m, const KernelArgs& a,
                         const ThetaView& th) {
  if (bc.dg_du[m]) return bc.dg_du[m](a, th);
  if (!bc.g) return 0.0;
  const double h = fd_step(a.u[m]);
  KernelArgs ap = a, am = a;
  ap.u[m] += h;
  am.u[m] -= h;
  return (bc.g(ap, th) - bc.g(am, th)) / (2.0 * h);
}

inline double eval_dg_dtheta(const BackwardCoefficients& bc, std::size_t mark, const KernelArgs& a,
                             const ThetaView& th) {
  if (mark == 0 && bc.dg_dtheta0) return bc.dg_dtheta0(a, th);
  if (mark > 0 && bc.dg_dthetak) return bc.dg_dthetak(mark - 1, a, th);
  if (!bc.g || !bc.uses_theta) return 0.0;
  const double h = fd_step(th.at(mark));
  std::vector<double> jp(th.jump.begin(), th.jump.end());
  if (mark > 0 && jp.size() < mark) jp.resize(mark, 0.0);
  std::vector<double> jm = jp;
  double bp = th.brownian, bm = th.brownian;
  if (mark == 0) {
    bp += h;
    bm -= h;
  } else {
    jp[mark - 1] += h;
    jm[mark - 1] -= h;
  }
  return (bc.g(a, ThetaView{bp, jp}) - bc.g(a, ThetaView{bm, jm})) / (2.0 * h);
}

inline double eval_d2g_dtdx(const BackwardCoefficients& bc, const KernelArgs& a,
                            const ThetaView& th) {
  if (bc.first_arg_static) return 0.0;
  if (bc.d2g_dtdx) return bc.d2g_dtdx(a, th);
  if (!bc.g) return 0.0;
  return detail::driver_diff_t([&](const KernelArgs& b, const ThetaView& t2) {
    return eval_dg_dx(bc, b, t2);
  }, a, th);
}

inline double eval_d2g_dtdy(const BackwardCoefficients& bc, const KernelArgs& a,
                            const ThetaView& th) {
  if (bc.first_arg_static) return 0.0;
  if (bc.d2g_dtdy) return bc.d2g_dtdy(a, th);
  if (!bc.g) return 0.0;
  return detail::driver_diff_t([&](const KernelArgs& b, const ThetaView& t2) {
    return eval_dg_dy(bc, b, t2);
  }, a, th);
}

inline double eval_d2g_dtdu(const BackwardCoefficients& bc, std::size_t m, const KernelArgs& a,
                            const ThetaView& th) {
  if (bc.first_arg_static) return 0.0;
  if (bc.d2g_dtdu[m]) return bc.d2g_dtdu[m](a, th);
  if (!bc.g) return 0.0;
  return detail::driver_diff_t([&](const KernelArgs& b, const ThetaView& t2) {
    return eval_dg_du(bc, m, b, t2);
  }, a, th);
}

inline double eval_d2g_dtdtheta(const BackwardCoefficients& bc, std::size_t mark,
                                const KernelArgs& a, const ThetaView& th) {
  if (bc.first_arg_static) return 0.0;
  if (mark == 0 && bc.d2g_dtdtheta0) return bc.d2g_dtdtheta0(a, th);
  if (mark > 0 && bc.d2g_dtdthetak) return bc.d2g_dtdthetak(mark - 1, a, th);
  if (!bc.g || !bc.uses_theta) return 0.0;
  return detail::driver_diff_t([&](const KernelArgs& b, const ThetaView& t2) {
    return eval_dg_dtheta(bc, mark, b, t2);
  }, a, th);
}

struct BackwardOptions {
  InformationLevel level;                       // estimation features per slice
  std::optional<InformationLevel> pred_level;   // representation features; default = level
  RegressionBasis basis;                        // slice-value projections
  RegressionBasis theta_basis;                  // representation coefficients
  std::size_t picard_max = 50;
  double picard_tol = 1e-8;
  bool store_theta = false;  // keep per-slice tables even for theta-free drivers
  std::size_t workers = 1;
};

// Per-slice solution tables. theta[i] covers cells i..N-1 and is stored as
// [path][(cell - i) * (marks + 1) + mark]; dtheta_dt holds the first-time-
// argument finite difference across slices in the same layout.
struct BackwardSolution {
  std::vector<std::vector<double>> y;  // [path][node]
  bool has_theta = false;
  std::vector<std::vector<std::vector<double>>> theta;
  std::vector<std::vector<std::vector<double>>> dtheta_dt;
  std::vector<std::size_t> picard_iters;  // per slice
  std::vector<double> picard_defects;     // per slice, final relative change

  double theta_at(std::size_t slice, std::size_t path, std::size_t cell, std::size_t mark,
                  std::size_t marks_total) const {
    return theta[slice][path][(cell - slice) * marks_total + mark];
  }
  double dtheta_dt_at(std::size_t slice, std::size_t path, std::size_t cell, std::size_t mark,
                      std::size_t marks_total) const {
    return dtheta_dt[slice][path][(cell - slice) * marks_total + mark];
  }
};

// Backward sweep over slices i = N-1..0. Each slice projects
//   h(X(T)) - sum_{j>=i} g(t_i, t_j, ...) dt_j
// on the slice-i features; the representation coefficients of the
// projection residual over cells j >= i give theta(t_i, t_j, .) with a
// sign flip (the equation adds the compensated integral). Slices with a
// driver iterate to a fixed point over the diagonal Y(t_i) and, when the
// driver reads theta, over the theta tables.
inline BackwardSolution solve_bsvie(const BackwardCoefficients& bc, const PathEnsemble& ens,
                                    const ForwardSolution& fwd, const BackwardOptions& opt) {
  if (!bc.h) throw InvalidArgument("solve_bsvie: terminal functional h is required");
  const TimeGrid& grid = ens.grid;
  const std::size_t cells = grid.cells();
  const std::size_t npaths = ens.paths();
  const std::size_t marks = ens.marks.size() + 1;
  if (fwd.x.size() != npaths) throw InvalidArgument("solve_bsvie: ensemble/forward mismatch");

  const bool need_theta = bc.uses_theta || opt.store_theta;
  const InformationLevel& pred_level = opt.pred_level ? *opt.pred_level : opt.level;

  BackwardSolution sol;
  sol.y.assign(npaths, std::vector<double>(cells + 1, 0.0));
  sol.picard_iters.assign(cells, 0);
  sol.picard_defects.assign(cells, 0.0);
  if (need_theta) {
    sol.has_theta = true;
    sol.theta.assign(cells, {});
    sol.dtheta_dt.assign(cells, {});
  }

  std::vector<double> terminal(npaths);
  for (std::size_t p = 0; p < npaths; ++p) {
    terminal[p] = bc.h(fwd.x[p][cells]);
    if (!std::isfinite(terminal[p]))
      throw NumericalBlowup("terminal functional not finite", cells);
    sol.y[p][cells] = terminal[p];
  }

  FeatureContext ctx{&ens, &fwd.x};

  // Working theta table for the current slice: [path][(j - i) * marks + m].
  std::vector<std::vector<double>> theta_cur;
  std::vector<double> xi(npaths), fitted(npaths), prev_fit(npaths);

  for (std::size_t ii = cells; ii-- > 0;) {
    const std::size_t i = ii;
    const std::size_t span_cells = cells - i;
    theta_cur.assign(bc.uses_theta || need_theta ? npaths : 0,
                     std::vector<double>(span_cells * marks, 0.0));

    double defect = 0.0;
    bool have_prev = false;
    std::size_t iter = 0;
    const std::size_t max_iter = bc.g ? opt.picard_max : 1;
    std::vector<std::vector<std::vector<double>>> peel_coef;

    for (iter = 0; iter < max_iter; ++iter) {
      parallel_for(npaths, opt.workers, [&](std::size_t p) {
        double acc = terminal[p];
        if (bc.g) {
          for (std::size_t j = i; j < cells; ++j) {
            KernelArgs a;
            a.t = grid.node(i);
            a.s = grid.node(j);
            a.lambda_b = ens.tc[p].lambda_b[j];
            a.lambda_h = ens.tc[p].lambda_h[j];
            a.u = fwd.u[p][j];
            a.x = fwd.x[p][j];
            a.y = (j == i && have_prev) ? prev_fit[p]
                                        : (j == i ? sol.y[p][j + 1] : sol.y[p][j]);
            a.x_past = std::span<const double>(fwd.x[p].data(), j + 1);
            a.outer_node = i;
            a.cell = j;
            ThetaView th;
            if (bc.uses_theta) {
              const double* base = theta_cur[p].data() + (j - i) * marks;
              th.brownian = base[0];
              th.jump = std::span<const double>(base + 1, marks - 1);
            }
            acc -= bc.g(a, th) * grid.dt(j);
          }
        }
        xi[p] = acc;
      });

      fitted = conditional_expectation(xi, opt.level, ctx, i, opt.basis);

      if (bc.uses_theta) {
        std::vector<double> resid(npaths);
        for (std::size_t p = 0; p < npaths; ++p) resid[p] = xi[p] - fitted[p];
        detail::representation_peel(resid, ens, ctx, pred_level, opt.theta_basis, i, peel_coef);
        for (std::size_t p = 0; p < npaths; ++p)
          for (std::size_t j = i; j < cells; ++j)
            for (std::size_t m = 0; m < marks; ++m)
              theta_cur[p][(j - i) * marks + m] = -peel_coef[j - i][m][p];
      }

      if (have_prev) {
        double num = 0.0, den = 0.0;
        for (std::size_t p = 0; p < npaths; ++p) {
          num += (fitted[p] - prev_fit[p]) * (fitted[p] - prev_fit[p]);
          den += fitted[p] * fitted[p];
        }
        defect = std::sqrt(num / static_cast<double>(npaths)) /
                 (std::sqrt(den / static_cast<double>(npaths)) + 1.0);
        if (defect <= opt.picard_tol) {
          prev_fit = fitted;
          ++iter;
          break;
        }
      }
      prev_fit = fitted;
      have_prev = true;
    }
    if (bc.g && iter >= opt.picard_max && defect > opt.picard_tol)
      throw NoConvergence("backward slice iteration did not settle at node " + std::to_string(i),
                          {defect});

    sol.picard_iters[i] = iter;
    sol.picard_defects[i] = defect;
    for (std::size_t p = 0; p < npaths; ++p) sol.y[p][i] = fitted[p];

    if (need_theta) {
      if (!bc.uses_theta) {
        std::vector<double> resid(npaths);
        for (std::size_t p = 0; p < npaths; ++p) resid[p] = xi[p] - fitted[p];
        detail::representation_peel(resid, ens, ctx, pred_level, opt.theta_basis, i, peel_coef);
        for (std::size_t p = 0; p < npaths; ++p)
          for (std::size_t j = i; j < cells; ++j)
            for (std::size_t m = 0; m < marks; ++m)
              theta_cur[p][(j - i) * marks + m] = -peel_coef[j - i][m][p];
      }
      sol.theta[i] = theta_cur;
    }
  }

  if (need_theta) {
    for (std::size_t i = 0; i < cells; ++i) {
      sol.dtheta_dt[i].assign(npaths, std::vector<double>((cells - i) * marks, 0.0));
      for (std::size_t j = i; j < cells; ++j) {
        // d/dt theta(t, t_j, .) at t = t_i, differencing across slices.
        const std::size_t up = (i + 1 <= j) ? i + 1 : i;     // slice above, if valid
        const std::size_t dn = (i >= 1) ? i - 1 : i;         // slice below
        const double dt = grid.node(up) - grid.node(dn);
        for (std::size_t p = 0; p < npaths; ++p)
          for (std::size_t m = 0; m < marks; ++m) {
            double d = 0.0;
            if (dt > 0.0)
              d = (sol.theta_at(up, p, j, m, marks) - sol.theta_at(dn, p, j, m, marks)) / dt;
            sol.dtheta_dt[i][p][(j - i) * marks + m] = d;
          }
      }
    }
  }

  return sol;
}

}  // namespace volterra
