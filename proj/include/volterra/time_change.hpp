#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "volterra/common.hpp"
#include "volterra/grid.hpp"
#include "volterra/rng.hpp"

namespace volterra {

// Realized intensity pair on a grid, one value per cell, evaluated at the
// left endpoint so the pair is predictable with respect to its own history.
struct TimeChangePath {
  std::vector<double> lambda_b;  // Brownian-component intensity per cell
  std::vector<double> lambda_h;  // jump-component intensity per cell
};

// Cell/mark weight of the control measure: mark 0 pairs with lambda_b,
// jump mark k (1-based) with lambda_h * nu_k.
inline double lambda_weight(const TimeChangePath& tc, const TimeGrid& grid,
                            const MarkSet& marks, std::size_t cell, std::size_t mark) {
  const double dt = grid.dt(cell);
  if (mark == 0) return tc.lambda_b[cell] * dt;
  return tc.lambda_h[cell] * marks.mass(mark - 1) * dt;
}

struct DeterministicIntensity {
  std::function<double(double)> lambda_b;
  std::function<double(double)> lambda_h;
};

// Piecewise-constant intensities; each segment level is an independent
// lognormal draw per component.
struct PiecewiseLognormalIntensity {
  std::size_t segments = 4;
  double meanlog_b = 0.0;
  double sdlog_b = 0.5;
  double meanlog_h = 0.0;
  double sdlog_h = 0.5;
};

// Square-root mean-reverting diffusion per component, discretized by the
// full-truncation Euler scheme (negative excursions are clipped inside the
// drift and the diffusion coefficient, preserving the mean recursion).
struct MeanRevertingIntensity {
  double b0 = 1.0, kappa_b = 2.0, theta_b = 1.0, sigma_b = 0.3;
  double h0 = 1.0, kappa_h = 2.0, theta_h = 1.0, sigma_h = 0.3;
};

struct TimeChangeModel {
  enum class Kind { kDeterministic, kPiecewiseLognormal, kMeanReverting };

  Kind kind = Kind::kDeterministic;
  DeterministicIntensity det{[](double) { return 1.0; }, [](double) { return 1.0; }};
  PiecewiseLognormalIntensity pwl;
  MeanRevertingIntensity mrd;

  static TimeChangeModel constant(double lb, double lh) {
    TimeChangeModel m;
    m.det.lambda_b = [lb](double) { return lb; };
    m.det.lambda_h = [lh](double) { return lh; };
    return m;
  }

  void validate() const {
    if (kind == Kind::kPiecewiseLognormal) {
      if (pwl.segments == 0) throw InvalidArgument("time change: need >= 1 segment");
      if (pwl.sdlog_b < 0 || pwl.sdlog_h < 0)
        throw InvalidArgument("time change: sdlog must be >= 0");
    } else if (kind == Kind::kMeanReverting) {
      if (mrd.b0 < 0 || mrd.h0 < 0 || mrd.kappa_b < 0 || mrd.kappa_h < 0 ||
          mrd.theta_b < 0 || mrd.theta_h < 0 || mrd.sigma_b < 0 || mrd.sigma_h < 0)
        throw InvalidArgument("time change: mean-reverting parameters must be >= 0");
    }
  }
};

namespace detail {

inline std::vector<double> full_truncation_path(double x0, double kappa, double theta,
                                                double sigma, const TimeGrid& grid,
                                                RngStream& rng) {
  std::vector<double> left(grid.cells());
  double x = x0;
  for (std::size_t j = 0; j < grid.cells(); ++j) {
    left[j] = std::max(x, 0.0);
    const double xp = std::max(x, 0.0);
    const double dt = grid.dt(j);
    x += kappa * (theta - xp) * dt + sigma * std::sqrt(xp * dt) * rng.normal();
  }
  return left;
}

}  // namespace detail

// Draws one intensity path on the grid. The stream must be dedicated to
// this (path, purpose) pair; the draw order below is part of the format.
inline TimeChangePath sample_time_change(const TimeChangeModel& model, const TimeGrid& grid,
                                         RngStream& rng) {
  model.validate();
  TimeChangePath tc;
  const std::size_t n = grid.cells();
  switch (model.kind) {
    case TimeChangeModel::Kind::kDeterministic: {
      tc.lambda_b.resize(n);
      tc.lambda_h.resize(n);
      for (std::size_t j = 0; j < n; ++j) {
        tc.lambda_b[j] = model.det.lambda_b(grid.node(j));
        tc.lambda_h[j] = model.det.lambda_h(grid.node(j));
        if (!(tc.lambda_b[j] >= 0.0) || !(tc.lambda_h[j] >= 0.0))
          throw InvalidArgument("time change: deterministic intensity negative at t=" +
                                std::to_string(grid.node(j)));
      }
      break;
    }
    case TimeChangeModel::Kind::kPiecewiseLognormal: {
      const auto& p = model.pwl;
      std::vector<double> lb(p.segments), lh(p.segments);
      for (std::size_t s = 0; s < p.segments; ++s) {
        lb[s] = std::exp(p.meanlog_b + p.sdlog_b * rng.normal());
        lh[s] = std::exp(p.meanlog_h + p.sdlog_h * rng.normal());
      }
      tc.lambda_b.resize(n);
      tc.lambda_h.resize(n);
      const double T = grid.horizon();
      for (std::size_t j = 0; j < n; ++j) {
        auto seg = static_cast<std::size_t>(grid.node(j) / T * static_cast<double>(p.segments));
        if (seg >= p.segments) seg = p.segments - 1;
        tc.lambda_b[j] = lb[seg];
        tc.lambda_h[j] = lh[seg];
      }
      break;
    }
    case TimeChangeModel::Kind::kMeanReverting: {
      const auto& p = model.mrd;
      tc.lambda_b = detail::full_truncation_path(p.b0, p.kappa_b, p.theta_b, p.sigma_b, grid, rng);
      tc.lambda_h = detail::full_truncation_path(p.h0, p.kappa_h, p.theta_h, p.sigma_h, grid, rng);
      break;
    }
  }
  return tc;
}

}  // namespace volterra
