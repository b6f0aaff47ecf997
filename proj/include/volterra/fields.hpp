#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "volterra/common.hpp"
#include "volterra/noise.hpp"

namespace volterra {

enum class Adaptedness { kPredictableF, kPredictableG, kUnchecked };

// Integrand phi(path, cell, mark) sampled on the grid. Mark 0 is the
// Brownian slot, marks 1..M the jump points. Values at (path, cell) must be
// known before the cell's own increment is revealed; see check_predictable.
class IntegrandField {
 public:
  IntegrandField() = default;

  IntegrandField(std::size_t paths, std::size_t cells, std::size_t marks,
                 Adaptedness tag = Adaptedness::kUnchecked)
      : paths_(paths), cells_(cells), marks_(marks + 1), tag_(tag),
        values_(paths * cells * (marks + 1), 0.0) {}

  static IntegrandField from_callback(
      const PathEnsemble& ens,
      const std::function<double(std::size_t path, std::size_t cell, std::size_t mark)>& fn,
      Adaptedness tag = Adaptedness::kUnchecked) {
    IntegrandField f(ens.paths(), ens.grid.cells(), ens.marks.size(), tag);
    for (std::size_t p = 0; p < f.paths_; ++p)
      for (std::size_t j = 0; j < f.cells_; ++j)
        for (std::size_t m = 0; m < f.marks_; ++m) f.at(p, j, m) = fn(p, j, m);
    return f;
  }

  // Deterministic integrand phi(t_j, z_m), shared across paths.
  static IntegrandField deterministic(
      const PathEnsemble& ens, const std::function<double(double t, double z)>& fn) {
    IntegrandField f(ens.paths(), ens.grid.cells(), ens.marks.size(), Adaptedness::kPredictableF);
    for (std::size_t j = 0; j < f.cells_; ++j) {
      const double t = ens.grid.node(j);
      for (std::size_t m = 0; m < f.marks_; ++m) {
        const double z = (m == 0) ? 0.0 : ens.marks.point(m - 1);
        const double v = fn(t, z);
        for (std::size_t p = 0; p < f.paths_; ++p) f.at(p, j, m) = v;
      }
    }
    return f;
  }

  double& at(std::size_t path, std::size_t cell, std::size_t mark) {
    return values_[(path * cells_ + cell) * marks_ + mark];
  }
  double at(std::size_t path, std::size_t cell, std::size_t mark) const {
    return values_[(path * cells_ + cell) * marks_ + mark];
  }

  std::size_t paths() const { return paths_; }
  std::size_t cells() const { return cells_; }
  std::size_t marks() const { return marks_; }  // includes the Brownian slot
  Adaptedness tag() const { return tag_; }

 private:
  std::size_t paths_ = 0, cells_ = 0, marks_ = 0;
  Adaptedness tag_ = Adaptedness::kUnchecked;
  std::vector<double> values_;
};

// Integral of phi against the noise measure along one path.
inline double ito_integral(const IntegrandField& phi, const PathEnsemble& ens,
                           std::size_t path) {
  double s = 0.0;
  for (std::size_t j = 0; j < phi.cells(); ++j)
    for (std::size_t m = 0; m < phi.marks(); ++m)
      s += phi.at(path, j, m) * ens.increment(path, j, m);
  return s;
}

// Integral of phi against the realized control measure along one path.
inline double lambda_integral(const IntegrandField& phi, const PathEnsemble& ens,
                              std::size_t path) {
  double s = 0.0;
  for (std::size_t j = 0; j < phi.cells(); ++j)
    for (std::size_t m = 0; m < phi.marks(); ++m)
      s += phi.at(path, j, m) * ens.weight(path, j, m);
  return s;
}

// Statistical predictability probe: a field measurable before cell j cannot
// correlate with cell j's own centered increment. Flags |t-stat| above the
// threshold for any (cell, mark).
inline void check_predictable(const IntegrandField& phi, const PathEnsemble& ens,
                              double threshold = 5.0) {
  const std::size_t n = phi.paths();
  if (n < 32) return;  // not enough paths for a meaningful probe
  for (std::size_t j = 0; j < phi.cells(); ++j) {
    for (std::size_t m = 0; m < phi.marks(); ++m) {
      double sf = 0.0, si = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        sf += phi.at(p, j, m);
        si += ens.increment(p, j, m);
      }
      const double mf = sf / static_cast<double>(n);
      const double mi = si / static_cast<double>(n);
      double cov = 0.0, vf = 0.0, vi = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        const double a = phi.at(p, j, m) - mf;
        const double b = ens.increment(p, j, m) - mi;
        cov += a * b;
        vf += a * a;
        vi += b * b;
      }
      if (vf <= 0.0 || vi <= 0.0) continue;
      const double corr = cov / std::sqrt(vf * vi);
      if (std::abs(corr) * std::sqrt(static_cast<double>(n)) > threshold)
        throw ContractViolation("integrand correlates with its own cell's increment at cell " +
                                std::to_string(j) + ", mark " + std::to_string(m));
    }
  }
}

struct IsometryStatistic {
  double mean_square_integral = 0.0;  // E[(int phi dmu)^2]
  double mean_lambda_integral = 0.0;  // E[int phi^2 dLambda]
  double gap = 0.0;
  double se = 0.0;  // standard error of the per-path difference
};

// Monte Carlo check of E[(int phi dmu)^2] = E[int phi^2 dLambda].
inline IsometryStatistic isometry_statistic(const IntegrandField& phi, const PathEnsemble& ens) {
  const std::size_t n = phi.paths();
  IntegrandField phi2 = phi;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t j = 0; j < phi.cells(); ++j)
      for (std::size_t m = 0; m < phi.marks(); ++m)
        phi2.at(p, j, m) = phi.at(p, j, m) * phi.at(p, j, m);
  IsometryStatistic st;
  std::vector<double> diff(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double a = ito_integral(phi, ens, p);
    const double b = lambda_integral(phi2, ens, p);
    st.mean_square_integral += a * a;
    st.mean_lambda_integral += b;
    diff[p] = a * a - b;
  }
  st.mean_square_integral /= static_cast<double>(n);
  st.mean_lambda_integral /= static_cast<double>(n);
  st.gap = st.mean_square_integral - st.mean_lambda_integral;
  double var = 0.0;
  for (double d : diff) var += (d - st.gap) * (d - st.gap);
  var /= static_cast<double>(n - 1);
  st.se = std::sqrt(var / static_cast<double>(n));
  return st;
}

}  // namespace volterra
