#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <vector>

#include "volterra/common.hpp"
#include "volterra/features.hpp"

namespace volterra {

// Cross-sectional least squares is the workhorse realizing conditional
// expectations: E[xi | info at t] is the ridge projection of xi onto a basis
// expansion of the level's features, fitted across the ensemble.
struct RegressionBasis {
  enum class Family { kPolynomial, kPiecewiseLinear };
  Family family = Family::kPolynomial;
  int degree = 3;     // per-feature powers u, u^2, ..., u^degree
  int knots = 3;      // interior hinge knots per feature (piecewise linear)
  double ridge = 1e-8;

  std::size_t dim_per_feature() const {
    return family == Family::kPolynomial ? static_cast<std::size_t>(degree)
                                         : static_cast<std::size_t>(1 + knots);
  }
};

// Frozen transform raw features -> design row (standardization + expansion),
// so a fit can be evaluated at probe points later.
struct BasisExpansion {
  RegressionBasis basis;
  std::vector<std::size_t> kept;   // raw feature indices with nonzero spread
  std::vector<double> mean, sd;    // per kept feature
  std::vector<std::vector<double>> knots;  // per kept feature (standardized units)
  std::vector<double> col_center;  // sample mean of each non-intercept column

  std::size_t dim() const { return 1 + kept.size() * basis.dim_per_feature(); }

  // Non-intercept columns are centered on the fit sample, which makes them
  // exactly orthogonal to the intercept: constant responses are reproduced
  // bit-for-bit no matter the ridge weight.
  void expand_row(const std::vector<double>& raw, double* out) const {
    expand_row_uncentered(raw, out);
    if (!col_center.empty())
      for (std::size_t c = 1; c < dim(); ++c) out[c] -= col_center[c];
  }

  void expand_row_uncentered(const std::vector<double>& raw, double* out) const {
    out[0] = 1.0;
    std::size_t c = 1;
    for (std::size_t f = 0; f < kept.size(); ++f) {
      const double u = (raw[kept[f]] - mean[f]) / sd[f];
      if (basis.family == RegressionBasis::Family::kPolynomial) {
        double pw = 1.0;
        for (int d = 0; d < basis.degree; ++d) {
          pw *= u;
          out[c++] = pw;
        }
      } else {
        out[c++] = u;
        for (double q : knots[f]) out[c++] = u > q ? u - q : 0.0;
      }
    }
  }
};

namespace detail {

inline BasisExpansion make_expansion(const std::vector<std::vector<double>>& raw,
                                     const RegressionBasis& basis) {
  BasisExpansion ex;
  ex.basis = basis;
  if (raw.empty()) return ex;
  const std::size_t n = raw.size();
  const std::size_t nf = raw.front().size();
  for (std::size_t f = 0; f < nf; ++f) {
    double m = 0.0;
    for (std::size_t p = 0; p < n; ++p) m += raw[p][f];
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t p = 0; p < n; ++p) v += (raw[p][f] - m) * (raw[p][f] - m);
    v /= static_cast<double>(n);
    const double s = std::sqrt(v);
    if (!(s > 1e-12 * (std::abs(m) + 1.0))) continue;  // constant feature: intercept covers it
    ex.kept.push_back(f);
    ex.mean.push_back(m);
    ex.sd.push_back(s);
  }
  if (basis.family == RegressionBasis::Family::kPiecewiseLinear) {
    ex.knots.resize(ex.kept.size());
    for (std::size_t f = 0; f < ex.kept.size(); ++f) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t p = 0; p < n; ++p) {
        const double u = (raw[p][ex.kept[f]] - ex.mean[f]) / ex.sd[f];
        lo = std::min(lo, u);
        hi = std::max(hi, u);
      }
      for (int q = 1; q <= basis.knots; ++q)
        ex.knots[f].push_back(lo + (hi - lo) * static_cast<double>(q) /
                                       static_cast<double>(basis.knots + 1));
    }
  }
  {
    const std::size_t d = ex.dim();
    std::vector<double> acc(d, 0.0), row(d);
    for (std::size_t p = 0; p < n; ++p) {
      ex.expand_row_uncentered(raw[p], row.data());
      for (std::size_t c = 1; c < d; ++c) acc[c] += row[c];
    }
    for (std::size_t c = 1; c < d; ++c) acc[c] /= static_cast<double>(n);
    ex.col_center = std::move(acc);
  }
  return ex;
}

// Equilibrated ridge solve of min |y - G beta|^2 + ridge * n * |D beta|^2
// where D skips column 0 when unpenalized_intercept is set. Zero columns get
// a zero coefficient.
inline Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& G, const Eigen::VectorXd& y,
                                   double ridge, bool unpenalized_intercept) {
  const auto n = G.rows();
  const auto d = G.cols();
  Eigen::VectorXd scale(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const double nrm = std::sqrt(G.col(c).squaredNorm() / static_cast<double>(n));
    scale(c) = nrm > 1e-300 ? nrm : 0.0;
  }
  Eigen::MatrixXd Gs = G;
  for (Eigen::Index c = 0; c < d; ++c)
    if (scale(c) > 0.0) Gs.col(c) /= scale(c);
  Eigen::MatrixXd A = Gs.transpose() * Gs;
  for (Eigen::Index c = 0; c < d; ++c) {
    if (scale(c) == 0.0) {
      A(c, c) = 1.0;  // dead column pinned to zero
      continue;
    }
    if (!(unpenalized_intercept && c == 0)) A(c, c) += ridge * static_cast<double>(n);
  }
  const Eigen::VectorXd b = Gs.transpose() * y;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success)
    throw IllConditionedRegression("normal equations not factorizable");
  Eigen::VectorXd beta = ldlt.solve(b);
  const double resnorm = (A * beta - b).norm();
  if (!beta.allFinite() || resnorm > 1e-6 * (b.norm() + 1.0))
    throw IllConditionedRegression("normal equations solved to insufficient accuracy");
  for (Eigen::Index c = 0; c < d; ++c) beta(c) = scale(c) > 0.0 ? beta(c) / scale(c) : 0.0;
  return beta;
}

}  // namespace detail

struct RegressionFit {
  BasisExpansion expansion;
  std::vector<double> beta;    // includes intercept
  std::vector<double> fitted;  // per path
  double r_squared = 1.0;

  double predict(const std::vector<double>& raw) const {
    std::vector<double> row(expansion.dim());
    expansion.expand_row(raw, row.data());
    double s = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) s += beta[c] * row[c];
    return s;
  }
};

inline RegressionFit fit_regression(const std::vector<double>& y,
                                    const std::vector<std::vector<double>>& raw,
                                    const RegressionBasis& basis) {
  const std::size_t n = y.size();
  if (n < 2) throw InvalidArgument("fit_regression: need at least two observations");
  if (!raw.empty() && raw.size() != n)
    throw InvalidArgument("fit_regression: feature row count mismatch");

  RegressionFit fit;
  fit.expansion = detail::make_expansion(raw, basis);
  const std::size_t d = fit.expansion.dim();
  if (d * 10 > n)
    throw InvalidArgument("fit_regression: basis dimension " + std::to_string(d) +
                          " too large for " + std::to_string(n) + " paths");

  Eigen::MatrixXd G(n, d);
  {
    std::vector<double> row(d);
    const std::vector<double> empty;
    for (std::size_t p = 0; p < n; ++p) {
      fit.expansion.expand_row(raw.empty() ? empty : raw[p], row.data());
      for (std::size_t c = 0; c < d; ++c) G(p, c) = row[c];
    }
  }
  Eigen::VectorXd yv(n);
  for (std::size_t p = 0; p < n; ++p) yv(p) = y[p];

  const Eigen::VectorXd beta = detail::ridge_solve(G, yv, basis.ridge, true);
  fit.beta.assign(beta.data(), beta.data() + d);
  const Eigen::VectorXd fv = G * beta;
  fit.fitted.assign(fv.data(), fv.data() + n);

  const double ym = yv.mean();
  const double sst = (yv.array() - ym).matrix().squaredNorm();
  const double ssr = (yv - fv).squaredNorm();
  fit.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
  return fit;
}

// E[y | level at cell], fitted values across the ensemble.
inline RegressionFit conditional_expectation_fit(const std::vector<double>& y,
                                                 const InformationLevel& level,
                                                 const FeatureContext& ctx, std::size_t cell,
                                                 const RegressionBasis& basis) {
  for (double v : y)
    if (!std::isfinite(v)) throw InvalidArgument("conditional_expectation: non-finite response");
  const auto raw = level.features.empty() ? std::vector<std::vector<double>>{}
                                          : extract_features(level, ctx, cell);
  return fit_regression(y, raw, basis);
}

inline std::vector<double> conditional_expectation(const std::vector<double>& y,
                                                   const InformationLevel& level,
                                                   const FeatureContext& ctx, std::size_t cell,
                                                   const RegressionBasis& basis) {
  return conditional_expectation_fit(y, level, ctx, cell, basis).fitted;
}

}  // namespace volterra
