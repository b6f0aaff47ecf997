#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "volterra/common.hpp"
#include "volterra/fields.hpp"
#include "volterra/regression.hpp"

namespace volterra {

// Estimated decomposition xi = xi0 + sum_{j,m} coef(j,m) dmu(j,m) where xi0
// is the projection of xi on the time-change history and coef is predictable
// given the full time-change path plus the noise before the cell. Estimated
// cell by cell: regress the running residual on basis-weighted increments,
// then peel off the fitted part.
struct NaDerivativeField {
  std::vector<double> base;  // xi0 per path
  std::vector<std::vector<std::vector<double>>> coef;  // [cell][mark][path]
  double unexplained_fraction = 0.0;  // residual variance / Var(xi - xi0)

  double r_squared() const { return 1.0 - unexplained_fraction; }

  double at(std::size_t path, std::size_t cell, std::size_t mark) const {
    return coef[cell][mark][path];
  }
};

struct NaDerivativeOptions {
  RegressionBasis basis;                       // coefficient functions
  RegressionBasis base_basis;                  // xi0 projection
  std::optional<InformationLevel> base_level;  // default: time-change summaries
  std::optional<InformationLevel> pred_level;  // default: full level
};

namespace detail {

// One joint regression of `resid` onto basis-weighted noise increments of a
// single cell, over all marks at once. Returns evaluated coefficient
// functions laid out [mark][path]; `resid` is left untouched.
inline std::vector<std::vector<double>> representation_cell(
    const std::vector<double>& resid, const PathEnsemble& ens, const FeatureContext& ctx,
    const InformationLevel& pred_level, const RegressionBasis& basis, std::size_t cell) {
  const std::size_t n = resid.size();
  const std::size_t marks = ens.marks.size() + 1;

  const auto raw = pred_level.features.empty() ? std::vector<std::vector<double>>{}
                                               : extract_features(pred_level, ctx, cell);
  const BasisExpansion ex = detail::make_expansion(raw, basis);
  const std::size_t d = ex.dim();
  if (d * marks * 10 > n)
    throw InvalidArgument("representation regression: joint basis dimension too large");

  Eigen::MatrixXd rows(n, d);
  {
    std::vector<double> row(d);
    const std::vector<double> empty;
    for (std::size_t p = 0; p < n; ++p) {
      ex.expand_row(raw.empty() ? empty : raw[p], row.data());
      for (std::size_t c = 0; c < d; ++c) rows(p, c) = row[c];
    }
  }
  Eigen::MatrixXd G(n, d * marks);
  for (std::size_t m = 0; m < marks; ++m)
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t c = 0; c < d; ++c)
        G(p, m * d + c) = rows(p, c) * ens.increment(p, cell, m);

  Eigen::VectorXd yv(n);
  for (std::size_t p = 0; p < n; ++p) yv(p) = resid[p];
  const Eigen::VectorXd beta = detail::ridge_solve(G, yv, basis.ridge, false);

  std::vector<std::vector<double>> coef(marks, std::vector<double>(n, 0.0));
  for (std::size_t m = 0; m < marks; ++m) {
    auto& cf = coef[m];
    for (std::size_t p = 0; p < n; ++p) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += beta(m * d + c) * rows(p, c);
      cf[p] = s;
    }
  }
  return coef;
}

// Sequential per-cell decomposition of `resid` onto basis-weighted noise
// increments for cells [first_cell, cells): one joint regression per cell
// over all marks, after which the fitted part is peeled off in place.
// coef layout: [cell - first_cell][mark][path].
inline void representation_peel(std::vector<double>& resid, const PathEnsemble& ens,
                                const FeatureContext& ctx, const InformationLevel& pred_level,
                                const RegressionBasis& basis, std::size_t first_cell,
                                std::vector<std::vector<std::vector<double>>>& coef) {
  const std::size_t n = resid.size();
  const std::size_t cells = ens.grid.cells();
  const std::size_t marks = ens.marks.size() + 1;
  coef.assign(cells - first_cell, {});

  for (std::size_t j = first_cell; j < cells; ++j) {
    auto cellcoef = representation_cell(resid, ens, ctx, pred_level, basis, j);
    for (std::size_t p = 0; p < n; ++p) {
      double fit = 0.0;
      for (std::size_t m = 0; m < marks; ++m) fit += cellcoef[m][p] * ens.increment(p, j, m);
      resid[p] -= fit;
    }
    coef[j - first_cell] = std::move(cellcoef);
  }
}

}  // namespace detail

inline NaDerivativeField na_derivative(const std::vector<double>& xi, const PathEnsemble& ens,
                                       const FeatureContext& ctx,
                                       const NaDerivativeOptions& opt = {}) {
  const std::size_t n = xi.size();
  if (n != ens.paths()) throw InvalidArgument("na_derivative: response size != ensemble paths");
  for (double v : xi)
    if (!std::isfinite(v)) throw InvalidArgument("na_derivative: non-finite response");

  const InformationLevel base_level =
      opt.base_level ? *opt.base_level : level_time_change();
  const InformationLevel pred_level =
      opt.pred_level ? *opt.pred_level : level_full(ens.marks.size());

  NaDerivativeField out;
  out.base = conditional_expectation(xi, base_level, ctx, 0, opt.base_basis);

  std::vector<double> resid(n);
  for (std::size_t p = 0; p < n; ++p) resid[p] = xi[p] - out.base[p];
  double var0 = 0.0, m0 = 0.0;
  for (double v : resid) m0 += v;
  m0 /= static_cast<double>(n);
  for (double v : resid) var0 += (v - m0) * (v - m0);

  detail::representation_peel(resid, ens, ctx, pred_level, opt.basis, 0, out.coef);

  if (var0 > 0.0) {
    double mr = 0.0;
    for (double v : resid) mr += v;
    mr /= static_cast<double>(n);
    double varr = 0.0;
    for (double v : resid) varr += (v - mr) * (v - mr);
    out.unexplained_fraction = varr / var0;
  } else {
    out.unexplained_fraction = 0.0;
  }
  return out;
}

struct DualityStatistic {
  double lhs = 0.0;  // E[xi * int phi dmu]
  double rhs = 0.0;  // E[int phi * coef dLambda]
  double gap = 0.0;
  double se = 0.0;   // standard error of the per-path difference
};

// Pairing identity: E[xi int phi dmu] = E[int phi Dxi dLambda] for
// predictable phi. rhs uses the estimated derivative field.
inline DualityStatistic duality_check(const std::vector<double>& xi, const IntegrandField& phi,
                                      const PathEnsemble& ens, const FeatureContext& ctx,
                                      const NaDerivativeOptions& opt = {}) {
  const NaDerivativeField field = na_derivative(xi, ens, ctx, opt);
  const std::size_t n = ens.paths();
  DualityStatistic st;
  std::vector<double> diff(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double a = xi[p] * ito_integral(phi, ens, p);
    double b = 0.0;
    for (std::size_t j = 0; j < phi.cells(); ++j)
      for (std::size_t m = 0; m < phi.marks(); ++m)
        b += phi.at(p, j, m) * field.at(p, j, m) * ens.weight(p, j, m);
    st.lhs += a;
    st.rhs += b;
    diff[p] = a - b;
  }
  st.lhs /= static_cast<double>(n);
  st.rhs /= static_cast<double>(n);
  st.gap = st.lhs - st.rhs;
  double var = 0.0;
  for (double d : diff) var += (d - st.gap) * (d - st.gap);
  var /= static_cast<double>(n - 1);
  st.se = std::sqrt(var / static_cast<double>(n));
  return st;
}

}  // namespace volterra
