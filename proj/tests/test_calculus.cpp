#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "volterra/na_derivative.hpp"

using namespace volterra;

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// 2-cell toy with two-point increments at +-sqrt(w): all 16 outcomes,
// replicated equally so sample means stay exact expectations while the
// ensemble is large enough for the basis-size rule.
PathEnsemble enumeration_toy(std::size_t replicas = 64) {
  PathEnsemble ens;
  ens.grid = build_grid(1.0, 2);
  ens.marks = MarkSet({1.0}, {0.4});
  TimeChangePath tc;
  tc.lambda_b = {0.5, 0.5};    // w_B = 0.25 per cell
  tc.lambda_h = {1.25, 1.25};  // w_H = 1.25 * 0.4 * 0.5 = 0.25 per cell
  const double r = 0.5;        // sqrt(0.25)
  for (std::size_t rep = 0; rep < replicas; ++rep) {
    for (int a = 0; a < 16; ++a) {
      NoisePath np;
      np.dB = {(a & 1) ? r : -r, (a & 4) ? r : -r};
      np.dH = {{(a & 2) ? r : -r}, {(a & 8) ? r : -r}};
      ens.tc.push_back(tc);
      ens.noise.push_back(np);
    }
  }
  return ens;
}

}  // namespace

TEST_CASE("integrals against noise and control measure on a hand-built path") {
  PathEnsemble ens;
  ens.grid = build_grid(1.0, 2);
  ens.marks = MarkSet({2.0}, {0.3});
  TimeChangePath tc;
  tc.lambda_b = {1.0, 2.0};
  tc.lambda_h = {4.0, 1.0};
  NoisePath np;
  np.dB = {0.25, -0.5};
  np.dH = {{1.2}, {-0.4}};
  ens.tc = {tc};
  ens.noise = {np};

  IntegrandField phi(1, 2, 1);
  phi.at(0, 0, 0) = 1.0;
  phi.at(0, 0, 1) = 2.0;
  phi.at(0, 1, 0) = -1.0;
  phi.at(0, 1, 1) = 0.5;

  REQUIRE_THAT(ito_integral(phi, ens, 0),
               Catch::Matchers::WithinAbs(0.25 + 2.0 * 1.2 + 0.5 + 0.5 * -0.4, 1e-14));
  // weights: w(0,B)=0.5, w(0,H)=0.6, w(1,B)=1.0, w(1,H)=0.15
  REQUIRE_THAT(lambda_integral(phi, ens, 0),
               Catch::Matchers::WithinAbs(0.5 + 2.0 * 0.6 - 1.0 + 0.5 * 0.15, 1e-14));
}

TEST_CASE("isometry holds under a random time change") {
  const TimeGrid g = build_grid(1.0, 8);
  const MarkSet marks({1.0, -0.5}, {0.4, 0.8});
  TimeChangeModel model;
  model.kind = TimeChangeModel::Kind::kPiecewiseLognormal;
  model.pwl.sdlog_b = 0.4;
  model.pwl.sdlog_h = 0.4;
  const PathEnsemble ens = sample_ensemble(model, g, marks, 10000, 31);

  const IntegrandField phi = IntegrandField::deterministic(
      ens, [](double t, double z) { return (1.0 + t) * (1.0 - 0.5 * z); });
  const IsometryStatistic st = isometry_statistic(phi, ens);
  REQUIRE(std::abs(st.gap) <= 3.0 * st.se);
  REQUIRE(st.mean_lambda_integral > 0.5);
}

TEST_CASE("predictability probe flags an anticipating integrand") {
  const TimeGrid g = build_grid(1.0, 4);
  const MarkSet marks({1.0}, {0.5});
  const PathEnsemble ens = sample_ensemble(TimeChangeModel::constant(1.0, 1.0), g, marks, 2000, 3);

  const IntegrandField ok = IntegrandField::deterministic(ens, [](double t, double) { return t; });
  REQUIRE_NOTHROW(check_predictable(ok, ens));

  const IntegrandField bad = IntegrandField::from_callback(
      ens,
      [&](std::size_t p, std::size_t j, std::size_t m) {
        return m == 0 ? (ens.noise[p].dB[j] > 0 ? 1.0 : -1.0) : 0.0;
      },
      Adaptedness::kPredictableF);
  REQUIRE_THROWS_AS(check_predictable(bad, ens), ContractViolation);
}

TEST_CASE("conditional expectation reproduces in-span responses") {
  const TimeGrid g = build_grid(1.0, 4);
  const MarkSet marks({1.0}, {0.5});
  const PathEnsemble ens = sample_ensemble(TimeChangeModel::constant(1.0, 1.0), g, marks, 4000, 17);
  const FeatureContext ctx{&ens, nullptr};
  const InformationLevel lv = level_noise(1);
  RegressionBasis basis;

  SECTION("a feature itself survives up to ridge shrinkage") {
    std::vector<double> xi(ens.paths());
    for (std::size_t p = 0; p < ens.paths(); ++p) xi[p] = ens.cum_brownian(p, 4);
    const auto est = conditional_expectation(xi, lv, ctx, 4, basis);
    double worst = 0.0;
    for (std::size_t p = 0; p < ens.paths(); ++p)
      worst = std::max(worst, std::abs(est[p] - xi[p]));
    REQUIRE(worst <= 1e-6);
  }

  SECTION("constants are exact") {
    const std::vector<double> xi(ens.paths(), 3.25);
    const auto est = conditional_expectation(xi, lv, ctx, 2, basis);
    for (std::size_t p = 0; p < ens.paths(); ++p)
      REQUIRE_THAT(est[p], Catch::Matchers::WithinAbs(3.25, 1e-12));
  }

  SECTION("martingale projection: E[B(T) | info at t] tracks B(t)") {
    std::vector<double> xi(ens.paths());
    for (std::size_t p = 0; p < ens.paths(); ++p) xi[p] = ens.cum_brownian(p, 4);
    const auto est = conditional_expectation(xi, lv, ctx, 2, basis);
    double mse = 0.0;
    for (std::size_t p = 0; p < ens.paths(); ++p) {
      const double b = ens.cum_brownian(p, 2);
      mse += (est[p] - b) * (est[p] - b);
    }
    mse /= static_cast<double>(ens.paths());
    // Sampling noise of a 7-dim fit on 4000 paths; the target variance is 0.5.
    REQUIRE(mse < 0.01);
  }

  SECTION("basis larger than a tenth of the ensemble is rejected") {
    std::vector<double> xi(ens.paths(), 0.0);
    RegressionBasis big;
    big.degree = 3;
    std::vector<double> small_xi(50, 1.0);
    PathEnsemble small = sample_ensemble(TimeChangeModel::constant(1.0, 1.0), g, marks, 50, 5);
    const FeatureContext sctx{&small, nullptr};
    REQUIRE_THROWS_AS(conditional_expectation(small_xi, level_noise(1), sctx, 4, big),
                      InvalidArgument);
  }

  SECTION("non-finite responses are rejected") {
    std::vector<double> xi(ens.paths(), 1.0);
    xi[7] = std::nan("");
    REQUIRE_THROWS_AS(conditional_expectation(xi, lv, ctx, 2, basis), InvalidArgument);
  }
}

TEST_CASE("tower property: projecting through the larger level is consistent") {
  const TimeGrid g = build_grid(1.0, 4);
  const MarkSet marks({1.0}, {0.5});
  TimeChangeModel model;
  model.kind = TimeChangeModel::Kind::kPiecewiseLognormal;
  const PathEnsemble ens = sample_ensemble(model, g, marks, 4000, 23);
  const FeatureContext ctx{&ens, nullptr};

  std::vector<double> xi(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p)
    xi[p] = ens.cum_brownian(p, 4) * ens.total_weight_jump(p);

  RegressionBasis basis;
  const InformationLevel small = level_noise(1);
  const InformationLevel big = level_full(1);  // small's features come first

  const auto via_big =
      conditional_expectation(conditional_expectation(xi, big, ctx, 2, basis), small, ctx, 2, basis);
  const auto direct = conditional_expectation(xi, small, ctx, 2, basis);
  double worst = 0.0;
  for (std::size_t p = 0; p < ens.paths(); ++p)
    worst = std::max(worst, std::abs(via_big[p] - direct[p]));
  REQUIRE(worst <= 1e-5);
}

TEST_CASE("piecewise-linear basis reproduces a hinge response") {
  const TimeGrid g = build_grid(1.0, 2);
  const MarkSet marks({1.0}, {0.0});
  const PathEnsemble ens = sample_ensemble(TimeChangeModel::constant(1.0, 0.0), g, marks, 2000, 41);
  const FeatureContext ctx{&ens, nullptr};

  RegressionBasis basis;
  basis.family = RegressionBasis::Family::kPiecewiseLinear;
  basis.knots = 7;

  std::vector<double> xi(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p)
    xi[p] = std::abs(ens.cum_brownian(p, 2));

  const auto est = conditional_expectation(xi, level_noise(1), ctx, 2, basis);
  double mse = 0.0;
  for (std::size_t p = 0; p < ens.paths(); ++p) mse += (est[p] - xi[p]) * (est[p] - xi[p]);
  mse /= static_cast<double>(ens.paths());
  REQUIRE(mse < 0.01);  // |x| is near the hinge span; cubic would do far worse
}

TEST_CASE("derivative field recovers a deterministic integrand") {
  const TimeGrid g = build_grid(1.0, 2);
  const MarkSet marks({1.0}, {1.0});
  const PathEnsemble ens =
      sample_ensemble(TimeChangeModel::constant(2.0, 2.0), g, marks, 100000, 57);
  const FeatureContext ctx{&ens, nullptr};

  const IntegrandField phi = IntegrandField::deterministic(
      ens, [](double t, double z) { return 0.5 + t - 0.25 * z; });
  std::vector<double> xi(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p) xi[p] = ito_integral(phi, ens, p);

  const NaDerivativeField field = na_derivative(xi, ens, ctx);
  REQUIRE(field.r_squared() >= 0.99);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t m = 0; m < 2; ++m) {
      const double want = phi.at(0, j, m);
      REQUIRE_THAT(mean_of(field.coef[j][m]), Catch::Matchers::WithinAbs(want, 1e-2));
    }
  }
}

TEST_CASE("derivative of a time-change functional vanishes") {
  const TimeGrid g = build_grid(1.0, 4);
  const MarkSet marks({1.0}, {0.5});
  TimeChangeModel model;
  model.kind = TimeChangeModel::Kind::kPiecewiseLognormal;
  model.pwl.sdlog_b = 0.3;
  model.pwl.sdlog_h = 0.3;
  const PathEnsemble ens = sample_ensemble(model, g, marks, 20000, 71);
  const FeatureContext ctx{&ens, nullptr};

  std::vector<double> xi(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    const double a = ens.total_weight_brownian(p);
    const double b = ens.total_weight_jump(p);
    xi[p] = a + 0.5 * b * b;
  }
  const NaDerivativeField field = na_derivative(xi, ens, ctx);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t m = 0; m < 2; ++m) {
      const double m1 = mean_of(field.coef[j][m]);
      const double se = se_of(field.coef[j][m]);
      REQUIRE(std::abs(m1) <= std::max(3.0 * se, 1e-6));
    }
}

TEST_CASE("duality check passes on Monte Carlo cases") {
  const TimeGrid g = build_grid(1.0, 4);
  const MarkSet marks({1.0}, {0.5});
  TimeChangeModel model;
  model.kind = TimeChangeModel::Kind::kPiecewiseLognormal;
  model.pwl.sdlog_b = 0.3;
  model.pwl.sdlog_h = 0.3;
  const PathEnsemble ens = sample_ensemble(model, g, marks, 20000, 83);
  const FeatureContext ctx{&ens, nullptr};

  const IntegrandField psi = IntegrandField::deterministic(
      ens, [](double t, double z) { return 1.0 + 0.5 * t + 0.1 * z; });
  std::vector<double> xi(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p) xi[p] = ito_integral(psi, ens, p);

  SECTION("deterministic pairing field") {
    const IntegrandField phi =
        IntegrandField::deterministic(ens, [](double t, double z) { return t - z; });
    const DualityStatistic st = duality_check(xi, phi, ens, ctx);
    REQUIRE(std::abs(st.gap) <= 3.0 * st.se);
  }
  SECTION("time-change-dependent pairing field") {
    const IntegrandField phi = IntegrandField::from_callback(
        ens, [&](std::size_t p, std::size_t j, std::size_t) {
          return ens.tc[p].lambda_b[j] * (1.0 + ens.grid.node(j));
        });
    const DualityStatistic st = duality_check(xi, phi, ens, ctx);
    REQUIRE(std::abs(st.gap) <= 3.0 * st.se);
  }
}

TEST_CASE("duality is exact on the enumerated two-cell toy") {
  const PathEnsemble ens = enumeration_toy();
  const FeatureContext ctx{&ens, nullptr};

  std::vector<double> xi(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    const double b0 = ens.noise[p].dB[0], h0 = ens.noise[p].dH[0][0];
    const double b1 = ens.noise[p].dB[1], h1 = ens.noise[p].dH[1][0];
    xi[p] = b0 * b1 + 2.0 * h0 * b1 - b0 * h1 + b0 + 0.5 * h0 * h1;
  }

  // Saturated predictable basis: past increments and their product.
  InformationLevel lv;
  lv.flow = Flow::kNoiseAndTimeChange;
  lv.features.push_back({"b0", [](const FeatureContext& c, std::size_t p, std::size_t cell) {
                           return cell >= 1 ? c.ens->noise[p].dB[0] : 0.0;
                         }});
  lv.features.push_back({"h0", [](const FeatureContext& c, std::size_t p, std::size_t cell) {
                           return cell >= 1 ? c.ens->noise[p].dH[0][0] : 0.0;
                         }});
  lv.features.push_back({"b0h0", [](const FeatureContext& c, std::size_t p, std::size_t cell) {
                           return cell >= 1 ? c.ens->noise[p].dB[0] * c.ens->noise[p].dH[0][0]
                                            : 0.0;
                         }});
  NaDerivativeOptions opt;
  opt.basis.degree = 1;
  opt.basis.ridge = 0.0;
  opt.base_basis.ridge = 0.0;
  opt.pred_level = lv;
  NaDerivativeField field = na_derivative(xi, ens, ctx, opt);

  // Enumeration oracle: conditional covariance ratio grouping on the exact
  // past outcome, independent of the estimator above.
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t m = 0; m < 2; ++m) {
      for (std::size_t p = 0; p < 16; ++p) {
        double num = 0.0, den = 0.0;
        for (std::size_t q = 0; q < ens.paths(); ++q) {
          bool same_past = true;
          for (std::size_t i = 0; i < j; ++i)
            if (ens.noise[q].dB[i] != ens.noise[p].dB[i] ||
                ens.noise[q].dH[i][0] != ens.noise[p].dH[i][0])
              same_past = false;
          if (!same_past) continue;
          num += xi[q] * ens.increment(q, j, m);
          den += ens.weight(q, j, m);
        }
        // Weights are constant within a past-group, so num/den is exactly
        // E[xi * inc | past] / w.
        REQUIRE_THAT(field.at(p, j, m), Catch::Matchers::WithinAbs(num / den, 1e-10));
      }
    }
  }

  // Pairing identity exact for a predictable field.
  const IntegrandField phi = IntegrandField::from_callback(
      ens, [&](std::size_t p, std::size_t j, std::size_t m) {
        if (j == 0) return m == 0 ? 1.0 : -1.0;
        return m == 0 ? ens.noise[p].dH[0][0] : 1.0 + ens.noise[p].dB[0];
      });
  const DualityStatistic st = duality_check(xi, phi, ens, ctx, opt);
  REQUIRE_THAT(st.gap, Catch::Matchers::WithinAbs(0.0, 1e-12));
}
