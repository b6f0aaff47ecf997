#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "volterra/noise.hpp"

using namespace volterra;

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_CASE("build_grid produces a uniform partition") {
  const TimeGrid g = build_grid(2.0, 8);
  REQUIRE(g.cells() == 8);
  REQUIRE(g.node(0) == 0.0);
  REQUIRE(g.horizon() == 2.0);
  double total = 0.0;
  for (std::size_t j = 0; j < g.cells(); ++j) total += g.dt(j);
  REQUIRE_THAT(total, Catch::Matchers::WithinAbs(2.0, 1e-12));
}

TEST_CASE("build_grid rejects degenerate input") {
  REQUIRE_THROWS_AS(build_grid(0.0, 4), InvalidArgument);
  REQUIRE_THROWS_AS(build_grid(-1.0, 4), InvalidArgument);
  REQUIRE_THROWS_AS(build_grid(1.0, 0), InvalidArgument);
  REQUIRE_THROWS_AS(TimeGrid({0.0, 0.5, 0.5, 1.0}), InvalidArgument);
}

TEST_CASE("MarkSet validates masses and reserved point") {
  REQUIRE_THROWS_AS(MarkSet({0.0}, {1.0}), InvalidArgument);
  REQUIRE_THROWS_AS(MarkSet({1.0}, {-0.5}), InvalidArgument);
  REQUIRE_THROWS_AS(MarkSet({1.0, 2.0}, {0.5}), InvalidArgument);
  const MarkSet m({-1.0, 2.0}, {0.5, 0.0});
  REQUIRE(m.size() == 2);
  REQUIRE(m.mass(1) == 0.0);
}

TEST_CASE("lambda weights follow intensity x mass x cell width") {
  const TimeGrid g = build_grid(1.0, 4);
  const MarkSet marks({1.0, -2.0}, {0.5, 0.2});
  TimeChangePath tc;
  tc.lambda_b.assign(4, 2.0);
  tc.lambda_h.assign(4, 3.0);
  for (std::size_t j = 0; j < 4; ++j) {
    REQUIRE_THAT(lambda_weight(tc, g, marks, j, 0), Catch::Matchers::WithinAbs(0.5, 1e-15));
    REQUIRE_THAT(lambda_weight(tc, g, marks, j, 1), Catch::Matchers::WithinAbs(0.375, 1e-15));
    REQUIRE_THAT(lambda_weight(tc, g, marks, j, 2), Catch::Matchers::WithinAbs(0.15, 1e-15));
  }
}

TEST_CASE("deterministic intensity evaluates at left endpoints") {
  const TimeGrid g = build_grid(1.0, 4);
  TimeChangeModel model;
  model.det.lambda_b = [](double t) { return 1.0 + t; };
  model.det.lambda_h = [](double t) { return 2.0 * t; };
  RngStream rng(1, StreamPurpose::kTimeChange, 0);
  const TimeChangePath tc = sample_time_change(model, g, rng);
  REQUIRE_THAT(tc.lambda_b[2], Catch::Matchers::WithinAbs(1.5, 1e-15));
  REQUIRE_THAT(tc.lambda_h[3], Catch::Matchers::WithinAbs(1.5, 1e-15));
}

TEST_CASE("negative deterministic intensity is rejected") {
  const TimeGrid g = build_grid(1.0, 4);
  TimeChangeModel model;
  model.det.lambda_b = [](double t) { return 0.5 - t; };
  RngStream rng(1, StreamPurpose::kTimeChange, 0);
  REQUIRE_THROWS_AS(sample_time_change(model, g, rng), InvalidArgument);
}

TEST_CASE("ensembles are reproducible and worker-count independent") {
  const TimeGrid g = build_grid(1.0, 6);
  const MarkSet marks({1.0, -0.5}, {0.4, 0.6});
  TimeChangeModel model;
  model.kind = TimeChangeModel::Kind::kPiecewiseLognormal;

  const PathEnsemble a = sample_ensemble(model, g, marks, 64, 42, 1);
  const PathEnsemble b = sample_ensemble(model, g, marks, 64, 42, 4);
  const PathEnsemble c = sample_ensemble(model, g, marks, 128, 42, 3);

  for (std::size_t p = 0; p < 64; ++p) {
    for (std::size_t j = 0; j < g.cells(); ++j) {
      REQUIRE(a.noise[p].dB[j] == b.noise[p].dB[j]);
      REQUIRE(a.noise[p].dB[j] == c.noise[p].dB[j]);
      REQUIRE(a.tc[p].lambda_b[j] == c.tc[p].lambda_b[j]);
      for (std::size_t k = 0; k < marks.size(); ++k) {
        REQUIRE(a.noise[p].dH[j][k] == b.noise[p].dH[j][k]);
        REQUIRE(a.noise[p].dH[j][k] == c.noise[p].dH[j][k]);
      }
    }
  }

  const PathEnsemble d = sample_ensemble(model, g, marks, 64, 43, 1);
  bool any_diff = false;
  for (std::size_t p = 0; p < 64 && !any_diff; ++p)
    if (a.noise[p].dB[0] != d.noise[p].dB[0]) any_diff = true;
  REQUIRE(any_diff);
}

TEST_CASE("Gaussian increments have the prescribed conditional variance") {
  const TimeGrid g = build_grid(1.0, 4);
  const MarkSet marks({1.0}, {0.5});
  const TimeChangeModel model = TimeChangeModel::constant(2.0, 0.0);
  const PathEnsemble ens = sample_ensemble(model, g, marks, 20000, 7);

  std::vector<double> db(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p) db[p] = ens.noise[p].dB[1];
  const double want = 2.0 * 0.25;
  const double se = want * std::sqrt(2.0 / static_cast<double>(ens.paths() - 1));
  REQUIRE(std::abs(mean_of(db)) < 3.0 * std::sqrt(want / static_cast<double>(ens.paths())));
  REQUIRE(std::abs(var_of(db) - want) < 3.0 * se);
}

TEST_CASE("compensated jump increments match the total-variance identity") {
  const TimeGrid g = build_grid(1.0, 4);
  const MarkSet marks({1.0, -2.0}, {0.8, 0.3});
  TimeChangeModel model;
  model.kind = TimeChangeModel::Kind::kPiecewiseLognormal;
  model.pwl.segments = 2;
  model.pwl.meanlog_h = 0.1;
  model.pwl.sdlog_h = 0.4;
  const PathEnsemble ens = sample_ensemble(model, g, marks, 20000, 11);

  // Var(dH) = E[Var(dH | lambda)] + Var(E[dH | lambda]) = E[lambda_h] nu dt.
  const double elh = std::exp(0.1 + 0.4 * 0.4 / 2.0);
  for (std::size_t k = 0; k < marks.size(); ++k) {
    std::vector<double> dh(ens.paths());
    for (std::size_t p = 0; p < ens.paths(); ++p) dh[p] = ens.noise[p].dH[2][k];
    const double want = elh * marks.mass(k) * 0.25;
    REQUIRE(std::abs(mean_of(dh)) < 3.0 * std::sqrt(var_of(dh) / static_cast<double>(ens.paths())));
    // Conservative spread bound for the variance estimate of a non-Gaussian sample.
    const double se = want * std::sqrt(6.0 / static_cast<double>(ens.paths()));
    REQUIRE(std::abs(var_of(dh) - want) < 4.0 * se + 4.0 / static_cast<double>(ens.paths()));
  }
}

TEST_CASE("mean-reverting intensity holds its stationary mean") {
  const TimeGrid g = build_grid(1.0, 16);
  const MarkSet marks({1.0}, {0.5});
  TimeChangeModel model;
  model.kind = TimeChangeModel::Kind::kMeanReverting;
  model.mrd = MeanRevertingIntensity{1.0, 2.0, 1.0, 0.3, 0.8, 2.0, 0.8, 0.25};
  const PathEnsemble ens = sample_ensemble(model, g, marks, 10000, 5);

  std::vector<double> lb(ens.paths()), lh(ens.paths());
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    lb[p] = ens.tc[p].lambda_b[g.cells() - 1];
    lh[p] = ens.tc[p].lambda_h[g.cells() - 1];
  }
  REQUIRE(std::abs(mean_of(lb) - 1.0) <
          3.0 * std::sqrt(var_of(lb) / static_cast<double>(ens.paths())));
  REQUIRE(std::abs(mean_of(lh) - 0.8) <
          3.0 * std::sqrt(var_of(lh) / static_cast<double>(ens.paths())));
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    REQUIRE(lb[p] >= 0.0);
    REQUIRE(lh[p] >= 0.0);
  }
}

TEST_CASE("poisson sampler is exact in mean and variance") {
  RngStream rng(123, StreamPurpose::kPoisson, 9);
  for (double mean : {0.3, 3.7, 47.0}) {
    const std::size_t n = 20000;
    std::vector<double> draws(n);
    for (std::size_t i = 0; i < n; ++i) draws[i] = static_cast<double>(rng.poisson(mean));
    REQUIRE(std::abs(mean_of(draws) - mean) < 3.0 * std::sqrt(mean / static_cast<double>(n)));
    const double se = mean * std::sqrt((2.0 + 1.0 / mean) / static_cast<double>(n));
    REQUIRE(std::abs(var_of(draws) - mean) < 4.0 * se);
  }
}
