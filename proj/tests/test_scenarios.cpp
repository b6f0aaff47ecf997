#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "volterra/scenarios.hpp"

using namespace volterra;

TEST_CASE("dense costate reference matches closed forms") {
  Scenario51 sp;

  SECTION("constant lag weight reduces to an exponential") {
    sp.alpha1 = 0.0;
    const auto p = dense_adjoint_51(sp, 64, 64);
    for (std::size_t i = 0; i <= 64; ++i) {
      const double t = static_cast<double>(i) / 64.0;
      const double ref = sp.terminal_slope * std::exp(-sp.alpha0 * (sp.horizon - t));
      CHECK(std::abs(p[i] - ref) < 1e-6);
    }
  }

  SECTION("zero lag weight keeps the terminal slope") {
    sp.alpha0 = 0.0;
    sp.alpha1 = 0.0;
    const auto p = dense_adjoint_51(sp, 32, 16);
    for (double v : p) CHECK(v == sp.terminal_slope);
  }

  SECTION("profiles converge under refinement") {
    const auto coarse = dense_adjoint_51(sp, 32, 8);
    const auto mid = dense_adjoint_51(sp, 32, 64);
    const auto fine = dense_adjoint_51(sp, 32, 256);
    double ec = 0.0, em = 0.0;
    for (std::size_t i = 0; i <= 32; ++i) {
      ec = std::max(ec, std::abs(coarse[i] - fine[i]));
      em = std::max(em, std::abs(mid[i] - fine[i]));
    }
    CHECK(em < ec);
    CHECK(em < 1e-5);
  }

  SECTION("default start value is pinned") {
    const auto p = dense_adjoint_51(sp, 64, 64);
    CHECK(p[64] == sp.terminal_slope);
    CHECK(p[0] == Catch::Approx(0.413534341843).epsilon(0.0).margin(1e-9));
    // decreasing toward time zero: the kernel is positive
    for (std::size_t i = 0; i < 64; ++i) CHECK(p[i] < p[i + 1]);
  }
}

TEST_CASE("lagged consumption scenario passes its oracle set and refines") {
  Scenario51 sp;
  RunSettings coarse{32, 800, 4203, 1};
  RunSettings fine{64, 1500, 4203, 1};

  const ScenarioReport r1 = run_scenario_5_1(sp, coarse);
  const ScenarioReport r2 = run_scenario_5_1(sp, fine);

  for (const auto& o : r1.oracles) {
    INFO(o.name << " margin " << o.margin << " tol " << o.tolerance);
    CHECK(o.pass);
  }
  for (const auto& o : r2.oracles) {
    INFO(o.name << " margin " << o.margin << " tol " << o.tolerance);
    CHECK(o.pass);
  }
  REQUIRE(r1.find("costate-vs-dense") != nullptr);
  REQUIRE(r2.find("costate-vs-dense") != nullptr);
  WARN("costate-vs-dense margins: N=32 " << r1.find("costate-vs-dense")->margin << ", N=64 "
                                         << r2.find("costate-vs-dense")->margin);
  WARN("first-order-residual margins: N=32 " << r1.find("first-order-residual")->margin
                                             << ", N=64 "
                                             << r2.find("first-order-residual")->margin);
  CHECK(r2.find("costate-vs-dense")->margin < r1.find("costate-vs-dense")->margin);

  std::set<std::string> names;
  for (const auto& o : r2.oracles) names.insert(o.name);
  CHECK(names.size() == r2.oracles.size());
  CHECK(r2.nodes.size() == 65);
  CHECK(r2.find("not-an-oracle") == nullptr);
  CHECK(r2.all_pass());
}

TEST_CASE("recursive consumption scenario: rate identity and projection") {
  SECTION("no discounting") {
    Scenario52 sp;
    const ScenarioReport rep = run_scenario_5_2(sp, RunSettings{64, 4000, 911, 1});
    for (const auto& o : rep.oracles) {
      INFO(o.name << " margin " << o.margin << " tol " << o.tolerance);
      CHECK(o.pass);
    }
    WARN("rate-identity margin " << rep.find("rate-identity")->margin);
    WARN("first-order-residual margin " << rep.find("first-order-residual")->margin);
    CHECK(rep.all_pass());
    REQUIRE(rep.find("discount-flow") != nullptr);
    CHECK(rep.find("discount-flow")->margin == 0.0);
  }

  SECTION("with discounting") {
    Scenario52 sp;
    sp.gamma = 0.3;
    const ScenarioReport rep = run_scenario_5_2(sp, RunSettings{32, 1500, 911, 1});
    const OracleResult* zf = rep.find("discount-flow");
    REQUIRE(zf != nullptr);
    CHECK(zf->pass);
    CHECK(zf->margin > 0.0);
    CHECK_FALSE(zf->note.empty());
    const OracleResult* ri = rep.find("rate-identity");
    REQUIRE(ri != nullptr);
    INFO("rate-identity margin " << ri->margin);
    CHECK(ri->pass);
  }
}

TEST_CASE("toy corpus fixtures solve end to end") {
  auto corpus = toy_corpus();
  REQUIRE(corpus.size() == 5);
  std::set<std::string> names;
  for (const auto& f : corpus) names.insert(f.name);
  CHECK(names.size() == corpus.size());

  const TimeGrid grid = build_grid(1.0, 16);
  for (const auto& f : corpus) {
    DYNAMIC_SECTION("fixture " << f.name) {
      PathEnsemble ens = sample_ensemble(f.model, grid, f.marks, 400, 606);
      ControlProcess c0 = ControlProcess::constant(0, f.start[0], 16, f.game.players[0].box,
                                                   f.game.players[0].level);
      ControlProcess c1 = ControlProcess::constant(1, f.start[1], 16, f.game.players[1].box,
                                                   f.game.players[1].level);
      const GameSolution g = solve_game(f.game, ens, {&c0, &c1}, f.options);
      const PerformanceReport perf = estimate_performance(f.game, ens, g.fwd, g.bwd);
      CHECK(std::isfinite(perf.value[0]));
      CHECK(std::isfinite(perf.value[1]));
      for (std::size_t m = 0; m < 2; ++m) {
        const ResidualField r = necessary_residual(f.game, ens, g, m);
        CHECK(std::isfinite(r.max_abs));
        CHECK(std::isfinite(r.rms));
      }
      if (f.name == "jump-only") {
        for (std::size_t p = 0; p < 10; ++p)
          for (std::size_t j = 0; j < 16; ++j) {
            CHECK(ens.weight(p, j, 0) == 0.0);
            CHECK(ens.increment(p, j, 0) == 0.0);
          }
      }
      if (f.name == "feedback-rate") {
        double ymax = 0.0;
        for (std::size_t p = 0; p < ens.paths(); ++p)
          ymax = std::max(ymax, std::abs(g.bwd.y[p][0]));
        CHECK(ymax > 0.0);
      }
    }
  }
}

TEST_CASE("infeasible consumption settings surface as scenario errors") {
  Scenario52 sp;
  sp.c_min = 70.0;
  sp.c_max = 70.0;
  const RunSettings rs{16, 60, 5150, 1};
  CHECK_THROWS_AS(run_scenario_5_2(sp, rs), ScenarioInfeasible);
  CHECK_THROWS_WITH(run_scenario_5_2(sp, rs),
                    Catch::Matchers::ContainsSubstring("positive"));
}
