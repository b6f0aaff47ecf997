#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "volterra/adjoint.hpp"
#include "volterra/backward.hpp"
#include "volterra/features.hpp"
#include "volterra/forward.hpp"
#include "volterra/hamiltonian.hpp"
#include "volterra/noise.hpp"

using namespace volterra;

namespace {

PathEnsemble make_ens(std::size_t cells, std::size_t paths, double lb = 1.0, double lh = 1.0,
                      std::uint64_t seed = 41, double horizon = 1.0) {
  const TimeGrid grid = build_grid(horizon, cells);
  const MarkSet marks({1.0}, {1.0});
  return sample_ensemble(TimeChangeModel::constant(lb, lh), grid, marks, paths, seed);
}

BackwardSolution flat_backward(std::size_t paths, std::size_t cells, double value = 0.0) {
  BackwardSolution b;
  b.y.assign(paths, std::vector<double>(cells + 1, value));
  return b;
}

}  // namespace

TEST_CASE("driverless system with linear terminal reward gives a constant costate") {
  const auto ens = make_ens(6, 64);
  ForwardCoefficients fc;
  fc.b = [](const KernelArgs&) { return 0.0; };
  fc.kappa = [](double z, const KernelArgs&) { return z == 0.0 ? 0.5 : 0.0; };
  fc.first_arg_static = true;
  BackwardCoefficients bc;
  bc.first_arg_static = true;
  RunningCost rc;
  const HamiltonianSystem sys{&fc, &bc, &rc};
  TerminalCost tc;
  tc.phi = [](double x) { return 3.0 * x; };

  const auto fwd = solve_fsvie(fc, ens, {nullptr, nullptr}, 0.2);
  const auto bsol = flat_backward(ens.paths(), ens.grid.cells());
  const auto zs = solve_z(sys, tc, ens, fwd, bsol);
  CHECK(zs.min_value == 0.0);  // no initial-value reward => z vanishes

  AdjointOptions opt;
  opt.level = level_trivial();
  const auto adj = solve_adjoint_p(sys, tc, ens, fwd, bsol, zs, opt);
  CHECK(adj.iterations <= 2);
  CHECK_FALSE(adj.has_dp);
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    for (double v : adj.p[p]) CHECK(v == Catch::Approx(-3.0).margin(1e-12));
    for (const auto& cell : adj.q[p])
      for (double v : cell) CHECK(std::fabs(v) < 1e-10);
  }
}

TEST_CASE("z matches the exponential growth of its drift equation") {
  const std::size_t cells = 16;
  const double gamma = 1.0;
  const auto ens = make_ens(cells, 256);
  ForwardCoefficients fc;
  fc.b = [](const KernelArgs&) { return 0.0; };
  fc.kappa = [](double, const KernelArgs&) { return 0.0; };
  fc.first_arg_static = true;
  BackwardCoefficients bc;
  bc.g = [gamma](const KernelArgs& a, const ThetaView&) { return gamma * a.y; };
  bc.dg_dy = [gamma](const KernelArgs&, const ThetaView&) { return gamma; };
  bc.h = [](double) { return 1.0; };
  bc.first_arg_static = true;
  RunningCost rc;
  const HamiltonianSystem sys{&fc, &bc, &rc};
  TerminalCost tc;
  tc.psi = [](double y) { return y; };
  tc.dpsi = [](double) { return 1.0; };

  const auto fwd = solve_fsvie(fc, ens, {nullptr, nullptr}, 0.0);
  BackwardOptions bopt;
  bopt.level = level_trivial();
  const auto bsol = solve_bsvie(bc, ens, fwd, bopt);
  const auto zs = solve_z(sys, tc, ens, fwd, bsol);

  const double dt = ens.grid.dt(0);
  double max_rel = 0.0;
  for (std::size_t i = 0; i <= cells; ++i) {
    const double t = ens.grid.node(i);
    const double exact = std::exp(gamma * t);
    const double discrete = std::pow(1.0 + gamma * dt, static_cast<double>(i));
    CHECK(zs.z[0][i] == Catch::Approx(discrete).epsilon(1e-12));
    max_rel = std::max(max_rel, std::fabs(zs.z[0][i] - exact) / exact);
  }
  CHECK(max_rel <= 2.0 / static_cast<double>(cells));
  CHECK(zs.min_value == Catch::Approx(1.0));
  // identical across paths: the drift equation is deterministic
  CHECK(zs.z[17] == zs.z[0]);
}

TEST_CASE("z noise coefficients divide jump partials by the mark mass") {
  const auto ens = make_ens(5, 40, 1.3, 0.8, 99);
  ForwardCoefficients fc;
  fc.b = [](const KernelArgs&) { return 0.0; };
  fc.kappa = [](double, const KernelArgs&) { return 0.0; };
  BackwardCoefficients bc;
  bc.dg_dtheta0 = [](const KernelArgs&, const ThetaView&) { return 0.4; };
  bc.dg_dthetak = [](std::size_t, const KernelArgs&, const ThetaView&) { return 0.25; };
  RunningCost rc;
  const HamiltonianSystem sys{&fc, &bc, &rc};
  TerminalCost tc;
  tc.psi = [](double y) { return y; };
  tc.dpsi = [](double) { return 1.0; };

  const auto fwd = solve_fsvie(fc, ens, {nullptr, nullptr}, 0.0);
  const auto bsol = flat_backward(ens.paths(), ens.grid.cells());
  const auto zs = solve_z(sys, tc, ens, fwd, bsol);

  const double mass = ens.marks.mass(0);
  double mn = 1e300;
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    double z = 1.0;
    mn = std::min(mn, z);
    for (std::size_t i = 0; i < ens.grid.cells(); ++i) {
      const double step =
          0.4 * z * ens.increment(p, i, 0) + 0.25 * z / mass * ens.increment(p, i, 1);
      z += step;
      CHECK(zs.z[p][i + 1] == Catch::Approx(z).epsilon(1e-13).margin(1e-13));
      mn = std::min(mn, z);
    }
  }
  CHECK(zs.min_value == Catch::Approx(mn).epsilon(1e-13).margin(1e-13));
}

TEST_CASE("delayed drift slope: costate agrees with dense solve and closed form") {
  // Backward relation p(t) = K - int_t^T (a0 + a1 (u - t)) p(u) du, whose
  // closed form comes from the equivalent 2x2 linear system with rates
  // l1 = 0.7, l2 = 0.1 for a0 = 0.8, a1 = 0.07.
  const double a0 = 0.8, a1 = 0.07, K = 1.0, T = 1.0;
  const double l1 = 0.7, l2 = 0.1;
  const auto closed = [&](double t) {
    return K * (l1 * std::exp(l1 * (t - T)) - l2 * std::exp(l2 * (t - T))) / (l1 - l2);
  };

  double prev_err = 0.0;
  for (std::size_t cells : {32u, 64u}) {
    const auto ens = make_ens(cells, 32, 1.0, 1.0, 7, T);
    ForwardCoefficients fc;
    fc.b = [](const KernelArgs&) { return 0.0; };
    fc.kappa = [](double, const KernelArgs&) { return 0.0; };
    fc.db_dx = [=](const KernelArgs& a) { return -(a0 + a1 * (a.t - a.s)); };
    fc.d2b_dtdx = [=](const KernelArgs&) { return -a1; };
    BackwardCoefficients bc;
    RunningCost rc;
    const HamiltonianSystem sys{&fc, &bc, &rc};
    TerminalCost tc;
    tc.phi = [=](double x) { return -K * x; };
    tc.dphi = [=](double) { return -K; };

    const auto fwd = solve_fsvie(fc, ens, {nullptr, nullptr}, 1.0);
    const auto bsol = flat_backward(ens.paths(), cells);
    const auto zs = solve_z(sys, tc, ens, fwd, bsol);

    AdjointOptions opt;
    opt.level = level_trivial();
    opt.picard_tol = 1e-12;
    opt.picard_max = 200;
    const auto adj = solve_adjoint_p(sys, tc, ens, fwd, bsol, zs, opt);
    CHECK(adj.iterations > 1);

    // dense linear system for the same time stepping
    const std::size_t N = cells;
    const double dt = T / static_cast<double>(N);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N + 1, N + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N + 1);
    A(N, N) = 1.0;
    rhs(N) = K;
    for (std::size_t i = 0; i < N; ++i) {
      A(i, i) += 1.0 + a0 * dt;
      A(i, i + 1) -= 1.0;
      for (std::size_t j = i; j < N; ++j) A(i, j) += a1 * dt * dt;
    }
    const Eigen::VectorXd dense = Eigen::FullPivLU<Eigen::MatrixXd>(A).solve(rhs);

    double gap_dense = 0.0, gap_closed = 0.0, qmax = 0.0;
    for (std::size_t i = 0; i <= N; ++i) {
      gap_dense = std::max(gap_dense, std::fabs(adj.p[0][i] - dense(static_cast<long>(i))));
      gap_closed = std::max(gap_closed, std::fabs(adj.p[0][i] - closed(ens.grid.node(i))));
    }
    for (std::size_t p = 0; p < ens.paths(); ++p) {
      REQUIRE(adj.p[p] == adj.p[0]);  // deterministic system
      for (const auto& cell : adj.q[p])
        for (double v : cell) qmax = std::max(qmax, std::fabs(v));
    }
    CHECK(gap_dense <= 1e-8);
    CHECK(gap_closed <= 2.0 / static_cast<double>(N));
    CHECK(qmax <= 1e-8);
    if (cells == 64u) CHECK(gap_closed < prev_err);
    prev_err = gap_closed;
  }
}

TEST_CASE("martingale terminal value: q recovers the noise loading") {
  const double sigma = 0.7, x0 = 0.4;
  const auto ens = make_ens(4, 4000, 1.0, 1.0, 1234);
  ForwardCoefficients fc;
  fc.b = [](const KernelArgs&) { return 0.0; };
  fc.kappa = [sigma](double z, const KernelArgs&) { return z == 0.0 ? sigma : 0.0; };
  fc.first_arg_static = true;
  BackwardCoefficients bc;
  bc.h = [](double x) { return x; };
  bc.dh = [](double) { return 1.0; };
  bc.first_arg_static = true;
  RunningCost rc;
  const HamiltonianSystem sys{&fc, &bc, &rc};
  TerminalCost tc;
  tc.psi = [](double y) { return y; };
  tc.dpsi = [](double) { return 1.0; };

  const auto fwd = solve_fsvie(fc, ens, {nullptr, nullptr}, x0);
  const auto bsol = flat_backward(ens.paths(), ens.grid.cells());
  const auto zs = solve_z(sys, tc, ens, fwd, bsol);
  for (std::size_t p = 0; p < ens.paths(); ++p)
    for (double v : zs.z[p]) REQUIRE(v == 1.0);

  AdjointOptions opt;
  opt.level.features = {feat::state()};
  SECTION("state costate follows the projected terminal value") {
    const auto adj = solve_adjoint_p(sys, tc, ens, fwd, bsol, zs, opt);

    // p(t_i) ~ E[X(T) | X(t_i)] = X(t_i)
    double worst = 0.0;
    for (std::size_t i = 0; i < ens.grid.cells(); ++i) {
      double dev = 0.0;
      for (std::size_t p = 0; p < ens.paths(); ++p)
        dev += std::fabs(adj.p[p][i] - fwd.x[p][i]);
      worst = std::max(worst, dev / static_cast<double>(ens.paths()));
    }
    CHECK(worst <= 0.05);

    for (std::size_t i = 0; i < ens.grid.cells(); ++i) {
      double q0 = 0.0, q1 = 0.0;
      for (std::size_t p = 0; p < ens.paths(); ++p) {
        q0 += adj.q[p][i][0];
        q1 += std::fabs(adj.q[p][i][1]);
      }
      q0 /= static_cast<double>(ens.paths());
      q1 /= static_cast<double>(ens.paths());
      CHECK(q0 == Catch::Approx(sigma).margin(0.1));
      CHECK(q1 <= 0.1);
    }
  }

  SECTION("gradient-form terminal condition flips to the payoff slope") {
    opt.terminal = TerminalForm::kGradient;
    const auto adj = solve_adjoint_p(sys, tc, ens, fwd, bsol, zs, opt);
    for (std::size_t p = 0; p < ens.paths(); ++p)
      for (double v : adj.p[p]) CHECK(v == Catch::Approx(1.0).margin(1e-8));
  }

  SECTION("noise-kernel time derivative activates the derivative tables") {
    ForwardCoefficients fc2 = fc;
    fc2.first_arg_static = false;
    fc2.dkappa_dt = [](double, const KernelArgs&) { return 0.0; };
    const HamiltonianSystem sys2{&fc2, &bc, &rc};
    const auto adj = solve_adjoint_p(sys2, tc, ens, fwd, bsol, zs, opt);
    REQUIRE(adj.has_dp);
    REQUIRE(adj.dp.size() == ens.grid.cells());

    // p(t_j) ~ x0 + sigma B(t_j): bump responses at earlier cells sit near sigma
    const std::size_t j = ens.grid.cells() - 1;
    double mean = 0.0;
    for (std::size_t p = 0; p < ens.paths(); ++p) mean += adj.dp[j].at(p, 0, 0);
    mean /= static_cast<double>(ens.paths());
    CHECK(mean == Catch::Approx(sigma).margin(0.15));
  }
}

TEST_CASE("projections of deterministic adjoints reproduce them exactly") {
  const auto ens = make_ens(8, 48);
  ForwardCoefficients fc;
  fc.b = [](const KernelArgs&) { return 0.0; };
  fc.kappa = [](double, const KernelArgs&) { return 0.0; };
  fc.db_dx = [](const KernelArgs&) { return -0.5; };
  BackwardCoefficients bc;
  RunningCost rc;
  const HamiltonianSystem sys{&fc, &bc, &rc};
  TerminalCost tc;
  tc.phi = [](double x) { return -2.0 * x; };
  tc.psi = [](double y) { return 0.5 * y; };

  const auto fwd = solve_fsvie(fc, ens, {nullptr, nullptr}, 1.0);
  const auto bsol = flat_backward(ens.paths(), ens.grid.cells());
  const auto zs = solve_z(sys, tc, ens, fwd, bsol);
  AdjointOptions opt;
  opt.level = level_trivial();
  const auto adj = solve_adjoint_p(sys, tc, ens, fwd, bsol, zs, opt);

  const auto proj = project_adjoint(ens, fwd, adj, zs, level_trivial(), RegressionBasis{});
  for (std::size_t p = 0; p < ens.paths(); ++p) {
    for (std::size_t i = 0; i <= ens.grid.cells(); ++i) {
      CHECK(proj.p[p][i] == Catch::Approx(adj.p[p][i]).margin(1e-10));
      CHECK(proj.z[p][i] == Catch::Approx(zs.z[p][i]).margin(1e-10));
    }
    for (const auto& cell : proj.q[p])
      for (double v : cell) CHECK(std::fabs(v) < 1e-8);
  }
}

TEST_CASE("fixed point failure modes raise typed errors") {
  const auto ens = make_ens(4, 32);
  ForwardCoefficients fc;
  fc.b = [](const KernelArgs&) { return 0.0; };
  fc.kappa = [](double, const KernelArgs&) { return 0.0; };
  BackwardCoefficients bc;
  RunningCost rc;
  TerminalCost tc;
  tc.phi = [](double x) { return -x; };
  const auto fwd = solve_fsvie(fc, ens, {nullptr, nullptr}, 1.0);
  const auto bsol = flat_backward(ens.paths(), ens.grid.cells());

  AdjointOptions opt;
  opt.level = level_trivial();

  SECTION("strong anticipated coupling diverges with a defect trace") {
    ForwardCoefficients fc2 = fc;
    fc2.db_dx = [](const KernelArgs&) { return 0.0; };
    fc2.d2b_dtdx = [](const KernelArgs&) { return -40.0; };
    const HamiltonianSystem sys{&fc2, &bc, &rc};
    const auto zs = solve_z(sys, tc, ens, fwd, bsol);
    opt.picard_max = 30;
    try {
      solve_adjoint_p(sys, tc, ens, fwd, bsol, zs, opt);
      FAIL("expected NoConvergence");
    } catch (const NoConvergence& e) {
      CHECK_FALSE(e.defects.empty());
    }
  }

  SECTION("diagonal slope cancelling the time step is rejected") {
    ForwardCoefficients fc2 = fc;
    fc2.db_dx = [&](const KernelArgs&) { return 1.0 / ens.grid.dt(0); };
    const HamiltonianSystem sys{&fc2, &bc, &rc};
    const auto zs = solve_z(sys, tc, ens, fwd, bsol);
    CHECK_THROWS_AS(solve_adjoint_p(sys, tc, ens, fwd, bsol, zs, opt), NumericalBlowup);
  }
}
