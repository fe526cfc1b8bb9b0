#include <catch2/catch_amalgamated.hpp>

#include "gridflex/bench.hpp"
#include "gridflex/linearizer.hpp"
#include "gridflex/rng.hpp"
#include "support/helpers.hpp"

using namespace gridflex;

TEST_CASE("two-bus Jacobian at the flat start matches hand derivation") {
  const Network net = testsupport::two_bus_net();
  const LinearModel lm = linearize(net);
  // y = 1/(0.01+0.05j) = g + jb
  const std::complex<double> y = net.branches[0].y;
  const double g = y.real(), b = y.imag();

  // dp/dv = G, dp/dtheta = -B, dq/dv = -B, dq/dtheta = -G
  const int N = 2;
  CHECK(lm.B_blk(0, 0) == Catch::Approx(g));        // dp0/dv0 = G00
  CHECK(lm.B_blk(0, 1) == Catch::Approx(-g));       // dp0/dv1 = G01
  CHECK(lm.B_blk(0, N + 0) == Catch::Approx(-b));   // dp0/dth0 = -B00
  CHECK(lm.B_blk(0, N + 1) == Catch::Approx(b));    // dp0/dth1 = -B01
  CHECK(lm.B_blk(N + 1, 0) == Catch::Approx(b));    // dq1/dv0 = -B10
  CHECK(lm.B_blk(N + 1, 1) == Catch::Approx(-b));   // dq1/dv1 = -B11
  CHECK(lm.B_blk(N + 1, N + 1) == Catch::Approx(-g));  // dq1/dth1 = -G11
  // residual columns
  CHECK(lm.B_blk(0, 2 * N + 0) == -1.0);
  CHECK(lm.B_blk(N + 1, 3 * N + 1) == -1.0);
}

TEST_CASE("expansion point is exact: zero injections give the flat state") {
  const Network net = testsupport::three_bus_net();
  const LinearModel lm = linearize(net);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  const LinearPrediction pred = predict(lm, zero, zero);
  CHECK(pred.v.isApprox(Eigen::VectorXd::Ones(3), 1e-12));
  CHECK(pred.theta.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(pred.slack_p) < 1e-12);

  // first two block rows vanish at the linearization point
  Eigen::VectorXd x_grid = Eigen::VectorXd::Zero(4 * 3);
  x_grid.head(3).setOnes();  // v = 1, theta = p = q = 0
  CHECK((lm.B_blk * x_grid).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("disconnected network cannot be linearized") {
  Network net = testsupport::three_bus_net();
  net.branches.pop_back();
  REQUIRE_THROWS_AS(linearize(net), ValidationError);
}

TEST_CASE("solve_ac basics") {
  const Network net = testsupport::two_bus_net();

  SECTION("zero injections: flat, lossless") {
    const Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
    const AcSolution sol = solve_ac(net, z, z);
    CHECK(sol.v(1) == Catch::Approx(1.0));
    CHECK(std::abs(sol.slack_p) < 1e-10);
    CHECK(sol.branch_i(0) < 1e-10);
  }

  SECTION("load draws more than itself from the slack (losses)") {
    Eigen::VectorXd p(2), q(2);
    p << 0.0, -0.1;
    q << 0.0, 0.0;
    const AcSolution sol = solve_ac(net, p, q);
    CHECK(sol.v(1) < 1.0);
    CHECK(sol.slack_p > 0.1);
    // closed form for the two-bus case: S = V2 conj(I), I = y (V1 - V2)
    const std::complex<double> y = net.branches[0].y;
    std::complex<double> v2(sol.v(1) * std::cos(sol.theta(1)),
                            sol.v(1) * std::sin(sol.theta(1)));
    const std::complex<double> i = y * (1.0 - v2);
    const std::complex<double> s2 = v2 * std::conj(i);
    CHECK(s2.real() == Catch::Approx(0.1).margin(1e-8));
  }

  SECTION("absurd loading fails with a mismatch report") {
    Eigen::VectorXd p(2), q(2);
    p << 0.0, -100.0;
    q << 0.0, 0.0;
    REQUIRE_THROWS_AS(solve_ac(net, p, q), SolveError);
  }
}

TEST_CASE("branch_current") {
  const Network net = testsupport::two_bus_net();
  AcSolution sol;
  sol.v = Eigen::VectorXd::Ones(2);
  sol.theta = Eigen::VectorXd::Zero(2);

  SECTION("equal phasors carry nothing") {
    CHECK(branch_current(sol, net.branches[0]) == 0.0);
  }

  SECTION("pure magnitude difference") {
    Branch br;
    br.from_bus = 0;
    br.to_bus = 1;
    br.y = std::complex<double>(6.0, -8.0);  // |y| = 10
    br.i_eff_max = 1.0;
    sol.v(1) = 0.99;
    CHECK(branch_current(sol, br) == Catch::Approx(0.1));
  }
}

TEST_CASE("analytic Jacobian matches central finite differences") {
  BenchSpec spec;
  spec.n_days = 1;
  const Network net = generate(spec).network;
  const int N = net.n_buses();
  Eigen::MatrixXd G, B;
  build_ybus(net, G, B);

  Rng rng(3);
  Eigen::VectorXd v(N), theta(N);
  for (int i = 0; i < N; ++i) {
    v(i) = 1.0 + 0.03 * rng.normal();
    theta(i) = 0.02 * rng.normal();
  }

  Eigen::VectorXd p0, q0;
  detail::injections(G, B, v, theta, p0, q0);

  const double h = 1e-6;
  double worst = 0.0;
  for (int j = 0; j < N; ++j) {
    for (int what = 0; what < 2; ++what) {
      Eigen::VectorXd vp = v, vm = v, tp = theta, tm = theta;
      if (what == 0) {
        vp(j) += h;
        vm(j) -= h;
      } else {
        tp(j) += h;
        tm(j) -= h;
      }
      Eigen::VectorXd pp, qp_, pm, qm;
      detail::injections(G, B, vp, tp, pp, qp_);
      detail::injections(G, B, vm, tm, pm, qm);
      for (int i = 0; i < N; ++i) {
        // analytic entries, same formulas the Newton solver assembles
        double dp, dq;
        if (i == j) {
          if (what == 0) {
            dp = p0(i) / v(i) + G(i, i) * v(i);
            dq = q0(i) / v(i) - B(i, i) * v(i);
          } else {
            dp = -q0(i) - B(i, i) * v(i) * v(i);
            dq = p0(i) - G(i, i) * v(i) * v(i);
          }
        } else {
          const double dt = theta(i) - theta(j);
          const double c = std::cos(dt), s = std::sin(dt);
          if (what == 0) {
            dp = v(i) * (G(i, j) * c + B(i, j) * s);
            dq = v(i) * (G(i, j) * s - B(i, j) * c);
          } else {
            dp = v(i) * v(j) * (G(i, j) * s - B(i, j) * c);
            dq = -v(i) * v(j) * (G(i, j) * c + B(i, j) * s);
          }
        }
        const double fdp = (pp(i) - pm(i)) / (2 * h);
        const double fdq = (qp_(i) - qm(i)) / (2 * h);
        const double scale = std::max({1.0, std::abs(dp), std::abs(dq)});
        worst = std::max(worst, std::abs(dp - fdp) / scale);
        worst = std::max(worst, std::abs(dq - fdq) / scale);
      }
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("linear model tracks the AC solution on the benchmark") {
  BenchSpec spec;
  spec.n_days = 1;
  const Network net = generate(spec).network;
  const LinearModel lm = linearize(net);
  Rng rng(17);

  double worst_v = 0.0, worst_i = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(net.n_buses());
    Eigen::VectorXd q = Eigen::VectorXd::Zero(net.n_buses());
    for (int i = 0; i < net.n_buses(); ++i) {
      if (i == net.slack_bus) continue;
      p(i) = 0.2 * (2 * rng.uniform() - 1);
      q(i) = 0.33 * p(i);
    }
    const LinearPrediction lp = predict(lm, p, q);
    const AcSolution ac = solve_ac(net, p, q);
    for (int i = 0; i < net.n_buses(); ++i)
      worst_v = std::max(worst_v, std::abs(lp.v(i) - ac.v(i)) / ac.v(i));
    for (int k = 0; k < net.n_branches(); ++k) {
      const Branch& br = net.branches[k];
      const std::complex<double> vi =
          std::polar(lp.v(br.from_bus), lp.theta(br.from_bus));
      const std::complex<double> vj =
          std::polar(lp.v(br.to_bus), lp.theta(br.to_bus));
      // Relative where the branch carries something. Near zero flow the AC
      // current is pure network losses, which any first-order model misses,
      // so the yardstick never drops below 10 % of the branch ampacity.
      const double i_lin = std::abs(br.y) * std::abs(vi - vj);
      const double i_rated =
          current_to_pu(br.i_eff_max, net.v_base, net.s_base);
      const double err = std::abs(i_lin - ac.branch_i(k)) /
                         std::max(ac.branch_i(k), 0.1 * i_rated);
      worst_i = std::max(worst_i, err);
    }
  }
  CHECK(worst_v < 0.02);
  CHECK(worst_i < 0.05);
}

TEST_CASE("Newton from the linear prediction reduces the residual") {
  BenchSpec spec;
  spec.n_days = 1;
  const Network net = generate(spec).network;
  const LinearModel lm = linearize(net);
  Rng rng(29);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.n_buses());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(net.n_buses());
  for (int i = 0; i < net.n_buses(); ++i) {
    if (i == net.slack_bus) continue;
    p(i) = 0.15 * (2 * rng.uniform() - 1);
    q(i) = 0.33 * p(i);
  }
  const LinearPrediction lp = predict(lm, p, q);
  const double r0 = ac_residual_norm(net, p, q, lp.v, lp.theta);
  Eigen::MatrixXd G, B;
  build_ybus(net, G, B);
  Eigen::VectorXd v = lp.v, theta = lp.theta;
  newton_step(net, G, B, p, q, v, theta);
  const double r1 = ac_residual_norm(net, p, q, v, theta);
  CHECK(r1 < r0);
}
