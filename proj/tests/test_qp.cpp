#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "gridflex/qp.hpp"
#include "gridflex/rng.hpp"
#include "support/helpers.hpp"

using namespace gridflex;
using testsupport::DenseQp;

namespace {

QpProblem toy_bound_problem() {
  // min 1/2 x^2  s.t.  x >= 1   (as -x <= -1)
  QpProblem p;
  p.M.resize(1, 1);
  p.M.insert(0, 0) = 1.0;
  p.d = Vec::Zero(1);
  p.A.resize(0, 1);
  p.b = Vec(0);
  p.G.resize(1, 1);
  p.G.insert(0, 0) = -1.0;
  p.h = Vec::Constant(1, -1.0);
  p.lb = Vec::Constant(1, -kInf);
  p.ub = Vec::Constant(1, kInf);
  return p;
}

}  // namespace

TEST_CASE("active bound toy: x* = 1") {
  const QpProblem p = toy_bound_problem();
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x(0) == Catch::Approx(1.0).margin(1e-8));
  CHECK(s.objective == Catch::Approx(0.5).margin(1e-8));
  for (double r : s.kkt) CHECK(r <= 1e-9);
}

TEST_CASE("equality toy: symmetric split") {
  QpProblem p;
  p.M.resize(2, 2);
  p.M.insert(0, 0) = 1.0;
  p.M.insert(1, 1) = 1.0;
  p.d = Vec::Zero(2);
  p.A.resize(1, 2);
  p.A.insert(0, 0) = 1.0;
  p.A.insert(0, 1) = 1.0;
  p.b = Vec::Constant(1, 2.0);
  p.G.resize(0, 2);
  p.h = Vec(0);
  p.lb = Vec::Constant(2, -kInf);
  p.ub = Vec::Constant(2, kInf);
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.x(0) == Catch::Approx(1.0).margin(1e-7));
  CHECK(s.x(1) == Catch::Approx(1.0).margin(1e-7));
}

TEST_CASE("x >= 1 and x <= 0 is reported infeasible") {
  QpProblem p;
  p.M.resize(1, 1);
  p.M.insert(0, 0) = 1.0;
  p.d = Vec::Zero(1);
  p.A.resize(0, 1);
  p.b = Vec(0);
  p.G.resize(2, 1);
  p.G.insert(0, 0) = -1.0;  // x >= 1
  p.G.insert(1, 0) = 1.0;   // x <= 0
  p.h = Vec(2);
  p.h << -1.0, 0.0;
  p.lb = Vec::Constant(1, -kInf);
  p.ub = Vec::Constant(1, kInf);
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::infeasible);
}

TEST_CASE("kkt_residuals") {
  const QpProblem p = toy_bound_problem();
  QpSolution s = solve_qp(p);

  SECTION("optimal point passes at 1e-9") {
    const auto k = kkt_residuals(p, s);
    for (double r : k) CHECK(r <= 1e-9);
  }

  SECTION("perturbing x shows up in stationarity") {
    s.x(0) += 0.1;
    const auto k = kkt_residuals(p, s);
    CHECK(k[2] == Catch::Approx(0.1).margin(1e-6));
  }

  SECTION("zero problem is zero everywhere at x = 0") {
    QpProblem z;
    z.M.resize(1, 1);
    z.d = Vec::Zero(1);
    z.A.resize(0, 1);
    z.b = Vec(0);
    z.G.resize(0, 1);
    z.h = Vec(0);
    z.lb = Vec::Constant(1, -kInf);
    z.ub = Vec::Constant(1, kInf);
    QpSolution s0;
    s0.x = Vec::Zero(1);
    s0.y_eq = Vec(0);
    s0.y_ineq = Vec(0);
    s0.y_lb = Vec::Zero(1);
    s0.y_ub = Vec::Zero(1);
    const auto k = kkt_residuals(z, s0);
    for (double r : k) CHECK(r == 0.0);
  }

  SECTION("dimension mismatch rejected") {
    s.x = Vec::Zero(3);
    CHECK_THROWS_AS(kkt_residuals(p, s), ValidationError);
  }
}

TEST_CASE("oracle equivalence on dense instances") {
  Rng rng(42);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const DenseQp dqp = testsupport::random_dense_qp(rng);
    const auto oracle = testsupport::enumerate_optimum(dqp);
    REQUIRE(oracle.has_value());
    const QpProblem p = testsupport::to_sparse(dqp);
    const QpSolution s = solve_qp(p);
    REQUIRE(s.status == QpStatus::optimal);
    CHECK((s.x - oracle->first).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(s.objective - oracle->second) < 1e-6);
    // the returned iterate never beats or misses the optimum beyond tol
    CHECK(s.objective <= oracle->second + 1e-6 * (1 + std::abs(oracle->second)));
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("argmin is invariant to positive cost scaling") {
  Rng rng(7);
  const DenseQp dqp = testsupport::random_dense_qp(rng);
  QpProblem p = testsupport::to_sparse(dqp);
  const QpSolution s1 = solve_qp(p);
  p.M = (7.3 * p.M).eval();
  p.d *= 7.3;
  const QpSolution s2 = solve_qp(p);
  REQUIRE(s1.status == QpStatus::optimal);
  REQUIRE(s2.status == QpStatus::optimal);
  CHECK((s1.x - s2.x).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("deterministic: identical runs give identical iterates") {
  Rng rng(99);
  const QpProblem p = testsupport::random_sparse_qp(rng, 60);
  const QpSolution a = solve_qp(p);
  const QpSolution b = solve_qp(p);
  REQUIRE(a.iterations == b.iterations);
  REQUIRE(a.x.size() == b.x.size());
  for (int i = 0; i < a.x.size(); ++i) {
    CHECK(a.x(i) == b.x(i));  // bit-identical
  }
}

TEST_CASE("iteration cap returns the best iterate flagged") {
  Rng rng(5);
  const QpProblem p = testsupport::random_sparse_qp(rng, 80);
  QpSettings cfg;
  cfg.max_iter = 3;
  cfg.polish = false;
  cfg.check_interval = 1;
  const QpSolution s = solve_qp(p, cfg);
  CHECK(s.status == QpStatus::max_iter);
  CHECK(s.iterations <= 3);
}

TEST_CASE("random sparse problems reach 1e-6 KKT") {
  Rng rng(1234);
  for (int trial = 0; trial < 25; ++trial) {
    const QpProblem p = testsupport::random_sparse_qp(rng, 120);
    const QpSolution s = solve_qp(p);
    REQUIRE(s.status == QpStatus::optimal);
    for (double r : s.kkt) CHECK(r <= 1e-6);
  }
}

TEST_CASE("factorization reuse across vector updates") {
  Rng rng(31);
  QpProblem p = testsupport::random_sparse_qp(rng, 60);
  AdmmSolver solver;
  const QpSolution s1 = solver.solve(p);
  REQUIRE(s1.status == QpStatus::optimal);
  // shift the constraint offsets, same patterns
  p.b *= 0.9;
  p.h.array() += 0.2;
  const QpSolution s2 = solver.solve(p);
  REQUIRE(s2.status == QpStatus::optimal);
  for (double r : s2.kkt) CHECK(r <= 1e-6);
}

TEST_CASE("iteration log lands in the CSV") {
  testsupport::TempDir dir("qplog");
  const QpProblem p = toy_bound_problem();
  QpSettings cfg;
  cfg.iter_log = (dir.path() / "iters.csv").string();
  (void)solve_qp(p, cfg);
  std::ifstream in(dir.path() / "iters.csv");
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header == "iter,primal_res,dual_res,objective");
  std::string row;
  CHECK(std::getline(in, row));
}

TEST_CASE("problem dump is parseable triplet text") {
  const QpProblem p = toy_bound_problem();
  std::ostringstream os;
  dump_problem(p, os);
  const std::string text = os.str();
  CHECK(text.find("M 1 1 1") != std::string::npos);
  CHECK(text.find("G 1 1 1") != std::string::npos);
  CHECK(text.find("lb 1") != std::string::npos);
}
