#pragma once

#include <complex>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflex/grid.hpp"
#include "gridflex/qp.hpp"
#include "gridflex/rng.hpp"

namespace testsupport {

using gridflex::Vec;

// Slack + one PQ bus, storage on the PQ bus. s_base 100 kVA, rating 100 kVA.
inline gridflex::Network two_bus_net(bool with_storage = true) {
  using namespace gridflex;
  Network net;
  net.v_base = 400.0;
  net.s_base = 100e3;
  net.slack_bus = 0;
  net.buses = {{0, BusType::slack, 0.95, 1.05}, {1, BusType::pq, 0.95, 1.05}};
  Branch br;
  br.from_bus = 0;
  br.to_bus = 1;
  br.y = 1.0 / std::complex<double>(0.01, 0.05);
  br.i_eff_max = 270.0;
  br.s_rated = 100e3;
  net.branches = {br};
  net.transformer = 0;
  if (with_storage) net.storages = {{1, 40.0, 18.0, 0.0, 0.8, 10.0}};
  validate(net);
  return net;
}

// Slack + two PQ buses in a line, storages on both PQ buses.
inline gridflex::Network three_bus_net() {
  using namespace gridflex;
  Network net;
  net.v_base = 400.0;
  net.s_base = 100e3;
  net.slack_bus = 0;
  net.buses = {{0, BusType::slack, 0.95, 1.05},
               {1, BusType::pq, 0.95, 1.05},
               {2, BusType::pq, 0.95, 1.05}};
  Branch tr;
  tr.from_bus = 0;
  tr.to_bus = 1;
  tr.y = 1.0 / std::complex<double>(0.012, 0.038);
  tr.i_eff_max = 144.3;
  tr.s_rated = 100e3;
  Branch line;
  line.from_bus = 1;
  line.to_bus = 2;
  line.y = 1.0 / std::complex<double>(0.005, 0.002);
  line.i_eff_max = 270.0;
  net.branches = {tr, line};
  net.transformer = 0;
  net.storages = {{1, 40.0, 18.0, 0.0, 0.8, 10.0},
                  {2, 30.0, 12.0, 0.002, 0.8, 5.0}};
  validate(net);
  return net;
}

inline gridflex::ForecastWindow zero_window(const gridflex::Network& net,
                                            int T) {
  gridflex::ForecastWindow w;
  w.start = 0;
  w.p_inj = Eigen::MatrixXd::Zero(T, net.n_buses());
  w.q_inj = w.p_inj;
  w.p_gen = w.p_inj;
  return w;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("gridflex_test_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// independent optimum for small dense LCQPs: enumerate every active set of
// the inequality rows, solve the equality-constrained KKT system, keep the
// feasible candidate with multiplier signs intact and the lowest objective.

struct DenseQp {
  Eigen::MatrixXd M;
  Vec d;
  Eigen::MatrixXd A;  // equalities
  Vec b;
  Eigen::MatrixXd G;  // one-sided rows Gx <= h (bounds folded in by caller)
  Vec h;
};

inline std::optional<std::pair<Vec, double>> enumerate_optimum(
    const DenseQp& qp, double tol = 1e-9) {
  const int n = static_cast<int>(qp.d.size());
  const int me = static_cast<int>(qp.b.size());
  const int mi = static_cast<int>(qp.h.size());
  std::optional<std::pair<Vec, double>> best;

  for (unsigned mask = 0; mask < (1u << mi); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < mi; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const int na = static_cast<int>(act.size());
    const int dim = n + me + na;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim, dim);
    Vec rhs(dim);
    K.topLeftCorner(n, n) = qp.M;
    rhs.head(n) = -qp.d;
    if (me > 0) {
      K.block(n, 0, me, n) = qp.A;
      K.block(0, n, n, me) = qp.A.transpose();
      rhs.segment(n, me) = qp.b;
    }
    for (int a = 0; a < na; ++a) {
      K.block(n + me + a, 0, 1, n) = qp.G.row(act[a]);
      K.block(0, n + me + a, n, 1) = qp.G.row(act[a]).transpose();
      rhs(n + me + a) = qp.h(act[a]);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const Vec sol = lu.solve(rhs);
    const Vec x = sol.head(n);

    bool ok = true;
    if (me > 0 && (qp.A * x - qp.b).cwiseAbs().maxCoeff() > tol) ok = false;
    for (int i = 0; i < mi && ok; ++i)
      if (qp.G.row(i).dot(x) > qp.h(i) + tol) ok = false;
    for (int a = 0; a < na && ok; ++a)
      if (sol(n + me + a) < -tol) ok = false;  // multiplier sign
    if (!ok) continue;
    const double obj = 0.5 * x.dot(qp.M * x) + qp.d.dot(x);
    if (!best || obj < best->second - 1e-12) best = std::make_pair(x, obj);
  }
  return best;
}

// Random strictly convex dense instance, feasible by construction.
inline DenseQp random_dense_qp(gridflex::Rng& rng, int n_max = 10,
                               int m_max = 6) {
  const int n = static_cast<int>(rng.uniform_int(1, n_max));
  const int me = static_cast<int>(rng.uniform_int(0, std::min(2, n - 1)));
  const int mi = static_cast<int>(rng.uniform_int(1, m_max - me));

  Eigen::MatrixXd B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
  DenseQp qp;
  qp.M = B.transpose() * B + 0.1 * Eigen::MatrixXd::Identity(n, n);
  qp.d = Vec::NullaryExpr(n, [&](Eigen::Index) { return rng.normal(); });

  Vec x0 = Vec::NullaryExpr(n, [&](Eigen::Index) { return rng.normal(); });
  qp.A.resize(me, n);
  for (int i = 0; i < me; ++i)
    for (int j = 0; j < n; ++j) qp.A(i, j) = rng.normal();
  qp.b = qp.A * x0;
  qp.G.resize(mi, n);
  for (int i = 0; i < mi; ++i)
    for (int j = 0; j < n; ++j) qp.G(i, j) = rng.normal();
  qp.h = qp.G * x0 + Vec::NullaryExpr(mi, [&](Eigen::Index) {
           return 0.05 + std::abs(rng.normal());
         });
  return qp;
}

inline gridflex::QpProblem to_sparse(const DenseQp& qp) {
  gridflex::QpProblem p;
  p.M = qp.M.sparseView();
  p.d = qp.d;
  p.A = qp.A.sparseView();
  p.b = qp.b;
  p.G = qp.G.sparseView();
  p.h = qp.h;
  const int n = static_cast<int>(qp.d.size());
  p.lb = Vec::Constant(n, -gridflex::kInf);
  p.ub = Vec::Constant(n, gridflex::kInf);
  return p;
}

// Random sparse feasible LCQP for the property suite.
inline gridflex::QpProblem random_sparse_qp(gridflex::Rng& rng, int n_max) {
  using gridflex::kInf;
  const int n = static_cast<int>(rng.uniform_int(5, n_max));
  const int me = static_cast<int>(rng.uniform_int(1, std::max(2, n / 4)));
  const int mi = static_cast<int>(rng.uniform_int(1, std::max(2, n / 3)));

  std::vector<Eigen::Triplet<double>> tm;
  for (int i = 0; i < n; ++i) tm.emplace_back(i, i, 0.1 + rng.uniform());
  for (int k = 0; k < n / 2; ++k) {
    const int i = static_cast<int>(rng.uniform_int(0, n - 1));
    const int j = static_cast<int>(rng.uniform_int(0, n - 1));
    if (i == j) continue;
    const double v = 0.3 * rng.normal();
    tm.emplace_back(i, j, v);
    tm.emplace_back(j, i, v);
  }
  Eigen::SparseMatrix<double> M0(n, n);
  M0.setFromTriplets(tm.begin(), tm.end());
  gridflex::QpProblem p;
  p.M = Eigen::SparseMatrix<double>((M0 * M0.transpose()).pruned());
  p.d = Vec::NullaryExpr(n, [&](Eigen::Index) { return rng.normal(); });

  Vec x0 = Vec::NullaryExpr(n, [&](Eigen::Index) { return rng.normal(); });
  auto random_rows = [&](int rows) {
    std::vector<Eigen::Triplet<double>> t;
    for (int r = 0; r < rows; ++r) {
      const int nnz = static_cast<int>(rng.uniform_int(1, 4));
      for (int k = 0; k < nnz; ++k)
        t.emplace_back(r, static_cast<int>(rng.uniform_int(0, n - 1)),
                       rng.normal());
    }
    Eigen::SparseMatrix<double> m(rows, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  };
  p.A = random_rows(me);
  p.b = p.A * x0;
  p.G = random_rows(mi);
  p.h = p.G * x0 + Vec::NullaryExpr(mi, [&](Eigen::Index) {
          return 0.05 + std::abs(rng.normal());
        });
  p.lb = Vec::Constant(n, -kInf);
  p.ub = Vec::Constant(n, kInf);
  for (int i = 0; i < n; ++i) {
    if (rng.uniform() < 0.3) p.lb(i) = x0(i) - 0.5 - rng.uniform();
    if (rng.uniform() < 0.3) p.ub(i) = x0(i) + 0.5 + rng.uniform();
  }
  return p;
}

}  // namespace testsupport
