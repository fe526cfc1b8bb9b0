#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "gridflex/errors.hpp"
#include "gridflex/grid.hpp"

namespace gridflex {

// ---------------------------------------------------------------------------
// bus admittance matrix (series elements only, no shunts)

inline void build_ybus(const Network& net, Eigen::MatrixXd& G,
                       Eigen::MatrixXd& B) {
  const int n = net.n_buses();
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& br : net.branches) {
    Y(br.from_bus, br.from_bus) += br.y;
    Y(br.to_bus, br.to_bus) += br.y;
    Y(br.from_bus, br.to_bus) -= br.y;
    Y(br.to_bus, br.from_bus) -= br.y;
  }
  G = Y.real();
  B = Y.imag();
}

// ---------------------------------------------------------------------------
// linear model

// First-order expansion of the polar power-flow equations at the flat start
// (v = 1, theta = 0, zero flexible injections). With series-only admittances
// the Jacobian there is
//     dp/dv = G,  dp/dtheta = -B,  dq/dv = -B,  dq/dtheta = -G,
// and the expansion offsets vanish (admittance row sums are zero), so the
// per-step block rows keep the form  B~ x_grid = 0  and
// C~ x_grid + D~ x_flex = c  with constant matrices for every horizon step.
struct LinearModel {
  // B~ : (2N x 4N) over [v, theta, p, q]; rows are the p- then q-residuals.
  Eigen::MatrixXd B_blk;
  // C~ : (2(N-1) x 4N) selecting p, q of non-slack buses.
  Eigen::MatrixXd C_blk;
  // D~ : (2(N-1) x 2S) coupling storage flexible power into its bus balance.
  Eigen::MatrixXd D_blk;
  // Linearization point: v = 1, theta = 0, p_flex = q_flex = 0.
  Eigen::VectorXd x_hat_v;
  Eigen::VectorXd x_hat_theta;
  // Fixed-injection offset of the balance rows at the expansion point.
  Eigen::VectorXd c_hat;

  Eigen::MatrixXd G;  // Ybus real part
  Eigen::MatrixXd B;  // Ybus imaginary part
  int n_buses = 0;
  int n_storages = 0;
  int slack_bus = 0;
  std::vector<int> non_slack;  // bus order of the C~/D~ rows

  // Cached reduced power-flow operator: [G -B; -B -G] over non-slack (v,theta).
  Eigen::PartialPivLU<Eigen::MatrixXd> reduced_lu;
};

inline LinearModel linearize(const Network& net) {
  validate(net);
  LinearModel lm;
  const int n = net.n_buses();
  const int ns = net.n_storages();
  lm.n_buses = n;
  lm.n_storages = ns;
  lm.slack_bus = net.slack_bus;
  build_ybus(net, lm.G, lm.B);

  lm.x_hat_v = Eigen::VectorXd::Ones(n);
  lm.x_hat_theta = Eigen::VectorXd::Zero(n);

  // B~ = [G  -B  -I  0; -B  -G  0  -I]
  lm.B_blk = Eigen::MatrixXd::Zero(2 * n, 4 * n);
  lm.B_blk.block(0, 0, n, n) = lm.G;
  lm.B_blk.block(0, n, n, n) = -lm.B;
  lm.B_blk.block(0, 2 * n, n, n) = -Eigen::MatrixXd::Identity(n, n);
  lm.B_blk.block(n, 0, n, n) = -lm.B;
  lm.B_blk.block(n, n, n, n) = -lm.G;
  lm.B_blk.block(n, 3 * n, n, n) = -Eigen::MatrixXd::Identity(n, n);

  for (int i = 0; i < n; ++i)
    if (i != net.slack_bus) lm.non_slack.push_back(i);
  const int m = n - 1;

  // C~ picks the nodal p, q of non-slack buses; D~ adds the storage power on
  // its bus (charging consumes, so it enters the balance with +1 on the
  // injection side: p_bus + p_flex = c).
  lm.C_blk = Eigen::MatrixXd::Zero(2 * m, 4 * n);
  lm.D_blk = Eigen::MatrixXd::Zero(2 * m, 2 * ns);
  for (int r = 0; r < m; ++r) {
    const int bus = lm.non_slack[r];
    lm.C_blk(r, 2 * n + bus) = 1.0;
    lm.C_blk(m + r, 3 * n + bus) = 1.0;
    for (int s = 0; s < ns; ++s) {
      if (net.storages[s].bus == bus) {
        lm.D_blk(r, s) = 1.0;
        lm.D_blk(m + r, ns + s) = 1.0;
      }
    }
  }
  lm.c_hat = Eigen::VectorXd::Zero(2 * m);

  // Reduced operator for direct voltage prediction.
  Eigen::MatrixXd R(2 * m, 2 * m);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      const int i = lm.non_slack[r];
      const int j = lm.non_slack[c];
      R(r, c) = lm.G(i, j);
      R(r, m + c) = -lm.B(i, j);
      R(m + r, c) = -lm.B(i, j);
      R(m + r, m + c) = -lm.G(i, j);
    }
  }
  lm.reduced_lu.compute(R);
  if (std::abs(lm.reduced_lu.determinant()) < 1e-300)
    throw SolveError("linearize: singular power-flow Jacobian");
  return lm;
}

// Linear-model grid state for given nodal injections (p.u.).
struct LinearPrediction {
  Eigen::VectorXd v;
  Eigen::VectorXd theta;
  double slack_p = 0.0;
  double slack_q = 0.0;
};

inline LinearPrediction predict(const LinearModel& lm,
                                const Eigen::VectorXd& p_inj,
                                const Eigen::VectorXd& q_inj) {
  const int n = lm.n_buses;
  const int m = n - 1;
  Eigen::VectorXd rhs(2 * m);
  for (int r = 0; r < m; ++r) {
    rhs(r) = p_inj(lm.non_slack[r]);
    rhs(m + r) = q_inj(lm.non_slack[r]);
  }
  const Eigen::VectorXd sol = lm.reduced_lu.solve(rhs);
  LinearPrediction out;
  out.v = Eigen::VectorXd::Ones(n);
  out.theta = Eigen::VectorXd::Zero(n);
  for (int r = 0; r < m; ++r) {
    out.v(lm.non_slack[r]) += sol(r);
    out.theta(lm.non_slack[r]) = sol(m + r);
  }
  // Slack power from its own linearized power-flow row.
  const int s = lm.slack_bus;
  out.slack_p = lm.G.row(s) * (out.v - lm.x_hat_v);
  out.slack_p -= lm.B.row(s) * out.theta;
  out.slack_q = -lm.B.row(s) * (out.v - lm.x_hat_v);
  out.slack_q -= lm.G.row(s) * out.theta;
  return out;
}

// ---------------------------------------------------------------------------
// AC power flow (Newton-Raphson reference)

struct AcSolution {
  Eigen::VectorXd v;         // p.u.
  Eigen::VectorXd theta;     // rad
  Eigen::VectorXd branch_i;  // p.u. current magnitude per branch
  double slack_p = 0.0;      // p.u.
  double slack_q = 0.0;
  int iterations = 0;
  double mismatch = 0.0;  // final max power-balance residual
};

namespace detail {

// Nodal p, q from (v, theta).
inline void injections(const Eigen::MatrixXd& G, const Eigen::MatrixXd& B,
                       const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                       Eigen::VectorXd& p, Eigen::VectorXd& q) {
  const int n = static_cast<int>(v.size());
  p.setZero(n);
  q.setZero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (G(i, j) == 0.0 && B(i, j) == 0.0) continue;
      const double dt = theta(i) - theta(j);
      const double c = std::cos(dt), s = std::sin(dt);
      p(i) += v(i) * v(j) * (G(i, j) * c + B(i, j) * s);
      q(i) += v(i) * v(j) * (G(i, j) * s - B(i, j) * c);
    }
  }
}

}  // namespace detail

inline double branch_current(const AcSolution& sol, const Branch& br) {
  const std::complex<double> vi =
      std::polar(sol.v(br.from_bus), sol.theta(br.from_bus));
  const std::complex<double> vj =
      std::polar(sol.v(br.to_bus), sol.theta(br.to_bus));
  return std::abs(br.y) * std::abs(vi - vj);
}

// One Newton iteration on the PQ mismatch, in place. Returns the mismatch
// before the step.
inline double newton_step(const Network& net, const Eigen::MatrixXd& G,
                          const Eigen::MatrixXd& B,
                          const Eigen::VectorXd& p_inj,
                          const Eigen::VectorXd& q_inj, Eigen::VectorXd& v,
                          Eigen::VectorXd& theta) {
  std::vector<int> pq;
  for (int i = 0; i < net.n_buses(); ++i)
    if (i != net.slack_bus) pq.push_back(i);
  const int m = static_cast<int>(pq.size());

  Eigen::VectorXd p_calc, q_calc;
  detail::injections(G, B, v, theta, p_calc, q_calc);
  Eigen::VectorXd f(2 * m);
  for (int r = 0; r < m; ++r) {
    f(r) = p_calc(pq[r]) - p_inj(pq[r]);
    f(m + r) = q_calc(pq[r]) - q_inj(pq[r]);
  }
  const double mismatch = f.cwiseAbs().maxCoeff();

  Eigen::MatrixXd J(2 * m, 2 * m);
  for (int r = 0; r < m; ++r) {
    const int i = pq[r];
    for (int c = 0; c < m; ++c) {
      const int j = pq[c];
      if (i == j) {
        J(r, c) = -q_calc(i) - B(i, i) * v(i) * v(i);
        J(r, m + c) = p_calc(i) / v(i) + G(i, i) * v(i);
        J(m + r, c) = p_calc(i) - G(i, i) * v(i) * v(i);
        J(m + r, m + c) = q_calc(i) / v(i) - B(i, i) * v(i);
      } else {
        const double dt = theta(i) - theta(j);
        const double c_ = std::cos(dt), s_ = std::sin(dt);
        const double gij = G(i, j), bij = B(i, j);
        J(r, c) = v(i) * v(j) * (gij * s_ - bij * c_);
        J(r, m + c) = v(i) * (gij * c_ + bij * s_);
        J(m + r, c) = -v(i) * v(j) * (gij * c_ + bij * s_);
        J(m + r, m + c) = v(i) * (gij * s_ - bij * c_);
      }
    }
  }
  const Eigen::VectorXd dx = J.partialPivLu().solve(-f);
  if (!dx.allFinite())
    throw SolveError("newton_step: step not finite, mismatch " +
                     std::to_string(mismatch));
  for (int r = 0; r < m; ++r) {
    theta(pq[r]) += dx(r);
    v(pq[r]) += dx(m + r);
  }
  return mismatch;
}

inline AcSolution solve_ac(const Network& net, const Eigen::VectorXd& p_inj,
                           const Eigen::VectorXd& q_inj, int max_iter = 50,
                           double tol = 1e-8,
                           const LinearPrediction* initial = nullptr) {
  const int n = net.n_buses();
  if (p_inj.size() != n || q_inj.size() != n)
    throw ValidationError("solve_ac: injection size mismatch");
  if (!p_inj.allFinite() || !q_inj.allFinite())
    throw ValidationError("solve_ac: non-finite injections");

  Eigen::MatrixXd G, B;
  build_ybus(net, G, B);

  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  if (initial) {
    v = initial->v;
    theta = initial->theta;
    v(net.slack_bus) = 1.0;
    theta(net.slack_bus) = 0.0;
  }

  double mismatch = 0.0;
  for (int it = 0; it <= max_iter; ++it) {
    Eigen::VectorXd p_calc, q_calc;
    detail::injections(G, B, v, theta, p_calc, q_calc);
    mismatch = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i == net.slack_bus) continue;
      mismatch = std::max(mismatch, std::abs(p_calc(i) - p_inj(i)));
      mismatch = std::max(mismatch, std::abs(q_calc(i) - q_inj(i)));
    }
    if (mismatch <= tol) {
      AcSolution sol;
      sol.v = v;
      sol.theta = theta;
      sol.slack_p = p_calc(net.slack_bus);
      sol.slack_q = q_calc(net.slack_bus);
      sol.iterations = it;
      sol.mismatch = mismatch;
      sol.branch_i.resize(net.n_branches());
      for (int k = 0; k < net.n_branches(); ++k)
        sol.branch_i(k) = branch_current(sol, net.branches[k]);
      return sol;
    }
    if (it == max_iter) break;
    newton_step(net, G, B, p_inj, q_inj, v, theta);
    if ((v.array() <= 0.05).any())
      throw SolveError("solve_ac: voltage collapse, mismatch " +
                       std::to_string(mismatch));
  }
  throw SolveError("solve_ac: no convergence after " +
                   std::to_string(max_iter) + " iterations, mismatch " +
                   std::to_string(mismatch));
}

// One Newton iteration's residual norm, for convergence diagnostics.
inline double ac_residual_norm(const Network& net,
                               const Eigen::VectorXd& p_inj,
                               const Eigen::VectorXd& q_inj,
                               const Eigen::VectorXd& v,
                               const Eigen::VectorXd& theta) {
  Eigen::MatrixXd G, B;
  build_ybus(net, G, B);
  Eigen::VectorXd p_calc, q_calc;
  detail::injections(G, B, v, theta, p_calc, q_calc);
  double worst = 0.0;
  for (int i = 0; i < net.n_buses(); ++i) {
    if (i == net.slack_bus) continue;
    worst = std::max(worst, std::abs(p_calc(i) - p_inj(i)));
    worst = std::max(worst, std::abs(q_calc(i) - q_inj(i)));
  }
  return worst;
}

}  // namespace gridflex
