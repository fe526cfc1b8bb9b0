#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "gridflex/errors.hpp"
#include "gridflex/grid.hpp"
#include "gridflex/linearizer.hpp"
#include "gridflex/qp.hpp"

namespace gridflex {

// Decision-vector layout over the horizon (p.u. throughout):
//   x_grid : per step t, [v (N), theta (N), p (N), q (N)]
//   x_flex : per step t, [p_flex (S), q_flex (S)]
//   x_sto  : [E(t_-1) (S), E(t_0) (S), ..., E(t_{T-1}) (S)]
// Total length 4NT + 2ST + S(T+1).
struct IndexMap {
  int n_bus = 0;
  int n_sto = 0;
  int horizon = 0;  // T

  int grid_base() const { return 0; }
  int flex_base() const { return 4 * n_bus * horizon; }
  int sto_base() const { return flex_base() + 2 * n_sto * horizon; }
  int size() const { return sto_base() + n_sto * (horizon + 1); }

  int v(int bus, int t) const { return 4 * n_bus * t + bus; }
  int theta(int bus, int t) const { return 4 * n_bus * t + n_bus + bus; }
  int p(int bus, int t) const { return 4 * n_bus * t + 2 * n_bus + bus; }
  int q(int bus, int t) const { return 4 * n_bus * t + 3 * n_bus + bus; }
  int p_flex(int s, int t) const { return flex_base() + 2 * n_sto * t + s; }
  int q_flex(int s, int t) const {
    return flex_base() + 2 * n_sto * t + n_sto + s;
  }
  // t from -1 to T-1.
  int e_sto(int s, int t) const {
    return sto_base() + (t + 1) * n_sto + s;
  }
};

// Exact storage recurrence, unit-agnostic (kWh/kW/hours or all-p.u.):
//   E_next = E * (1 - mu_sd * dt) + p * dt
inline double storage_step(double e, double p, const Storage& sto,
                           double dt_hours) {
  return e * (1.0 - sto.mu_sd * dt_hours) + p * dt_hours;
}

// Full horizon LCQP with the three-block equality structure (power flow,
// nodal balance, storage coupling), the stacked inequality rows
// (+-branch, +-voltage, +-flex, +-SoC) and box pins for the slack state,
// q_flex = 0 and E(t_-1) = e_init.
struct DopfProblem : QpProblem {
  IndexMap index_map;
  double dt_hours = 0.25;
  // Row offsets into A for the vector update path.
  int balance_rows_base = 0;
  std::vector<int> non_slack;
};

struct DopfOptions {
  // Tightening factor on branch-current bounds; 1 = the literal bounds.
  double current_margin = 1.0;
};

namespace detail {

inline void put_block(std::vector<Eigen::Triplet<double>>& trip, int row0,
                      int col0, const Eigen::MatrixXd& blk) {
  for (int r = 0; r < blk.rows(); ++r)
    for (int c = 0; c < blk.cols(); ++c)
      if (blk(r, c) != 0.0) trip.emplace_back(row0 + r, col0 + c, blk(r, c));
}

}  // namespace detail

inline DopfProblem build_dopf(const Network& net, const LinearModel& lin,
                              const ForecastWindow& forecast,
                              const std::vector<double>& e_init_kwh,
                              const DopfOptions& opt = {},
                              double dt_hours = 0.25) {
  const int N = net.n_buses();
  const int S = net.n_storages();
  const int L = net.n_branches();
  const int T = static_cast<int>(forecast.length());
  if (T <= 0) throw ValidationError("dopf: empty forecast window");
  if (static_cast<int>(e_init_kwh.size()) != S)
    throw ValidationError("dopf: e_init has wrong length");
  for (int s = 0; s < S; ++s) {
    const Storage& sto = net.storages[s];
    if (e_init_kwh[s] < 0.0 ||
        e_init_kwh[s] > sto.soc_frac_max * sto.e_max + 1e-12)
      throw ValidationError("dopf: e_init of storage " + std::to_string(s) +
                            " outside [0, soc_frac_max*e_max]");
    if (sto.mu_sd * dt_hours >= 1.0)
      throw ValidationError("dopf: mu_sd*dt must be < 1");
  }

  DopfProblem prob;
  prob.dt_hours = dt_hours;
  prob.index_map = IndexMap{N, S, T};
  prob.non_slack = lin.non_slack;
  const IndexMap& ix = prob.index_map;
  const int n = ix.size();

  // --- objective: slack power gathered over all steps, offset-free at the
  // flat start (the expansion point has zero slack power, so d = 0).
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int t = 0; t < T; ++t)
      trip.emplace_back(ix.p(net.slack_bus, t), ix.p(net.slack_bus, t), 1.0);
    prob.M.resize(n, n);
    prob.M.setFromTriplets(trip.begin(), trip.end());
    prob.d = Vec::Zero(n);
  }

  // --- equality rows
  const int m = N - 1;
  const int pf_rows = 2 * N * T;
  const int bal_rows = 2 * m * T;
  const int sto_rows = S * T;
  prob.balance_rows_base = pf_rows;
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int t = 0; t < T; ++t)
      detail::put_block(trip, 2 * N * t, 4 * N * t, lin.B_blk);
    for (int t = 0; t < T; ++t) {
      detail::put_block(trip, pf_rows + 2 * m * t, 4 * N * t, lin.C_blk);
      detail::put_block(trip, pf_rows + 2 * m * t, ix.p_flex(0, t),
                        lin.D_blk);
    }
    for (int t = 0; t < T; ++t) {
      for (int s = 0; s < S; ++s) {
        const int row = pf_rows + bal_rows + S * t + s;
        const double keep = 1.0 - net.storages[s].mu_sd * dt_hours;
        trip.emplace_back(row, ix.e_sto(s, t), 1.0);
        trip.emplace_back(row, ix.e_sto(s, t - 1), -keep);
        trip.emplace_back(row, ix.p_flex(s, t), -dt_hours);
      }
    }
    prob.A.resize(pf_rows + bal_rows + sto_rows, n);
    prob.A.setFromTriplets(trip.begin(), trip.end());
    prob.b = Vec::Zero(pf_rows + bal_rows + sto_rows);
    for (int t = 0; t < T; ++t) {
      for (int r = 0; r < m; ++r) {
        const int bus = lin.non_slack[r];
        prob.b(pf_rows + 2 * m * t + r) = forecast.p_inj(t, bus);
        prob.b(pf_rows + 2 * m * t + m + r) = forecast.q_inj(t, bus);
      }
    }
  }

  // --- inequality rows per step: +-G_l, +-I_v, +-I(p_flex), +-I(E_sto)
  {
    const int rows_per_step = 2 * L + 2 * N + 2 * S + 2 * S;
    std::vector<Eigen::Triplet<double>> trip;
    prob.h = Vec::Zero(rows_per_step * T);
    for (int t = 0; t < T; ++t) {
      int row = rows_per_step * t;
      for (int k = 0; k < L; ++k) {
        const Branch& br = net.branches[k];
        double i_max = br.i_eff_max;
        if (static_cast<int>(k) == net.transformer)
          i_max = std::min(i_max, br.s_rated / (std::sqrt(3.0) * net.v_base));
        const double bound = opt.current_margin *
                             current_limit_to_voltage_bound(
                                 i_max, net.v_base, net.s_base,
                                 std::abs(br.y));
        const double vhat_gap = 0.0;  // flat start: v_hat_i = v_hat_j
        trip.emplace_back(row, ix.v(br.from_bus, t), 1.0);
        trip.emplace_back(row, ix.v(br.to_bus, t), -1.0);
        prob.h(row) = vhat_gap + bound;
        ++row;
        trip.emplace_back(row, ix.v(br.to_bus, t), 1.0);
        trip.emplace_back(row, ix.v(br.from_bus, t), -1.0);
        prob.h(row) = vhat_gap + bound;
        ++row;
      }
      for (int i = 0; i < N; ++i) {
        trip.emplace_back(row, ix.v(i, t), 1.0);
        prob.h(row) = net.buses[i].v_ub;
        ++row;
        trip.emplace_back(row, ix.v(i, t), -1.0);
        prob.h(row) = -net.buses[i].v_lb;
        ++row;
      }
      for (int s = 0; s < S; ++s) {
        const double p_max = kw_to_pu(net.storages[s].p_max, net.s_base);
        trip.emplace_back(row, ix.p_flex(s, t), 1.0);
        prob.h(row) = p_max;
        ++row;
        trip.emplace_back(row, ix.p_flex(s, t), -1.0);
        prob.h(row) = p_max;
        ++row;
      }
      for (int s = 0; s < S; ++s) {
        const Storage& sto = net.storages[s];
        const double cap = kwh_to_pu(sto.soc_frac_max * sto.e_max, net.s_base);
        trip.emplace_back(row, ix.e_sto(s, t), 1.0);
        prob.h(row) = cap;
        ++row;
        trip.emplace_back(row, ix.e_sto(s, t), -1.0);
        prob.h(row) = 0.0;
        ++row;
      }
    }
    prob.G.resize(rows_per_step * T, n);
    prob.G.setFromTriplets(trip.begin(), trip.end());
  }

  // --- box pins: slack voltage/angle, q_flex = 0, E(t_-1) = e_init
  prob.lb = Vec::Constant(n, -kInf);
  prob.ub = Vec::Constant(n, kInf);
  for (int t = 0; t < T; ++t) {
    prob.lb(ix.v(net.slack_bus, t)) = 1.0;
    prob.ub(ix.v(net.slack_bus, t)) = 1.0;
    prob.lb(ix.theta(net.slack_bus, t)) = 0.0;
    prob.ub(ix.theta(net.slack_bus, t)) = 0.0;
    for (int s = 0; s < S; ++s) {
      prob.lb(ix.q_flex(s, t)) = 0.0;
      prob.ub(ix.q_flex(s, t)) = 0.0;
    }
  }
  for (int s = 0; s < S; ++s) {
    const double e0 = kwh_to_pu(e_init_kwh[s], net.s_base);
    prob.lb(ix.e_sto(s, -1)) = e0;
    prob.ub(ix.e_sto(s, -1)) = e0;
  }
  return prob;
}

// Rewrites the forecast-dependent vectors (balance RHS, E(t_-1) pin) in
// place; the matrices are untouched so a cached factorization stays valid.
inline void update_dopf(DopfProblem& prob, const Network& net,
                        const ForecastWindow& forecast,
                        const std::vector<double>& e_init_kwh) {
  const IndexMap& ix = prob.index_map;
  const int T = ix.horizon;
  const int m = ix.n_bus - 1;
  if (forecast.length() != T)
    throw ValidationError("dopf: window length " +
                          std::to_string(forecast.length()) + ", expected " +
                          std::to_string(T));
  if (static_cast<int>(e_init_kwh.size()) != ix.n_sto)
    throw ValidationError("dopf: e_init has wrong length");
  for (int t = 0; t < T; ++t) {
    for (int r = 0; r < m; ++r) {
      const int bus = prob.non_slack[r];
      prob.b(prob.balance_rows_base + 2 * m * t + r) = forecast.p_inj(t, bus);
      prob.b(prob.balance_rows_base + 2 * m * t + m + r) =
          forecast.q_inj(t, bus);
    }
  }
  for (int s = 0; s < ix.n_sto; ++s) {
    const Storage& sto = net.storages[s];
    const double cap = sto.soc_frac_max * sto.e_max;
    const double e = std::clamp(e_init_kwh[s], 0.0, cap);
    if (std::abs(e - e_init_kwh[s]) > 1e-9 * std::max(1.0, cap))
      throw ValidationError("dopf: e_init of storage " + std::to_string(s) +
                            " outside [0, soc_frac_max*e_max]");
    const double e0 = kwh_to_pu(e, net.s_base);
    prob.lb(ix.e_sto(s, -1)) = e0;
    prob.ub(ix.e_sto(s, -1)) = e0;
  }
}

inline double objective_value(const DopfProblem& prob, const Vec& x) {
  return prob.objective(x);
}

// (row, col, value) triplet dump; see qp.hpp.
inline void dump_problem(const DopfProblem& prob, std::ostream& os) {
  dump_problem(static_cast<const QpProblem&>(prob), os);
}

}  // namespace gridflex
