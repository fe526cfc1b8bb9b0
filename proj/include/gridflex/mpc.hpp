#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflex/csv.hpp"
#include "gridflex/dopf.hpp"
#include "gridflex/errors.hpp"
#include "gridflex/grid.hpp"
#include "gridflex/linearizer.hpp"
#include "gridflex/qp.hpp"

namespace gridflex {

// Horizon plan of one controller invocation. Powers in kW, energies in kWh;
// e_traj column 0 is the state the plan started from.
struct Schedule {
  Eigen::MatrixXd p_flex_kw;       // S x T
  Eigen::MatrixXd e_traj_kwh;      // S x (T+1)
  Eigen::VectorXd p_slack_plan;    // T, p.u. (model-side slack power)
  double objective = 0.0;          // planned J
  double solve_time = 0.0;         // core solve / network forward, seconds
  double prepare_time = 0.0;       // build/update resp. scale+project
  int iterations = 0;
};

// Clip powers into +-p_max and truncate charging/discharging stepwise so the
// induced SoC stays inside [0, soc_frac_max*e_max]. For solver output this
// only removes numerical dust; for network output it is the feasibility
// projection.
inline void project_schedule(const Network& net,
                             const std::vector<double>& e_init_kwh,
                             double dt_hours, Eigen::MatrixXd& p_kw,
                             Eigen::MatrixXd& e_traj_kwh) {
  const int S = net.n_storages();
  const int T = static_cast<int>(p_kw.cols());
  e_traj_kwh.resize(S, T + 1);
  for (int s = 0; s < S; ++s) {
    const Storage& sto = net.storages[s];
    const double cap = sto.soc_frac_max * sto.e_max;
    double e = std::clamp(e_init_kwh[s], 0.0, cap);
    e_traj_kwh(s, 0) = e;
    for (int t = 0; t < T; ++t) {
      double p = std::clamp(p_kw(s, t), -sto.p_max, sto.p_max);
      const double e_next =
          std::clamp(storage_step(e, p, sto, dt_hours), 0.0, cap);
      p = (e_next - e * (1.0 - sto.mu_sd * dt_hours)) / dt_hours;
      p_kw(s, t) = p;
      e_traj_kwh(s, t + 1) = e_next;
      e = e_next;
    }
  }
}

inline Schedule extract_schedule(const DopfProblem& prob, const Network& net,
                                 const QpSolution& sol,
                                 const std::vector<double>& e_init_kwh) {
  const IndexMap& ix = prob.index_map;
  Schedule sch;
  sch.p_flex_kw.resize(ix.n_sto, ix.horizon);
  for (int s = 0; s < ix.n_sto; ++s)
    for (int t = 0; t < ix.horizon; ++t)
      sch.p_flex_kw(s, t) = pu_to_kw(sol.x(ix.p_flex(s, t)), net.s_base);
  project_schedule(net, e_init_kwh, prob.dt_hours, sch.p_flex_kw,
                   sch.e_traj_kwh);
  sch.p_slack_plan.resize(ix.horizon);
  for (int t = 0; t < ix.horizon; ++t)
    sch.p_slack_plan(t) = sol.x(ix.p(net.slack_bus, t));
  sch.objective = sol.objective;
  sch.solve_time = sol.solve_time;
  sch.iterations = sol.iterations;
  return sch;
}

// ---------------------------------------------------------------------------
// controllers

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual Schedule plan(const ForecastWindow& forecast,
                        const std::vector<double>& e_now_kwh) = 0;
};

class BaselineController final : public Controller {
 public:
  explicit BaselineController(const Network& net, double dt_hours = 0.25)
      : net_(&net), dt_hours_(dt_hours) {}
  std::string name() const override { return "baseline"; }
  Schedule plan(const ForecastWindow& forecast,
                const std::vector<double>& e_now_kwh) override {
    Schedule sch;
    const int T = static_cast<int>(forecast.length());
    sch.p_flex_kw = Eigen::MatrixXd::Zero(net_->n_storages(), T);
    project_schedule(*net_, e_now_kwh, dt_hours_, sch.p_flex_kw,
                     sch.e_traj_kwh);
    sch.p_slack_plan = Eigen::VectorXd::Constant(
        T, std::numeric_limits<double>::quiet_NaN());
    sch.objective = std::numeric_limits<double>::quiet_NaN();
    return sch;
  }

 private:
  const Network* net_;
  double dt_hours_;
};

struct MpcSettings {
  int horizon_steps = 96;  // 24 h at 0.25 h
  double dt_hours = 0.25;
  QpSettings qp;            // tol etc.; see defaults below
  bool warm_start = true;
  DopfOptions dopf;

  MpcSettings() {
    // Inside the rolling loop the active-set polish is skipped and the
    // tolerance relaxed; plant-side feasibility comes from the projection.
    qp.tol = 1e-5;
    qp.polish = false;
    qp.max_iter = 20000;
  }
};

// Rolling-horizon optimizer: the problem is built once, later steps only
// swap the forecast/SoC vectors and reuse the cached KKT factorization.
class MpcController final : public Controller {
 public:
  MpcController(const Network& net, const LinearModel& lin,
                MpcSettings settings = {})
      : net_(&net), lin_(&lin), cfg_(settings), solver_(settings.qp) {}

  std::string name() const override { return "mpc"; }

  const MpcSettings& settings() const { return cfg_; }

  Schedule plan(const ForecastWindow& forecast,
                const std::vector<double>& e_now_kwh) override {
    const auto t0 = std::chrono::steady_clock::now();
    if (!built_) {
      prob_ = build_dopf(*net_, *lin_, forecast, e_now_kwh, cfg_.dopf,
                         cfg_.dt_hours);
      solver_.setup(prob_);
      built_ = true;
    } else {
      update_dopf(prob_, *net_, forecast, e_now_kwh);
      solver_.update_vectors(prob_);
      if (cfg_.warm_start && have_prev_)
        solver_.warm_start(shifted_x(), prev_y_);
    }
    const auto t1 = std::chrono::steady_clock::now();
    QpSolution sol = solver_.solve(prob_);
    if (sol.status != QpStatus::optimal && sol.status != QpStatus::max_iter)
      throw SolveError("mpc: QP " + std::string(to_string(sol.status)));
    if (sol.status == QpStatus::max_iter &&
        std::max({sol.kkt[0], sol.kkt[1]}) > 1e-3)
      throw SolveError("mpc: QP did not reach a usable residual");
    prev_x_ = sol.x;
    prev_y_ = solver_.last_y();
    have_prev_ = true;
    Schedule sch = extract_schedule(prob_, *net_, sol, e_now_kwh);
    sch.solve_time = sol.solve_time;
    sch.prepare_time =
        std::chrono::duration<double>(t1 - t0).count();
    return sch;
  }

 private:
  // Previous optimum shifted one step forward; the final step is repeated.
  Vec shifted_x() const {
    const IndexMap& ix = prob_.index_map;
    Vec x = prev_x_;
    const int T = ix.horizon;
    for (int t = 0; t < T - 1; ++t) {
      x.segment(4 * ix.n_bus * t, 4 * ix.n_bus) =
          prev_x_.segment(4 * ix.n_bus * (t + 1), 4 * ix.n_bus);
      x.segment(ix.p_flex(0, t), 2 * ix.n_sto) =
          prev_x_.segment(ix.p_flex(0, t + 1), 2 * ix.n_sto);
    }
    for (int t = -1; t < T - 1; ++t)
      x.segment(ix.e_sto(0, t), ix.n_sto) =
          prev_x_.segment(ix.e_sto(0, t + 1), ix.n_sto);
    return x;
  }

  const Network* net_;
  const LinearModel* lin_;
  MpcSettings cfg_;
  DopfProblem prob_;
  AdmmSolver solver_;
  bool built_ = false;
  bool have_prev_ = false;
  Vec prev_x_, prev_y_;
};

// One-shot horizon solve (no cached state); the rolling loop uses
// MpcController instead.
inline Schedule mpc_step(const Network& net, const LinearModel& lin,
                         const ForecastWindow& forecast,
                         const std::vector<double>& e_now_kwh,
                         const MpcSettings& settings = {}) {
  MpcController ctrl(net, lin, settings);
  return ctrl.plan(forecast, e_now_kwh);
}

// ---------------------------------------------------------------------------
// plant metrics

struct StepMetrics {
  double trafo_pct = 0.0;
  Eigen::VectorXd line_pct;  // per branch, current / ampacity
};

inline StepMetrics grid_metrics(const Network& net, const AcSolution& ac) {
  StepMetrics m;
  m.line_pct.resize(net.n_branches());
  for (int k = 0; k < net.n_branches(); ++k) {
    const Branch& br = net.branches[k];
    const double i_max_pu =
        current_to_pu(br.i_eff_max, net.v_base, net.s_base);
    m.line_pct(k) = 100.0 * ac.branch_i(k) / i_max_pu;
  }
  const Branch& tr = net.transformer_branch();
  const std::complex<double> vf =
      std::polar(ac.v(tr.from_bus), ac.theta(tr.from_bus));
  const std::complex<double> vt =
      std::polar(ac.v(tr.to_bus), ac.theta(tr.to_bus));
  const std::complex<double> i = tr.y * (vf - vt);
  const double s_pu = std::max(std::abs(vf * std::conj(i)),
                               std::abs(vt * std::conj(i)));
  m.trafo_pct = 100.0 * s_pu * net.s_base / tr.s_rated;
  return m;
}

// ---------------------------------------------------------------------------
// rolling-horizon simulation

struct SimulationLog {
  std::string controller;
  long start = 0;
  double dt_hours = 0.25;
  int n_buses = 0, n_branches = 0, n_storages = 0;

  std::vector<long> step;
  Eigen::MatrixXd v;            // steps x N
  Eigen::MatrixXd line_pct;     // steps x L
  std::vector<double> trafo_pct;
  std::vector<double> slack_p_pu;
  std::vector<double> obj_realized;  // 1/2 slack_p^2, AC-evaluated
  std::vector<double> obj_planned;   // controller objective (NaN: baseline)
  Eigen::MatrixXd p_apply_kw;   // steps x S
  Eigen::MatrixXd soc_kwh;      // steps x S, end of step
  std::vector<double> t_prepare, t_core, t_total;
  std::vector<int> iterations;

  int n_steps() const { return static_cast<int>(step.size()); }
};

// Hook for harvesting imitation data while the plant runs.
class RecordSink {
 public:
  virtual ~RecordSink() = default;
  virtual void on_step(long k, const ForecastWindow& forecast,
                       const std::vector<double>& e_now_kwh,
                       const Schedule& schedule) = 0;
};

inline SimulationLog run_rolling_horizon(const Network& net,
                                         const ScenarioSeries& series,
                                         long start, int n_steps,
                                         Controller& controller,
                                         int horizon_steps = 96,
                                         RecordSink* sink = nullptr) {
  if (start < 0 || start + n_steps + horizon_steps > series.n_steps)
    throw ValidationError(
        "rolling horizon: window [" + std::to_string(start) + ", " +
        std::to_string(start + n_steps) + ") + horizon exceeds the series (" +
        std::to_string(series.n_steps) + " steps)");
  if (n_steps <= 0) throw ValidationError("rolling horizon: n_steps must be > 0");

  const int N = net.n_buses();
  const int S = net.n_storages();
  SimulationLog log;
  log.controller = controller.name();
  log.start = start;
  log.dt_hours = series.dt_hours;
  log.n_buses = N;
  log.n_branches = net.n_branches();
  log.n_storages = S;
  log.v.resize(n_steps, N);
  log.line_pct.resize(n_steps, net.n_branches());
  log.p_apply_kw.resize(n_steps, S);
  log.soc_kwh.resize(n_steps, S);

  std::vector<double> e_now(S);
  for (int s = 0; s < S; ++s) e_now[s] = net.storages[s].e_init;

  for (int i = 0; i < n_steps; ++i) {
    const long k = start + i;
    const ForecastWindow w = window(series, k, horizon_steps);
    Schedule sch;
    try {
      sch = controller.plan(w, e_now);
    } catch (const SolveError& e) {
      throw SolveError(controller.name() + " failed at step " +
                       std::to_string(k) + ": " + e.what());
    }
    if (sink) sink->on_step(k, w, e_now, sch);

    // Apply the first-step powers and advance the plant exactly.
    Eigen::VectorXd p_real = series.p_inj.row(k);
    Eigen::VectorXd q_real = series.q_inj.row(k);
    for (int s = 0; s < S; ++s) {
      const double p_kw = sch.p_flex_kw(s, 0);
      log.p_apply_kw(i, s) = p_kw;
      p_real(net.storages[s].bus) -= kw_to_pu(p_kw, net.s_base);
      e_now[s] = storage_step(e_now[s], p_kw, net.storages[s],
                              series.dt_hours);
      log.soc_kwh(i, s) = e_now[s];
    }

    AcSolution ac;
    try {
      ac = solve_ac(net, p_real, q_real);
    } catch (const SolveError& e) {
      throw SolveError("plant evaluation failed at step " + std::to_string(k) +
                       ": " + e.what());
    }
    const StepMetrics metrics = grid_metrics(net, ac);
    log.step.push_back(k);
    log.v.row(i) = ac.v;
    log.line_pct.row(i) = metrics.line_pct;
    log.trafo_pct.push_back(metrics.trafo_pct);
    log.slack_p_pu.push_back(ac.slack_p);
    log.obj_realized.push_back(0.5 * ac.slack_p * ac.slack_p);
    log.obj_planned.push_back(sch.objective);
    log.t_prepare.push_back(sch.prepare_time);
    log.t_core.push_back(sch.solve_time);
    log.t_total.push_back(sch.prepare_time + sch.solve_time);
    log.iterations.push_back(sch.iterations);
  }
  return log;
}

// ---------------------------------------------------------------------------
// log I/O (CSV; header names are stable, eval re-reads them)

inline void save_log(const SimulationLog& log,
                     const std::filesystem::path& path) {
  std::vector<std::string> header{"step"};
  for (int i = 0; i < log.n_buses; ++i) header.push_back("v_" + std::to_string(i));
  for (int i = 0; i < log.n_branches; ++i)
    header.push_back("line_pct_" + std::to_string(i));
  header.insert(header.end(), {"trafo_pct", "slack_p_pu", "obj_realized",
                               "obj_planned"});
  for (int i = 0; i < log.n_storages; ++i)
    header.push_back("p_apply_kw_" + std::to_string(i));
  for (int i = 0; i < log.n_storages; ++i)
    header.push_back("soc_kwh_" + std::to_string(i));
  header.insert(header.end(),
                {"t_prepare_s", "t_core_s", "t_total_s", "iterations"});

  std::vector<std::vector<double>> rows;
  rows.reserve(log.step.size());
  for (int i = 0; i < log.n_steps(); ++i) {
    std::vector<double> r;
    r.push_back(static_cast<double>(log.step[i]));
    for (int c = 0; c < log.n_buses; ++c) r.push_back(log.v(i, c));
    for (int c = 0; c < log.n_branches; ++c) r.push_back(log.line_pct(i, c));
    r.push_back(log.trafo_pct[i]);
    r.push_back(log.slack_p_pu[i]);
    r.push_back(log.obj_realized[i]);
    r.push_back(log.obj_planned[i]);
    for (int c = 0; c < log.n_storages; ++c) r.push_back(log.p_apply_kw(i, c));
    for (int c = 0; c < log.n_storages; ++c) r.push_back(log.soc_kwh(i, c));
    r.push_back(log.t_prepare[i]);
    r.push_back(log.t_core[i]);
    r.push_back(log.t_total[i]);
    r.push_back(static_cast<double>(log.iterations[i]));
    rows.push_back(std::move(r));
  }
  write_csv(path, header, rows);
}

inline SimulationLog load_log(const std::filesystem::path& path,
                              const std::string& controller_name = "") {
  const CsvTable t = read_csv(path);
  SimulationLog log;
  log.controller = controller_name;
  auto count_prefix = [&](const std::string& prefix) {
    int n = 0;
    for (const auto& h : t.header)
      if (h.rfind(prefix, 0) == 0) ++n;
    return n;
  };
  log.n_buses = count_prefix("v_");
  log.n_branches = count_prefix("line_pct_");
  log.n_storages = count_prefix("p_apply_kw_");
  const int n = static_cast<int>(t.n_rows());
  log.v.resize(n, log.n_buses);
  log.line_pct.resize(n, log.n_branches);
  log.p_apply_kw.resize(n, log.n_storages);
  log.soc_kwh.resize(n, log.n_storages);
  for (int i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    int c = 0;
    log.step.push_back(static_cast<long>(row[c++]));
    for (int j = 0; j < log.n_buses; ++j) log.v(i, j) = row[c++];
    for (int j = 0; j < log.n_branches; ++j) log.line_pct(i, j) = row[c++];
    log.trafo_pct.push_back(row[c++]);
    log.slack_p_pu.push_back(row[c++]);
    log.obj_realized.push_back(row[c++]);
    log.obj_planned.push_back(row[c++]);
    for (int j = 0; j < log.n_storages; ++j) log.p_apply_kw(i, j) = row[c++];
    for (int j = 0; j < log.n_storages; ++j) log.soc_kwh(i, j) = row[c++];
    log.t_prepare.push_back(row[c++]);
    log.t_core.push_back(row[c++]);
    log.t_total.push_back(row[c++]);
    log.iterations.push_back(static_cast<int>(row[c++]));
  }
  if (n > 0) log.start = log.step.front();
  return log;
}

}  // namespace gridflex
