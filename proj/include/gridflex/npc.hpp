#pragma once

#include <chrono>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridflex/dataset.hpp"
#include "gridflex/grid.hpp"
#include "gridflex/linearizer.hpp"
#include "gridflex/mlp.hpp"
#include "gridflex/mpc.hpp"

namespace gridflex {

// Learned drop-in replacement for the optimizing controller: scale the
// features, one forward pass, unscale, then project the raw schedule onto
// the storage limits (the plant cannot execute an infeasible set point).
// The timed section is exactly scale + forward + unscale + project;
// forward_time additionally isolates the network evaluation.
class NpcController final : public Controller {
 public:
  NpcController(const Network& net, const LinearModel& lin, MlpModel model,
                double dt_hours = 0.25)
      : net_(&net), lin_(&lin), model_(std::move(model)), dt_hours_(dt_hours) {
    if (model_.layout_version != kDatasetLayout)
      throw ValidationError("npc: model layout '" + model_.layout_version +
                            "' does not match '" + kDatasetLayout + "'");
    if (model_.x_scaler.mean.size() != model_.n_in() ||
        model_.y_scaler.scale.size() != model_.n_out())
      throw ValidationError("npc: model is missing its scalers");
  }

  std::string name() const override { return "npc"; }

  const MlpModel& model() const { return model_; }
  double last_forward_time() const { return forward_time_; }
  const Eigen::MatrixXd& last_raw_schedule_kw() const { return raw_kw_; }

  Schedule plan(const ForecastWindow& forecast,
                const std::vector<double>& e_now_kwh) override {
    const int S = net_->n_storages();
    const int T = static_cast<int>(forecast.length());
    if (S * T != model_.n_out())
      throw ValidationError("npc: model emits " +
                            std::to_string(model_.n_out()) +
                            " outputs, plant needs " + std::to_string(S * T));

    const auto t0 = std::chrono::steady_clock::now();
    Eigen::VectorXd x = assemble_features(*net_, forecast, e_now_kwh);
    if (x.size() != model_.n_in())
      throw ValidationError("npc: feature length " + std::to_string(x.size()) +
                            ", model expects " + std::to_string(model_.n_in()));
    x = (x - model_.x_scaler.mean).cwiseQuotient(model_.x_scaler.std);

    const auto t1 = std::chrono::steady_clock::now();
    Eigen::VectorXd y = model_.forward(x);
    const auto t2 = std::chrono::steady_clock::now();

    y = y.cwiseProduct(model_.y_scaler.scale);
    Schedule sch;
    sch.p_flex_kw.resize(S, T);
    for (int s = 0; s < S; ++s)
      for (int t = 0; t < T; ++t)
        sch.p_flex_kw(s, t) = pu_to_kw(y(s * T + t), net_->s_base);
    raw_kw_ = sch.p_flex_kw;
    project_schedule(*net_, e_now_kwh, dt_hours_, sch.p_flex_kw,
                     sch.e_traj_kwh);
    const auto t3 = std::chrono::steady_clock::now();

    forward_time_ = std::chrono::duration<double>(t2 - t1).count();
    sch.solve_time = forward_time_;
    sch.prepare_time = std::chrono::duration<double>(t1 - t0).count() +
                       std::chrono::duration<double>(t3 - t2).count();

    // The model-side objective of the projected plan, for reporting only;
    // deliberately outside the timed section.
    sch.p_slack_plan.resize(T);
    double obj = 0.0;
    Eigen::VectorXd p_bus(net_->n_buses()), q_bus(net_->n_buses());
    for (int t = 0; t < T; ++t) {
      p_bus = forecast.p_inj.row(t);
      q_bus = forecast.q_inj.row(t);
      for (int s = 0; s < S; ++s)
        p_bus(net_->storages[s].bus) -=
            kw_to_pu(sch.p_flex_kw(s, t), net_->s_base);
      const LinearPrediction pred = predict(*lin_, p_bus, q_bus);
      sch.p_slack_plan(t) = pred.slack_p;
      obj += 0.5 * pred.slack_p * pred.slack_p;
    }
    sch.objective = obj;
    return sch;
  }

 private:
  const Network* net_;
  const LinearModel* lin_;
  MlpModel model_;
  double dt_hours_;
  double forward_time_ = 0.0;
  Eigen::MatrixXd raw_kw_;
};

// Single learned-controller step (mirror of mpc_step).
inline Schedule npc_step(const MlpModel& model, const Network& net,
                         const LinearModel& lin,
                         const ForecastWindow& forecast,
                         const std::vector<double>& e_now_kwh,
                         double dt_hours = 0.25) {
  NpcController ctrl(net, lin, model, dt_hours);
  return ctrl.plan(forecast, e_now_kwh);
}

}  // namespace gridflex
