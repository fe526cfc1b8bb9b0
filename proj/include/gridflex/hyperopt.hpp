#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gridflex/bo.hpp"
#include "gridflex/csv.hpp"
#include "gridflex/dataset.hpp"
#include "gridflex/mlp.hpp"

namespace gridflex {

// Hyperparameter box. Paper-reproduction mode carries the published ranges;
// the desk preset shrinks the layer widths so a search finishes on a
// workstation.
struct SearchSpace {
  double alpha_lo = 1e-6, alpha_hi = 1e-3;
  int epochs_lo = 15, epochs_hi = 500;
  int layers_lo = 1, layers_hi = 4;
  int neurons_lo = 240, neurons_hi = 5584;

  static SearchSpace paper() { return {}; }

  static SearchSpace desk() {
    SearchSpace s;
    s.neurons_lo = 32;
    s.neurons_hi = 512;
    return s;
  }

  BoSpace to_bo_space() const {
    BoSpace space;
    space.dims.push_back({"alpha", alpha_lo, alpha_hi, true, false});
    space.dims.push_back({"epochs", static_cast<double>(epochs_lo),
                          static_cast<double>(epochs_hi), false, true});
    space.dims.push_back({"layers", static_cast<double>(layers_lo),
                          static_cast<double>(layers_hi), false, true});
    for (int l = 0; l < layers_hi; ++l)
      space.dims.push_back({"neurons_l" + std::to_string(l + 1),
                            static_cast<double>(neurons_lo),
                            static_cast<double>(neurons_hi), false, true});
    return space;
  }

  bool contains(const TrainConfig& cfg) const {
    if (cfg.learning_rate < alpha_lo || cfg.learning_rate > alpha_hi)
      return false;
    if (cfg.epochs < epochs_lo || cfg.epochs > epochs_hi) return false;
    const int L = static_cast<int>(cfg.hidden.size());
    if (L < layers_lo || L > layers_hi) return false;
    for (int w : cfg.hidden)
      if (w < neurons_lo || w > neurons_hi) return false;
    return true;
  }
};

inline TrainConfig config_from_point(const SearchSpace& space,
                                     const std::vector<double>& pt,
                                     int batch_size, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.learning_rate = pt[0];
  cfg.epochs = static_cast<int>(std::lround(pt[1]));
  const int layers = static_cast<int>(std::lround(pt[2]));
  cfg.hidden.clear();
  for (int l = 0; l < layers; ++l)
    cfg.hidden.push_back(static_cast<int>(std::lround(pt[3 + l])));
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  (void)space;
  return cfg;
}

struct HyperoptTrial {
  int iteration = 0;
  TrainConfig config;
  double validation_mse = 0.0;
  double wall_time = 0.0;
  bool diverged = false;
};

struct HyperoptResult {
  TrainConfig best_config;
  double best_mse = 0.0;
  std::vector<HyperoptTrial> trials;
};

// BO over TrainConfig, scored on a validation slice carved from the train
// split (never the test weeks). Diverged trainings count as a penalized
// objective, not an abort.
inline HyperoptResult run_bo_training(const ImitationDataset& ds,
                                      const SearchSpace& space, int budget,
                                      std::uint64_t seed, int batch_size = 64,
                                      int n_init = 20) {
  if (!ds.scalers_fitted)
    throw ValidationError("hyperopt: dataset needs split + fitted scalers");
  const auto val_mask = bo_validation_mask(ds);

  int n_fit = 0, n_val = 0;
  for (int r = 0; r < ds.n_samples(); ++r) {
    if (ds.mask[r] != 0) continue;
    (val_mask[r] ? n_val : n_fit)++;
  }
  if (n_fit == 0 || n_val == 0)
    throw ValidationError("hyperopt: validation carve-out left no data");
  Eigen::MatrixXd Xf(n_fit, ds.n_in()), Yf(n_fit, ds.n_out());
  Eigen::MatrixXd Xv(n_val, ds.n_in()), Yv(n_val, ds.n_out());
  int a = 0, b = 0;
  for (int r = 0; r < ds.n_samples(); ++r) {
    if (ds.mask[r] != 0) continue;
    if (val_mask[r]) {
      Xv.row(b) = ds.X.row(r);
      Yv.row(b++) = ds.Y.row(r);
    } else {
      Xf.row(a) = ds.X.row(r);
      Yf.row(a++) = ds.Y.row(r);
    }
  }
  Xf = apply_x_scaler(ds.x_scaler, Xf);
  Xv = apply_x_scaler(ds.x_scaler, Xv);
  Yf = apply_y_scaler(ds.y_scaler, Yf);
  Yv = apply_y_scaler(ds.y_scaler, Yv);

  HyperoptResult out;
  BoOptimizer opt(space.to_bo_space(), budget, seed, n_init);
  double worst_seen = 1.0;
  for (int it = 0; it < budget; ++it) {
    const BoSuggestion sug = opt.suggest();
    const TrainConfig cfg = config_from_point(space, sug.point, batch_size,
                                              seed + 1000 + it);
    HyperoptTrial trial;
    trial.iteration = it;
    trial.config = cfg;
    const auto t0 = std::chrono::steady_clock::now();
    double value = 0.0;
    try {
      const TrainResult r = train_mlp_on(Xf, Yf, Xv, Yv, cfg);
      value = r.history.test_mse.back();
      worst_seen = std::max(worst_seen, value);
    } catch (const TrainingError&) {
      trial.diverged = true;
      value = worst_seen * 10.0;
    }
    trial.validation_mse = value;
    trial.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.trials.push_back(trial);
    opt.observe(sug.point, value);
  }
  const BoObservation best = opt.best();
  out.best_config =
      config_from_point(space, best.point, batch_size, seed + 999);
  out.best_mse = best.value;
  return out;
}

inline void save_hyperopt_history(const HyperoptResult& r,
                                  const std::filesystem::path& path) {
  std::vector<std::string> header{"iteration", "learning_rate",  "epochs",
                                  "layers",    "n1",             "n2",
                                  "n3",        "n4",             "diverged",
                                  "validation_mse", "wall_time_s"};
  std::vector<std::vector<double>> rows;
  for (const auto& t : r.trials) {
    std::vector<double> row{static_cast<double>(t.iteration),
                            t.config.learning_rate,
                            static_cast<double>(t.config.epochs),
                            static_cast<double>(t.config.hidden.size())};
    for (int l = 0; l < 4; ++l)
      row.push_back(l < static_cast<int>(t.config.hidden.size())
                        ? static_cast<double>(t.config.hidden[l])
                        : 0.0);
    row.push_back(t.diverged ? 1.0 : 0.0);
    row.push_back(t.validation_mse);
    row.push_back(t.wall_time);
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

}  // namespace gridflex
