// Command-line front end: every pipeline stage reads and writes only the
// documented file formats, so any stage can be rerun in isolation.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gridflex/bench.hpp"
#include "gridflex/dataset.hpp"
#include "gridflex/eval.hpp"
#include "gridflex/hyperopt.hpp"
#include "gridflex/mlp.hpp"
#include "gridflex/mpc.hpp"
#include "gridflex/npc.hpp"

namespace fs = std::filesystem;
using namespace gridflex;

namespace {

struct SeriesArgs {
  std::string grid, series, series_kvar, series_gen;
  double dt_hours = 0.25;
};

void add_series_flags(CLI::App* cmd, SeriesArgs& a) {
  cmd->add_option("--grid", a.grid, "network file (JSON)")->required();
  cmd->add_option("--series", a.series, "net injection CSV, kW")->required();
  cmd->add_option("--series-kvar", a.series_kvar, "reactive CSV, kvar");
  cmd->add_option("--series-gen", a.series_gen, "generation CSV, kW");
  cmd->add_option("--dt-hours", a.dt_hours, "step width in hours");
}

std::pair<Network, ScenarioSeries> load_inputs(const SeriesArgs& a) {
  Network net = load_network(a.grid);
  std::optional<fs::path> kvar, gen;
  if (!a.series_kvar.empty()) kvar = a.series_kvar;
  if (!a.series_gen.empty()) gen = a.series_gen;
  ScenarioSeries s = load_series(a.series, net, kvar, gen, a.dt_hours);
  return {std::move(net), std::move(s)};
}

std::vector<int> parse_widths(const std::string& spec) {
  std::vector<int> w;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) w.push_back(std::stoi(tok));
  return w;
}

int run(int argc, char** argv) {
  CLI::App app{"battery flexibility scheduling: rolling-horizon optimizer "
               "and its learned imitation"};
  app.require_subcommand(1);

  // ---- bench generate
  auto* bench_cmd = app.add_subcommand("bench", "benchmark grid generator");
  bench_cmd->require_subcommand(1);
  auto* bgen = bench_cmd->add_subcommand("generate",
                                         "emit the 15-node benchmark");
  BenchSpec bspec;
  std::string bgen_out = "bench";
  bgen->add_option("--seed", bspec.seed, "generator seed");
  bgen->add_option("--out", bgen_out, "output directory")->required();
  bgen->add_option("--days", bspec.n_days, "number of simulated days");
  bgen->add_option("--pv-peak", bspec.pv_peak_kw, "nominal kWp per household");
  bgen->add_option("--ev-power", bspec.ev_power_kw, "EV charger kW");
  bgen->add_option("--s-rated", bspec.s_rated_kva, "transformer kVA");
  bgen->callback([&] {
    const BenchResult r = generate(bspec);
    fs::create_directories(bgen_out);
    save_network(r.network, fs::path(bgen_out) / "grid.json");
    save_series(r.series, r.network, fs::path(bgen_out) / "series.csv",
                fs::path(bgen_out) / "series_kvar.csv",
                fs::path(bgen_out) / "series_gen.csv");
    std::cout << "wrote " << bgen_out << "/grid.json and series files ("
              << r.series.n_steps << " steps)\n";
  });

  // ---- mpc run (baseline | mpc | npc)
  auto* mpc_cmd = app.add_subcommand("mpc", "rolling-horizon simulation");
  mpc_cmd->require_subcommand(1);
  auto* mrun = mpc_cmd->add_subcommand("run", "simulate one controller");
  SeriesArgs margs;
  add_series_flags(mrun, margs);
  std::string controller = "mpc", mlog = "log.csv", dataset_out, model_in;
  long start_day = 0;
  int days = 1;
  double horizon_hours = 24.0, vmin = 0.95, vmax = 1.05;
  double qp_tol = 1e-5;
  std::uint64_t mseed = 1;
  mrun->add_option("--controller", controller, "baseline | mpc | npc")
      ->check(CLI::IsMember({"baseline", "mpc", "npc"}));
  mrun->add_option("--start-day", start_day, "first simulated day (0-based)");
  mrun->add_option("--days", days, "number of simulated days");
  mrun->add_option("--horizon-hours", horizon_hours, "lookahead horizon");
  mrun->add_option("--vmin", vmin, "voltage lower bound, p.u.");
  mrun->add_option("--vmax", vmax, "voltage upper bound, p.u.");
  mrun->add_option("--qp-tol", qp_tol, "in-loop QP tolerance");
  mrun->add_option("--log", mlog, "simulation log CSV")->required();
  mrun->add_option("--dataset-out", dataset_out,
                   "record imitation samples to this file (mpc only)");
  mrun->add_option("--model", model_in, "trained model (npc only)");
  mrun->add_option("--seed", mseed, "seed (recorded only)");
  mrun->callback([&] {
    auto [net, series] = load_inputs(margs);
    for (auto& b : net.buses) {
      b.v_lb = vmin;
      b.v_ub = vmax;
    }
    validate(net);
    const int spd = steps_per_day(series.dt_hours);
    const int horizon = static_cast<int>(horizon_hours / series.dt_hours);
    const long start = start_day * spd;
    const int n_steps = days * spd;

    LinearModel lin = linearize(net);
    std::unique_ptr<Controller> ctrl;
    MpcSettings ms;
    ms.horizon_steps = horizon;
    ms.dt_hours = series.dt_hours;
    ms.qp.tol = qp_tol;
    if (controller == "baseline") {
      ctrl = std::make_unique<BaselineController>(net, series.dt_hours);
    } else if (controller == "mpc") {
      ctrl = std::make_unique<MpcController>(net, lin, ms);
    } else {
      if (model_in.empty())
        throw ValidationError("npc controller needs --model");
      ctrl = std::make_unique<NpcController>(net, lin, load_model(model_in),
                                             series.dt_hours);
    }
    DatasetRecorder recorder(net, series.dt_hours);
    RecordSink* sink = nullptr;
    if (!dataset_out.empty()) {
      if (controller != "mpc")
        throw ValidationError("--dataset-out requires --controller mpc");
      sink = &recorder;
    }
    const SimulationLog log = run_rolling_horizon(net, series, start, n_steps,
                                                  *ctrl, horizon, sink);
    save_log(log, mlog);
    if (sink) save_dataset(recorder.take(), dataset_out);
    std::cout << controller << ": " << log.n_steps() << " steps -> " << mlog
              << "\n";
  });

  // ---- dataset build
  auto* ds_cmd = app.add_subcommand("dataset", "imitation dataset tooling");
  ds_cmd->require_subcommand(1);
  auto* dbuild = ds_cmd->add_subcommand(
      "build", "chronological split + scaler fit on a recorded dataset");
  std::string ds_in, ds_out, ds_csv_prefix;
  dbuild->add_option("--dataset", ds_in, "recorded dataset")->required();
  dbuild->add_option("--out", ds_out, "finalized dataset")->required();
  dbuild->add_option("--export-csv", ds_csv_prefix,
                     "also dump <prefix>_X.csv / <prefix>_Y.csv");
  dbuild->callback([&] {
    ImitationDataset ds = load_dataset(ds_in);
    split_by_weeks(ds);
    fit_scalers(ds);
    save_dataset(ds, ds_out);
    if (!ds_csv_prefix.empty())
      export_dataset_csv(ds, ds_csv_prefix + "_X.csv",
                         ds_csv_prefix + "_Y.csv");
    const int nt = count_train(ds);
    std::cout << "split: " << nt << " train / " << ds.n_samples() - nt
              << " test samples\n";
  });

  // ---- npc train / npc eval
  auto* npc_cmd = app.add_subcommand("npc", "learned controller");
  npc_cmd->require_subcommand(1);
  auto* ntrain = npc_cmd->add_subcommand("train", "imitation training");
  std::string nt_ds, nt_model = "model.bin", nt_hidden = "384,256";
  std::string nt_config;
  TrainConfig tc;
  ntrain->add_option("--dataset", nt_ds, "finalized dataset")->required();
  ntrain->add_option("--model-out", nt_model, "model file")->required();
  ntrain->add_option("--lr", tc.learning_rate, "learning rate");
  ntrain->add_option("--epochs", tc.epochs, "training epochs");
  ntrain->add_option("--hidden", nt_hidden, "hidden widths, e.g. 384,256");
  ntrain->add_option("--batch", tc.batch_size, "mini-batch size");
  ntrain->add_option("--seed", tc.seed, "training seed");
  ntrain->add_option("--config", nt_config,
                     "JSON config from 'hyperopt run' (overrides flags)");
  ntrain->callback([&] {
    ImitationDataset ds = load_dataset(nt_ds);
    tc.hidden = parse_widths(nt_hidden);
    if (!nt_config.empty()) {
      std::ifstream is(nt_config);
      if (!is) throw IoError("cannot open " + nt_config);
      nlohmann::json j;
      is >> j;
      tc.learning_rate = j.at("learning_rate");
      tc.epochs = j.at("epochs");
      tc.hidden = j.at("hidden").get<std::vector<int>>();
      tc.batch_size = j.value("batch_size", tc.batch_size);
    }
    const TrainResult r = train(ds, tc);
    save_model(r.model, nt_model);
    std::cout << "trained " << tc.epochs << " epochs; final train mse "
              << r.history.train_mse.back() << ", test mse "
              << r.history.test_mse.back() << " -> " << nt_model << "\n";
  });

  auto* neval = npc_cmd->add_subcommand(
      "eval", "rolling-horizon simulation with the learned controller");
  SeriesArgs nargs;
  add_series_flags(neval, nargs);
  std::string ne_model, ne_log = "npc_log.csv";
  long ne_start_day = 0;
  int ne_days = 1;
  double ne_horizon_hours = 24.0;
  neval->add_option("--model", ne_model, "trained model")->required();
  neval->add_option("--start-day", ne_start_day, "first simulated day");
  neval->add_option("--days", ne_days, "number of simulated days");
  neval->add_option("--horizon-hours", ne_horizon_hours, "lookahead horizon");
  neval->add_option("--log", ne_log, "simulation log CSV")->required();
  neval->callback([&] {
    auto [net, series] = load_inputs(nargs);
    LinearModel lin = linearize(net);
    NpcController ctrl(net, lin, load_model(ne_model), series.dt_hours);
    const int spd = steps_per_day(series.dt_hours);
    const int horizon = static_cast<int>(ne_horizon_hours / series.dt_hours);
    const SimulationLog log =
        run_rolling_horizon(net, series, ne_start_day * spd, ne_days * spd,
                            ctrl, horizon);
    save_log(log, ne_log);
    std::cout << "npc: " << log.n_steps() << " steps -> " << ne_log << "\n";
  });

  // ---- hyperopt run
  auto* hyp_cmd = app.add_subcommand("hyperopt", "hyperparameter search");
  hyp_cmd->require_subcommand(1);
  auto* hrun = hyp_cmd->add_subcommand("run", "Bayesian optimization");
  std::string h_ds, h_hist = "hyperopt.csv", h_best = "best_config.json";
  int h_budget = 30;
  bool h_paper = false;
  std::uint64_t h_seed = 1;
  int h_batch = 64;
  hrun->add_option("--dataset", h_ds, "finalized dataset")->required();
  hrun->add_option("--budget", h_budget, "BO iterations");
  hrun->add_flag("--paper-ranges", h_paper,
                 "search the published ranges (180 iterations, wide layers)");
  hrun->add_option("--seed", h_seed, "search seed");
  hrun->add_option("--batch", h_batch, "mini-batch size per trial");
  hrun->add_option("--history", h_hist, "trial history CSV");
  hrun->add_option("--best-out", h_best, "best config JSON");
  hrun->callback([&] {
    ImitationDataset ds = load_dataset(h_ds);
    SearchSpace space = h_paper ? SearchSpace::paper() : SearchSpace::desk();
    if (h_paper && h_budget == 30) h_budget = 180;
    const HyperoptResult r =
        run_bo_training(ds, space, h_budget, h_seed, h_batch);
    save_hyperopt_history(r, h_hist);
    nlohmann::json j = {{"learning_rate", r.best_config.learning_rate},
                        {"epochs", r.best_config.epochs},
                        {"hidden", r.best_config.hidden},
                        {"batch_size", r.best_config.batch_size},
                        {"validation_mse", r.best_mse}};
    std::ofstream os(h_best);
    os << j.dump(2) << '\n';
    std::cout << "best validation mse " << r.best_mse << " -> " << h_best
              << "\n";
  });

  // ---- compare
  auto* comp = app.add_subcommand(
      "compare", "cross-controller statistics from three logs");
  std::string c_base, c_mpc, c_npc, c_grid, c_report = "report.json";
  double c_vmin = 0.95, c_vmax = 1.05;
  comp->add_option("--baseline", c_base, "baseline log")->required();
  comp->add_option("--mpc", c_mpc, "optimizer log")->required();
  comp->add_option("--npc", c_npc, "learned-controller log")->required();
  comp->add_option("--grid", c_grid, "network file")->required();
  comp->add_option("--vmin", c_vmin, "voltage lower bound");
  comp->add_option("--vmax", c_vmax, "voltage upper bound");
  comp->add_option("--report", c_report, "report JSON");
  comp->callback([&] {
    const Network net = load_network(c_grid);
    const SimulationLog lb = load_log(c_base, "baseline");
    const SimulationLog lm = load_log(c_mpc, "mpc");
    const SimulationLog ln = load_log(c_npc, "npc");
    const ComparisonReport r =
        compare(lb, lm, ln, net.transformer, c_vmin, c_vmax);
    save_report(r, c_report);
    std::cout << "objective ratio (mean) " << r.objective_mean_ratio
              << ", (median) " << r.objective_median_ratio
              << "; npc/mpc median time ratio " << r.time_median_ratio
              << " -> " << c_report << "\n";
  });

  // ---- plots
  auto* plots_cmd =
      app.add_subcommand("plots", "figures + CSV pairs from logs");
  std::string p_base, p_mpc, p_npc, p_grid, p_out = "plots";
  long p_day = -1;
  plots_cmd->add_option("--baseline", p_base)->required();
  plots_cmd->add_option("--mpc", p_mpc)->required();
  plots_cmd->add_option("--npc", p_npc)->required();
  plots_cmd->add_option("--grid", p_grid)->required();
  plots_cmd->add_option("--out", p_out, "output directory");
  plots_cmd->add_option("--day-step", p_day,
                        "absolute step selecting the single-day figure");
  plots_cmd->callback([&] {
    const Network net = load_network(p_grid);
    const SimulationLog lb = load_log(p_base, "baseline");
    const SimulationLog lm = load_log(p_mpc, "mpc");
    const SimulationLog ln = load_log(p_npc, "npc");
    const ComparisonReport r = compare(lb, lm, ln, net.transformer);
    const auto files = export_plots(r, lb, lm, ln, p_out, p_day);
    std::cout << "wrote " << files.size() << " files to " << p_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const SolveError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
