#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridflex/calendar.hpp"
#include "gridflex/errors.hpp"
#include "gridflex/grid.hpp"
#include "gridflex/mpc.hpp"

namespace gridflex {

inline constexpr const char* kDatasetLayout = "gridflex-ds-v1";

// Per-feature standardization (fit on the train split only).
struct XScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

// Per-output division by the owning storage's p_max, so targets live in
// [-1, 1].
struct YScaler {
  Eigen::VectorXd scale;
};

// Imitation data harvested from the optimizing controller. X rows are
// [net-injection forecast (T x non-slack buses), generation forecast (same
// shape), SoC (per storage)], flattened bus-major; Y rows are the full
// horizon storage powers, storage-major, p.u.
struct ImitationDataset {
  std::string layout_version = kDatasetLayout;
  double dt_hours = 0.25;
  int horizon = 0;
  int n_load_bus = 0;
  int n_sto = 0;
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  std::vector<long> step;         // absolute step per sample
  std::vector<std::uint8_t> mask;  // 0 = train, 1 = test
  bool split_done = false;
  bool scalers_fitted = false;
  XScaler x_scaler;
  YScaler y_scaler;

  int n_samples() const { return static_cast<int>(X.rows()); }
  int n_in() const { return static_cast<int>(X.cols()); }
  int n_out() const { return static_cast<int>(Y.cols()); }
};

// Controller feature vector: [net injection forecast (non-slack buses,
// bus-major), generation forecast (same order), SoC per storage], all p.u.
// The recorder and the learned controller must agree on this bit for bit.
inline Eigen::VectorXd assemble_features(const Network& net,
                                         const ForecastWindow& forecast,
                                         const std::vector<double>& e_now_kwh) {
  const int T = static_cast<int>(forecast.length());
  const int N = net.n_buses();
  const int S = net.n_storages();
  Eigen::VectorXd x(2 * (N - 1) * T + S);
  int c = 0;
  for (int b = 0; b < N; ++b) {
    if (b == net.slack_bus) continue;
    for (int t = 0; t < T; ++t) x(c++) = forecast.p_inj(t, b);
  }
  for (int b = 0; b < N; ++b) {
    if (b == net.slack_bus) continue;
    for (int t = 0; t < T; ++t) x(c++) = forecast.p_gen(t, b);
  }
  for (int s = 0; s < S; ++s) x(c++) = kwh_to_pu(e_now_kwh[s], net.s_base);
  return x;
}

// Collects (forecast, SoC) -> schedule pairs while the rolling loop runs.
class DatasetRecorder final : public RecordSink {
 public:
  explicit DatasetRecorder(const Network& net, double dt_hours = 0.25)
      : net_(&net), dt_hours_(dt_hours) {
    for (int i = 0; i < net.n_buses(); ++i)
      if (i != net.slack_bus) load_bus_.push_back(i);
  }

  void on_step(long k, const ForecastWindow& forecast,
               const std::vector<double>& e_now_kwh,
               const Schedule& schedule) override {
    const int T = static_cast<int>(forecast.length());
    const int S = net_->n_storages();
    const Eigen::VectorXd xv = assemble_features(*net_, forecast, e_now_kwh);
    std::vector<double> x(xv.data(), xv.data() + xv.size());

    std::vector<double> y(S * T);
    for (int s = 0; s < S; ++s)
      for (int t = 0; t < T; ++t)
        y[s * T + t] = kw_to_pu(schedule.p_flex_kw(s, t), net_->s_base);

    if (!rows_x_.empty() && (rows_x_.back().size() != x.size() ||
                             rows_y_.back().size() != y.size()))
      throw ValidationError("dataset: inconsistent sample dimensions");
    rows_x_.push_back(std::move(x));
    rows_y_.push_back(std::move(y));
    steps_.push_back(k);
    horizon_ = T;
  }

  ImitationDataset take() {
    if (rows_x_.empty())
      throw ValidationError("dataset: no samples recorded");
    ImitationDataset ds;
    ds.dt_hours = dt_hours_;
    ds.horizon = horizon_;
    ds.n_load_bus = static_cast<int>(load_bus_.size());
    ds.n_sto = net_->n_storages();
    ds.X.resize(rows_x_.size(), rows_x_[0].size());
    ds.Y.resize(rows_y_.size(), rows_y_[0].size());
    for (std::size_t r = 0; r < rows_x_.size(); ++r) {
      for (std::size_t c = 0; c < rows_x_[r].size(); ++c)
        ds.X(r, c) = rows_x_[r][c];
      for (std::size_t c = 0; c < rows_y_[r].size(); ++c)
        ds.Y(r, c) = rows_y_[r][c];
    }
    ds.step = steps_;
    ds.mask.assign(ds.n_samples(), 0);
    ds.y_scaler.scale.resize(ds.n_out());
    for (int s = 0; s < ds.n_sto; ++s) {
      const double pmax = kw_to_pu(net_->storages[s].p_max, net_->s_base);
      for (int t = 0; t < ds.horizon; ++t)
        ds.y_scaler.scale(s * ds.horizon + t) = pmax;
    }
    rows_x_.clear();
    rows_y_.clear();
    steps_.clear();
    return ds;
  }

 private:
  const Network* net_;
  double dt_hours_;
  std::vector<int> load_bus_;
  std::vector<std::vector<double>> rows_x_, rows_y_;
  std::vector<long> steps_;
  int horizon_ = 0;
};

// ---------------------------------------------------------------------------
// chronological split: per calendar month, days 1-21 and 29-31 train, days
// 22-28 test. Fixed placement keeps the split reproducible.

inline void split_by_weeks(ImitationDataset& ds) {
  if (ds.step.empty()) throw ValidationError("split: empty dataset");
  const long span = ds.step.back() - ds.step.front() + 1;
  if (span * ds.dt_hours < 28.0 * 24.0)
    throw ValidationError("split: samples span less than one month");
  ds.mask.assign(ds.n_samples(), 0);
  for (int i = 0; i < ds.n_samples(); ++i) {
    const CalendarStamp st = stamp_of_step(ds.step[i], ds.dt_hours);
    ds.mask[i] = (st.day_of_month >= 22 && st.day_of_month <= 28) ? 1 : 0;
  }
  ds.split_done = true;
}

inline int count_train(const ImitationDataset& ds) {
  int n = 0;
  for (auto m : ds.mask) n += (m == 0);
  return n;
}

// ---------------------------------------------------------------------------
// scaling

inline void fit_scalers(ImitationDataset& ds) {
  if (!ds.split_done)
    throw ValidationError("scalers: split the dataset first (no test leakage)");
  const int n_in = ds.n_in();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_in);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(n_in);
  int n_train = 0;
  for (int r = 0; r < ds.n_samples(); ++r) {
    if (ds.mask[r] != 0) continue;
    mean += ds.X.row(r).transpose();
    ++n_train;
  }
  if (n_train == 0) throw ValidationError("scalers: train split is empty");
  mean /= n_train;
  for (int r = 0; r < ds.n_samples(); ++r) {
    if (ds.mask[r] != 0) continue;
    const Eigen::VectorXd d = ds.X.row(r).transpose() - mean;
    sq += d.cwiseProduct(d);
  }
  Eigen::VectorXd std = (sq / n_train).cwiseSqrt();
  // Constant features scale to zero; a clamped std of 1 keeps them harmless.
  for (int i = 0; i < n_in; ++i)
    if (std(i) < 1e-12) std(i) = 1.0;
  ds.x_scaler = {mean, std};
  ds.scalers_fitted = true;
}

inline Eigen::MatrixXd apply_x_scaler(const XScaler& sc,
                                      const Eigen::MatrixXd& X) {
  return (X.rowwise() - sc.mean.transpose()).array().rowwise() /
         sc.std.transpose().array();
}

inline Eigen::MatrixXd invert_x_scaler(const XScaler& sc,
                                       const Eigen::MatrixXd& Xs) {
  return (Xs.array().rowwise() * sc.std.transpose().array()).matrix()
             .rowwise() +
         sc.mean.transpose();
}

inline Eigen::MatrixXd apply_y_scaler(const YScaler& sc,
                                      const Eigen::MatrixXd& Y) {
  return Y.array().rowwise() / sc.scale.transpose().array();
}

inline Eigen::MatrixXd invert_y_scaler(const YScaler& sc,
                                       const Eigen::MatrixXd& Ys) {
  return Ys.array().rowwise() * sc.scale.transpose().array();
}

// Scaled train/test views used by training.
struct SplitView {
  Eigen::MatrixXd X_train, Y_train, X_test, Y_test;
};

inline SplitView scaled_split(const ImitationDataset& ds) {
  if (!ds.scalers_fitted) throw ValidationError("dataset: fit scalers first");
  const int nt = count_train(ds);
  SplitView v;
  v.X_train.resize(nt, ds.n_in());
  v.Y_train.resize(nt, ds.n_out());
  v.X_test.resize(ds.n_samples() - nt, ds.n_in());
  v.Y_test.resize(ds.n_samples() - nt, ds.n_out());
  int a = 0, b = 0;
  for (int r = 0; r < ds.n_samples(); ++r) {
    if (ds.mask[r] == 0) {
      v.X_train.row(a) = ds.X.row(r);
      v.Y_train.row(a++) = ds.Y.row(r);
    } else {
      v.X_test.row(b) = ds.X.row(r);
      v.Y_test.row(b++) = ds.Y.row(r);
    }
  }
  v.X_train = apply_x_scaler(ds.x_scaler, v.X_train);
  v.X_test = apply_x_scaler(ds.x_scaler, v.X_test);
  v.Y_train = apply_y_scaler(ds.y_scaler, v.Y_train);
  v.Y_test = apply_y_scaler(ds.y_scaler, v.Y_test);
  return v;
}

// Validation slice for hyperparameter search, carved from the train split:
// days 15-21 of every month whose train block is complete, otherwise the
// last quarter (>= 1 day) of the month's train days. Returns 1 where a train
// sample is held out for validation.
inline std::vector<std::uint8_t> bo_validation_mask(
    const ImitationDataset& ds) {
  if (!ds.split_done) throw ValidationError("validation mask: split first");
  std::map<int, std::set<int>> train_days;  // month -> day_of_month
  std::vector<CalendarStamp> stamps(ds.n_samples());
  for (int i = 0; i < ds.n_samples(); ++i) {
    stamps[i] = stamp_of_step(ds.step[i], ds.dt_hours);
    if (ds.mask[i] == 0)
      train_days[stamps[i].month].insert(stamps[i].day_of_month);
  }
  std::map<int, std::set<int>> val_days;
  for (const auto& [month, days] : train_days) {
    std::set<int> val;
    if (days.size() >= 21) {
      for (int d = 15; d <= 21; ++d) val.insert(d);
    } else {
      const int take = std::max<int>(1, static_cast<int>(days.size()) / 4);
      auto it = days.rbegin();
      for (int k = 0; k < take; ++k, ++it) val.insert(*it);
    }
    val_days[month] = std::move(val);
  }
  std::vector<std::uint8_t> vm(ds.n_samples(), 0);
  for (int i = 0; i < ds.n_samples(); ++i) {
    if (ds.mask[i] != 0) continue;
    const auto& vd = val_days[stamps[i].month];
    if (vd.count(stamps[i].day_of_month)) vm[i] = 1;
  }
  return vm;
}

// ---------------------------------------------------------------------------
// file format: magic line, JSON header line, then raw little-endian doubles.

namespace detail {

inline void write_doubles(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(n * sizeof(double)));
}

inline void read_doubles(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw ParseError("dataset: truncated binary payload");
}

inline void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  // row-major on disk
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      write_doubles(os, &v, 1);
    }
}

inline void read_matrix(std::istream& is, Eigen::MatrixXd& m) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) read_doubles(is, &m(r, c), 1);
}

}  // namespace detail

inline void save_dataset(const ImitationDataset& ds,
                         const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  nlohmann::json j;
  j["layout_version"] = ds.layout_version;
  j["dt_hours"] = ds.dt_hours;
  j["horizon"] = ds.horizon;
  j["n_load_bus"] = ds.n_load_bus;
  j["n_sto"] = ds.n_sto;
  j["n_samples"] = ds.n_samples();
  j["n_in"] = ds.n_in();
  j["n_out"] = ds.n_out();
  j["split_done"] = ds.split_done;
  j["scalers_fitted"] = ds.scalers_fitted;
  os << "GRIDFLEXDS1\n" << j.dump() << '\n';
  detail::write_matrix(os, ds.X);
  detail::write_matrix(os, ds.Y);
  for (long s : ds.step) {
    const auto v = static_cast<std::int64_t>(s);
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  os.write(reinterpret_cast<const char*>(ds.mask.data()),
           static_cast<std::streamsize>(ds.mask.size()));
  if (ds.scalers_fitted) {
    detail::write_doubles(os, ds.x_scaler.mean.data(), ds.n_in());
    detail::write_doubles(os, ds.x_scaler.std.data(), ds.n_in());
  }
  detail::write_doubles(os, ds.y_scaler.scale.data(), ds.n_out());
  if (!os) throw IoError("write failed: " + path.string());
}

inline ImitationDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic, header;
  std::getline(is, magic);
  if (magic != "GRIDFLEXDS1")
    throw ParseError("dataset: bad magic in " + path.string());
  std::getline(is, header);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset header: ") + e.what());
  }
  ImitationDataset ds;
  ds.layout_version = j.at("layout_version").get<std::string>();
  ds.dt_hours = j.at("dt_hours").get<double>();
  ds.horizon = j.at("horizon").get<int>();
  ds.n_load_bus = j.at("n_load_bus").get<int>();
  ds.n_sto = j.at("n_sto").get<int>();
  const int ns = j.at("n_samples").get<int>();
  const int ni = j.at("n_in").get<int>();
  const int no = j.at("n_out").get<int>();
  ds.split_done = j.at("split_done").get<bool>();
  ds.scalers_fitted = j.at("scalers_fitted").get<bool>();
  ds.X.resize(ns, ni);
  ds.Y.resize(ns, no);
  detail::read_matrix(is, ds.X);
  detail::read_matrix(is, ds.Y);
  ds.step.resize(ns);
  for (int i = 0; i < ns; ++i) {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    ds.step[i] = static_cast<long>(v);
  }
  ds.mask.resize(ns);
  is.read(reinterpret_cast<char*>(ds.mask.data()), ns);
  if (!is) throw ParseError("dataset: truncated payload");
  if (ds.scalers_fitted) {
    ds.x_scaler.mean.resize(ni);
    ds.x_scaler.std.resize(ni);
    detail::read_doubles(is, ds.x_scaler.mean.data(), ni);
    detail::read_doubles(is, ds.x_scaler.std.data(), ni);
  }
  ds.y_scaler.scale.resize(no);
  detail::read_doubles(is, ds.y_scaler.scale.data(), no);
  return ds;
}

// Plain-text inspection dump (X and Y side by side with step and mask).
inline void export_dataset_csv(const ImitationDataset& ds,
                               const std::filesystem::path& x_path,
                               const std::filesystem::path& y_path) {
  std::vector<std::string> xh{"step", "mask"};
  for (int c = 0; c < ds.n_in(); ++c) xh.push_back("x" + std::to_string(c));
  std::vector<std::string> yh{"step", "mask"};
  for (int c = 0; c < ds.n_out(); ++c) yh.push_back("y" + std::to_string(c));
  std::vector<std::vector<double>> xr(ds.n_samples()), yr(ds.n_samples());
  for (int r = 0; r < ds.n_samples(); ++r) {
    xr[r].push_back(static_cast<double>(ds.step[r]));
    xr[r].push_back(ds.mask[r]);
    for (int c = 0; c < ds.n_in(); ++c) xr[r].push_back(ds.X(r, c));
    yr[r].push_back(static_cast<double>(ds.step[r]));
    yr[r].push_back(ds.mask[r]);
    for (int c = 0; c < ds.n_out(); ++c) yr[r].push_back(ds.Y(r, c));
  }
  write_csv(x_path, xh, xr);
  write_csv(y_path, yh, yr);
}

}  // namespace gridflex
