#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridflex/dataset.hpp"
#include "gridflex/errors.hpp"
#include "gridflex/rng.hpp"

namespace gridflex {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 150;
  std::vector<int> hidden = {256, 128};
  int batch_size = 64;
  std::uint64_t seed = 42;
};

// Feed-forward regressor: rectifier hidden layers, identity output layer.
// Holds copies of the dataset scalers so a model can never be paired with
// differently scaled inputs.
struct MlpModel {
  std::string layout_version = kDatasetLayout;
  std::vector<Eigen::MatrixXd> W;  // W[l] is (out x in)
  std::vector<Eigen::VectorXd> b;
  XScaler x_scaler;
  YScaler y_scaler;
  TrainConfig config;

  int n_layers() const { return static_cast<int>(W.size()); }
  int n_in() const { return W.empty() ? 0 : static_cast<int>(W.front().cols()); }
  int n_out() const { return W.empty() ? 0 : static_cast<int>(W.back().rows()); }

  // Batched forward, rows are samples (scaled domain).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const {
    if (X.cols() != n_in())
      throw ValidationError("mlp: input has " + std::to_string(X.cols()) +
                            " features, model expects " +
                            std::to_string(n_in()));
    Eigen::MatrixXd a = X;
    for (int l = 0; l < n_layers(); ++l) {
      Eigen::MatrixXd z =
          (a * W[l].transpose()).rowwise() + b[l].transpose();
      a = (l + 1 < n_layers()) ? z.cwiseMax(0.0) : z;
    }
    return a;
  }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    const Eigen::MatrixXd y = forward(Eigen::MatrixXd(x.transpose()));
    return y.row(0).transpose();
  }
};

inline MlpModel init_mlp(int n_in, const std::vector<int>& hidden, int n_out,
                         std::uint64_t seed) {
  if (n_in <= 0 || n_out <= 0)
    throw ValidationError("mlp: dimensions must be positive");
  std::vector<int> widths{n_in};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(n_out);
  MlpModel m;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    if (in <= 0 || out <= 0)
      throw ValidationError("mlp: layer widths must be positive");
    // Uniform fan-in scaling.
    const double r = 1.0 / std::sqrt(static_cast<double>(in));
    Eigen::MatrixXd W(out, in);
    Eigen::VectorXd b(out);
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < in; ++j) W(i, j) = rng.uniform(-r, r);
      b(i) = rng.uniform(-r, r);
    }
    m.W.push_back(std::move(W));
    m.b.push_back(std::move(b));
  }
  return m;
}

struct TrainHistory {
  std::vector<double> train_mse;
  std::vector<double> test_mse;
};

struct TrainResult {
  MlpModel model;
  TrainHistory history;
};

namespace detail {

inline double mse(const MlpModel& m, const Eigen::MatrixXd& X,
                  const Eigen::MatrixXd& Y) {
  if (X.rows() == 0) return 0.0;
  return (m.forward(X) - Y).squaredNorm() /
         static_cast<double>(X.rows() * Y.cols());
}

struct BackpropScratch {
  std::vector<Eigen::MatrixXd> a;   // activations per layer (incl input)
  std::vector<Eigen::MatrixXd> z;   // pre-activations
  std::vector<Eigen::MatrixXd> gW;
  std::vector<Eigen::VectorXd> gb;
};

// MSE gradients over the batch; returns the batch loss.
inline double backprop(const MlpModel& m, const Eigen::MatrixXd& X,
                       const Eigen::MatrixXd& Y, BackpropScratch& s) {
  const int L = m.n_layers();
  s.a.assign(1, X);
  s.z.resize(L);
  for (int l = 0; l < L; ++l) {
    s.z[l] = (s.a[l] * m.W[l].transpose()).rowwise() + m.b[l].transpose();
    s.a.push_back(l + 1 < L ? s.z[l].cwiseMax(0.0) : s.z[l]);
  }
  const double denom = static_cast<double>(X.rows() * Y.cols());
  const Eigen::MatrixXd err = s.a.back() - Y;
  const double loss = err.squaredNorm() / denom;

  s.gW.resize(L);
  s.gb.resize(L);
  Eigen::MatrixXd delta = err * (2.0 / denom);
  for (int l = L - 1; l >= 0; --l) {
    s.gW[l] = delta.transpose() * s.a[l];
    s.gb[l] = delta.colwise().sum().transpose();
    if (l > 0)
      delta = (delta * m.W[l]).cwiseProduct(
          (s.z[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return loss;
}

}  // namespace detail

// Mini-batch gradient descent with adaptive moment estimation. Deterministic
// for a fixed seed; NaN loss aborts with the epoch it appeared in.
inline TrainResult train_mlp_on(const Eigen::MatrixXd& X_train,
                                const Eigen::MatrixXd& Y_train,
                                const Eigen::MatrixXd& X_test,
                                const Eigen::MatrixXd& Y_test,
                                const TrainConfig& cfg) {
  if (X_train.rows() == 0) throw ValidationError("train: empty training set");
  if (cfg.learning_rate <= 0 || cfg.epochs <= 0 || cfg.batch_size <= 0)
    throw ValidationError("train: invalid config");

  TrainResult out;
  out.model = init_mlp(static_cast<int>(X_train.cols()), cfg.hidden,
                       static_cast<int>(Y_train.cols()), cfg.seed);
  MlpModel& m = out.model;
  m.config = cfg;

  const int L = m.n_layers();
  std::vector<Eigen::MatrixXd> mW(L), vW(L);
  std::vector<Eigen::VectorXd> mb(L), vb(L);
  for (int l = 0; l < L; ++l) {
    mW[l] = Eigen::MatrixXd::Zero(m.W[l].rows(), m.W[l].cols());
    vW[l] = mW[l];
    mb[l] = Eigen::VectorXd::Zero(m.b[l].size());
    vb[l] = mb[l];
  }
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t_adam = 0;

  Rng rng(cfg.seed ^ 0x5f3759df);
  std::vector<int> order(X_train.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  detail::BackpropScratch scratch;
  const int n = static_cast<int>(X_train.rows());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - start);
      Eigen::MatrixXd Xb(bs, X_train.cols()), Yb(bs, Y_train.cols());
      for (int i = 0; i < bs; ++i) {
        Xb.row(i) = X_train.row(order[start + i]);
        Yb.row(i) = Y_train.row(order[start + i]);
      }
      const double loss = detail::backprop(m, Xb, Yb, scratch);
      if (!std::isfinite(loss))
        throw TrainingError("train: loss diverged at epoch " +
                                std::to_string(epoch),
                            epoch);
      ++t_adam;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_adam));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_adam));
      for (int l = 0; l < L; ++l) {
        mW[l] = beta1 * mW[l] + (1 - beta1) * scratch.gW[l];
        vW[l] = beta2 * vW[l] +
                (1 - beta2) * scratch.gW[l].cwiseProduct(scratch.gW[l]);
        mb[l] = beta1 * mb[l] + (1 - beta1) * scratch.gb[l];
        vb[l] = beta2 * vb[l] +
                (1 - beta2) * scratch.gb[l].cwiseProduct(scratch.gb[l]);
        m.W[l] -= (cfg.learning_rate * (mW[l] / bc1).array() /
                   ((vW[l] / bc2).cwiseSqrt().array() + eps))
                      .matrix();
        m.b[l] -= (cfg.learning_rate * (mb[l] / bc1).array() /
                   ((vb[l] / bc2).cwiseSqrt().array() + eps))
                      .matrix();
      }
    }
    const double tr = detail::mse(m, X_train, Y_train);
    const double te = detail::mse(m, X_test, Y_test);
    if (!std::isfinite(tr))
      throw TrainingError(
          "train: loss diverged at epoch " + std::to_string(epoch), epoch);
    out.history.train_mse.push_back(tr);
    out.history.test_mse.push_back(te);
  }
  return out;
}

inline TrainResult train(const ImitationDataset& ds, const TrainConfig& cfg) {
  if (!ds.scalers_fitted)
    throw ValidationError("train: dataset scalers not fitted");
  const SplitView v = scaled_split(ds);
  TrainResult r = train_mlp_on(v.X_train, v.Y_train, v.X_test, v.Y_test, cfg);
  r.model.layout_version = ds.layout_version;
  r.model.x_scaler = ds.x_scaler;
  r.model.y_scaler = ds.y_scaler;
  return r;
}

// ---------------------------------------------------------------------------
// gradient verification against central finite differences. Samples whose
// hidden pre-activations sit on a rectifier kink are excluded (the loss is
// not differentiable there).
inline double grad_check(const MlpModel& model, Eigen::MatrixXd X,
                         Eigen::MatrixXd Y, double kink_tol = 1e-4) {
  if (X.rows() == 0) throw ValidationError("grad_check: empty batch");
  MlpModel m = model;

  // Drop kink-adjacent samples.
  {
    detail::BackpropScratch s;
    detail::backprop(m, X, Y, s);
    std::vector<int> keep;
    for (int r = 0; r < X.rows(); ++r) {
      bool ok = true;
      for (int l = 0; l + 1 < m.n_layers() && ok; ++l)
        if ((s.z[l].row(r).cwiseAbs().array() < kink_tol).any()) ok = false;
      if (ok) keep.push_back(r);
    }
    if (keep.empty())
      throw ValidationError("grad_check: all samples near rectifier kinks");
    Eigen::MatrixXd Xk(keep.size(), X.cols()), Yk(keep.size(), Y.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      Xk.row(i) = X.row(keep[i]);
      Yk.row(i) = Y.row(keep[i]);
    }
    X = Xk;
    Y = Yk;
  }

  detail::BackpropScratch s;
  detail::backprop(m, X, Y, s);

  auto loss_at = [&]() {
    const double denom = static_cast<double>(X.rows() * Y.cols());
    return (m.forward(X) - Y).squaredNorm() / denom;
  };

  double worst = 0.0;
  auto check_param = [&](double& theta, double analytic) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta));
    const double orig = theta;
    theta = orig + h;
    const double lp = loss_at();
    theta = orig - h;
    const double lm = loss_at();
    theta = orig;
    const double fd = (lp - lm) / (2 * h);
    const double rel =
        std::abs(analytic - fd) / std::max({1.0, std::abs(analytic),
                                            std::abs(fd)});
    worst = std::max(worst, rel);
  };
  for (int l = 0; l < m.n_layers(); ++l) {
    for (int i = 0; i < m.W[l].rows(); ++i)
      for (int j = 0; j < m.W[l].cols(); ++j)
        check_param(m.W[l](i, j), s.gW[l](i, j));
    for (int i = 0; i < m.b[l].size(); ++i)
      check_param(m.b[l](i), s.gb[l](i));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// model file: magic, JSON header, raw doubles. Round-trips bit-exactly.

inline void save_model(const MlpModel& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  nlohmann::json j;
  j["layout_version"] = m.layout_version;
  std::vector<int> widths{m.n_in()};
  for (const auto& W : m.W) widths.push_back(static_cast<int>(W.rows()));
  j["widths"] = widths;
  j["activation"] = "relu";
  j["config"] = {{"learning_rate", m.config.learning_rate},
                 {"epochs", m.config.epochs},
                 {"hidden", m.config.hidden},
                 {"batch_size", m.config.batch_size},
                 {"seed", m.config.seed}};
  j["n_scaler_in"] = static_cast<int>(m.x_scaler.mean.size());
  j["n_scaler_out"] = static_cast<int>(m.y_scaler.scale.size());
  os << "GRIDFLEXNN1\n" << j.dump() << '\n';
  for (const auto& W : m.W) detail::write_matrix(os, W);
  for (const auto& b : m.b) detail::write_doubles(os, b.data(), b.size());
  if (m.x_scaler.mean.size()) {
    detail::write_doubles(os, m.x_scaler.mean.data(), m.x_scaler.mean.size());
    detail::write_doubles(os, m.x_scaler.std.data(), m.x_scaler.std.size());
  }
  if (m.y_scaler.scale.size())
    detail::write_doubles(os, m.y_scaler.scale.data(),
                          m.y_scaler.scale.size());
  if (!os) throw IoError("write failed: " + path.string());
}

inline MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic, header;
  std::getline(is, magic);
  if (magic != "GRIDFLEXNN1")
    throw ParseError("model: bad magic in " + path.string());
  std::getline(is, header);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model header: ") + e.what());
  }
  MlpModel m;
  m.layout_version = j.at("layout_version").get<std::string>();
  const auto widths = j.at("widths").get<std::vector<int>>();
  m.config.learning_rate = j.at("config").at("learning_rate").get<double>();
  m.config.epochs = j.at("config").at("epochs").get<int>();
  m.config.hidden = j.at("config").at("hidden").get<std::vector<int>>();
  m.config.batch_size = j.at("config").at("batch_size").get<int>();
  m.config.seed = j.at("config").at("seed").get<std::uint64_t>();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    m.W.emplace_back(widths[l + 1], widths[l]);
    m.b.emplace_back(widths[l + 1]);
  }
  for (auto& W : m.W) detail::read_matrix(is, W);
  for (auto& b : m.b) detail::read_doubles(is, b.data(), b.size());
  const int nsi = j.at("n_scaler_in").get<int>();
  const int nso = j.at("n_scaler_out").get<int>();
  if (nsi > 0) {
    m.x_scaler.mean.resize(nsi);
    m.x_scaler.std.resize(nsi);
    detail::read_doubles(is, m.x_scaler.mean.data(), nsi);
    detail::read_doubles(is, m.x_scaler.std.data(), nsi);
  }
  if (nso > 0) {
    m.y_scaler.scale.resize(nso);
    detail::read_doubles(is, m.y_scaler.scale.data(), nso);
  }
  return m;
}

}  // namespace gridflex
