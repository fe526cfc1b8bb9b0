#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gridflex/errors.hpp"
#include "gridflex/rng.hpp"

namespace gridflex {

struct BoDim {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  bool log10 = false;   // searched in log space
  bool integer = false; // rounded before evaluation
};

struct BoSpace {
  std::vector<BoDim> dims;
  int size() const { return static_cast<int>(dims.size()); }
};

namespace bodetail {

// unit-cube <-> original space
inline double to_unit(const BoDim& d, double v) {
  if (d.log10)
    return (std::log10(v) - std::log10(d.lo)) /
           (std::log10(d.hi) - std::log10(d.lo));
  return (v - d.lo) / (d.hi - d.lo);
}

inline double from_unit(const BoDim& d, double u) {
  u = std::clamp(u, 0.0, 1.0);
  double v = d.log10 ? std::pow(10.0, std::log10(d.lo) +
                                          u * (std::log10(d.hi) -
                                               std::log10(d.lo)))
                     : d.lo + u * (d.hi - d.lo);
  if (d.integer) v = std::clamp(std::round(v), d.lo, d.hi);
  return v;
}

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
inline double norm_pdf(double z) {
  return std::exp(-0.5 * z * z) / 2.5066282746310002;
}

}  // namespace bodetail

// Latin hypercube in the unit cube, seeded and deterministic.
inline std::vector<Eigen::VectorXd> latin_hypercube(int n, int d, Rng& rng) {
  std::vector<Eigen::VectorXd> pts(n, Eigen::VectorXd(d));
  for (int k = 0; k < d; ++k) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    for (int i = 0; i < n; ++i)
      pts[i](k) = (perm[i] + rng.uniform()) / n;
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Gaussian process with Matern-5/2 ARD kernel on unit-cube inputs; targets
// standardized internally, observation noise fixed at 1e-6 (relative).
class GaussianProcess {
 public:
  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Rng& rng,
           int restarts = 5) {
    X_ = X;
    const int n = static_cast<int>(y.size());
    y_mean_ = y.mean();
    y_sd_ = std::sqrt((y.array() - y_mean_).square().sum() /
                      std::max(1, n - 1));
    if (y_sd_ < 1e-12) y_sd_ = 1.0;
    ys_ = (y.array() - y_mean_) / y_sd_;

    const int d = static_cast<int>(X.cols());
    // theta = [log10 lengthscale per dim, log10 signal sd]
    const int np = d + 1;
    Eigen::VectorXd best_theta = Eigen::VectorXd::Zero(np);
    best_theta(d) = 0.0;
    for (int i = 0; i < d; ++i) best_theta(i) = std::log10(0.5);
    double best_nll = nll(best_theta);

    auto starts = latin_hypercube(restarts, np, rng);
    for (auto& s : starts) {
      Eigen::VectorXd th(np);
      for (int i = 0; i < d; ++i) th(i) = -1.3 + 2.3 * s(i);  // 0.05 .. 10
      th(d) = -0.7 + 1.4 * s(d);                              // 0.2 .. 5
      const auto [opt, val] = nelder_mead(
          [this](const Eigen::VectorXd& t) { return nll(t); }, th, 0.25, 160);
      if (val < best_nll) {
        best_nll = val;
        best_theta = opt;
      }
    }
    theta_ = best_theta;
    factorize(theta_);
  }

  struct Pred {
    double mean = 0.0;
    double var = 0.0;
  };

  Pred predict(const Eigen::VectorXd& x) const {
    const int n = static_cast<int>(X_.rows());
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i) k(i) = kernel(x, X_.row(i).transpose());
    const Eigen::VectorXd v = llt_.matrixL().solve(k);
    Pred p;
    p.mean = y_mean_ + y_sd_ * k.dot(alpha_);
    const double kxx = signal_var_;
    p.var = std::max(1e-14, kxx - v.squaredNorm()) * y_sd_ * y_sd_;
    return p;
  }

 private:
  double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    double r2 = 0.0;
    for (int i = 0; i < a.size(); ++i) {
      const double d = (a(i) - b(i)) / ls_(i);
      r2 += d * d;
    }
    const double r = std::sqrt(std::max(r2, 0.0));
    const double s5r = std::sqrt(5.0) * r;
    return signal_var_ * (1.0 + s5r + 5.0 * r2 / 3.0) * std::exp(-s5r);
  }

  void set_theta(const Eigen::VectorXd& th) {
    const int d = static_cast<int>(X_.cols());
    ls_.resize(d);
    for (int i = 0; i < d; ++i)
      ls_(i) = std::pow(10.0, std::clamp(th(i), -2.0, 2.0));
    const double sd = std::pow(10.0, std::clamp(th(d), -2.0, 2.0));
    signal_var_ = sd * sd;
  }

  bool factorize(const Eigen::VectorXd& th) {
    set_theta(th);
    const int n = static_cast<int>(X_.rows());
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        const double v =
            kernel(X_.row(i).transpose(), X_.row(j).transpose());
        K(i, j) = v;
        K(j, i) = v;
      }
    double jitter = 1e-6 * signal_var_ + 1e-10;
    for (int attempt = 0; attempt < 6; ++attempt) {
      Eigen::MatrixXd Kj = K + jitter * Eigen::MatrixXd::Identity(n, n);
      llt_.compute(Kj);
      if (llt_.info() == Eigen::Success) {
        alpha_ = llt_.solve(ys_);
        return true;
      }
      jitter *= 100.0;
    }
    return false;
  }

  double nll(const Eigen::VectorXd& th) {
    if (!factorize(th)) return 1e12;
    const int n = static_cast<int>(X_.rows());
    double logdet = 0.0;
    for (int i = 0; i < n; ++i)
      logdet += 2.0 * std::log(llt_.matrixLLT()(i, i));
    return 0.5 * ys_.dot(alpha_) + 0.5 * logdet + 0.5 * n * std::log(2 * M_PI);
  }

  // Deterministic derivative-free minimizer; good enough for a handful of
  // kernel hyperparameters.
  static std::pair<Eigen::VectorXd, double> nelder_mead(
      const std::function<double(const Eigen::VectorXd&)>& f,
      const Eigen::VectorXd& x0, double step, int iters) {
    const int n = static_cast<int>(x0.size());
    std::vector<Eigen::VectorXd> xs(n + 1, x0);
    std::vector<double> fs(n + 1);
    for (int i = 1; i <= n; ++i) xs[i](i - 1) += step;
    for (int i = 0; i <= n; ++i) fs[i] = f(xs[i]);

    for (int it = 0; it < iters; ++it) {
      std::vector<int> idx(n + 1);
      for (int i = 0; i <= n; ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(),
                [&](int a, int b) { return fs[a] < fs[b]; });
      std::vector<Eigen::VectorXd> xs2(n + 1);
      std::vector<double> fs2(n + 1);
      for (int i = 0; i <= n; ++i) {
        xs2[i] = xs[idx[i]];
        fs2[i] = fs[idx[i]];
      }
      xs = std::move(xs2);
      fs = std::move(fs2);
      if (std::abs(fs[n] - fs[0]) < 1e-10) break;

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i) centroid += xs[i];
      centroid /= n;

      const Eigen::VectorXd xr = centroid + (centroid - xs[n]);
      const double fr = f(xr);
      if (fr < fs[0]) {
        const Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[n]);
        const double fe = f(xe);
        if (fe < fr) {
          xs[n] = xe;
          fs[n] = fe;
        } else {
          xs[n] = xr;
          fs[n] = fr;
        }
      } else if (fr < fs[n - 1]) {
        xs[n] = xr;
        fs[n] = fr;
      } else {
        const Eigen::VectorXd xc = centroid + 0.5 * (xs[n] - centroid);
        const double fc = f(xc);
        if (fc < fs[n]) {
          xs[n] = xc;
          fs[n] = fc;
        } else {
          for (int i = 1; i <= n; ++i) {
            xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
            fs[i] = f(xs[i]);
          }
        }
      }
    }
    int best = 0;
    for (int i = 1; i <= n; ++i)
      if (fs[i] < fs[best]) best = i;
    return {xs[best], fs[best]};
  }

  Eigen::MatrixXd X_;
  Eigen::VectorXd ys_, alpha_, ls_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd theta_;
  double signal_var_ = 1.0;
  double y_mean_ = 0.0, y_sd_ = 1.0;
};

// ---------------------------------------------------------------------------
// sequential minimizer: space-filling start, then expected improvement under
// the GP surrogate.

struct BoObservation {
  std::vector<double> point;  // original space
  double value = 0.0;
};

struct BoSuggestion {
  std::vector<double> point;
  bool final = false;  // budget exhausted; point is the incumbent
};

class BoOptimizer {
 public:
  BoOptimizer(BoSpace space, int budget, std::uint64_t seed, int n_init = 20)
      : space_(std::move(space)),
        budget_(budget),
        n_init_(n_init),
        rng_(seed) {
    if (budget_ < n_init_)
      throw ValidationError("bo: budget must cover the " +
                            std::to_string(n_init_) + " initial points");
    init_pts_ = latin_hypercube(n_init_, space_.size(), rng_);
  }

  BoSuggestion suggest() {
    BoSuggestion s;
    if (static_cast<int>(history_.size()) >= budget_) {
      s.point = best().point;
      s.final = true;
      return s;
    }
    const int k = static_cast<int>(history_.size());
    if (k < n_init_) {
      s.point = to_original(init_pts_[k]);
      return s;
    }
    refit();
    s.point = to_original(argmax_ei());
    return s;
  }

  void observe(const std::vector<double>& point, double value) {
    if (static_cast<int>(point.size()) != space_.size())
      throw ValidationError("bo: observation dimension mismatch");
    history_.push_back({point, value});
  }

  BoObservation best() const {
    if (history_.empty()) throw ValidationError("bo: nothing observed yet");
    return *std::min_element(
        history_.begin(), history_.end(),
        [](const auto& a, const auto& b) { return a.value < b.value; });
  }

  const std::vector<BoObservation>& history() const { return history_; }
  const GaussianProcess& surrogate() const { return gp_; }

  // Expected-improvement maximizer over seeded candidates (public for the
  // acquisition tests).
  Eigen::VectorXd argmax_ei() {
    const int d = space_.size();
    const double y_best = best().value;
    double best_ei = -1.0;
    Eigen::VectorXd best_x = Eigen::VectorXd::Constant(d, 0.5);
    const int n_cand = 2048 + 256 * d;
    for (int c = 0; c < n_cand; ++c) {
      Eigen::VectorXd x(d);
      for (int i = 0; i < d; ++i) x(i) = rng_.uniform();
      snap_integers(x);
      if (already_evaluated(x)) continue;
      const auto p = gp_.predict(x);
      const double sd = std::sqrt(p.var);
      const double xi = 0.01;
      const double z = (y_best - p.mean - xi) / sd;
      const double ei =
          (y_best - p.mean - xi) * bodetail::norm_cdf(z) +
          sd * bodetail::norm_pdf(z);
      if (ei > best_ei) {
        best_ei = ei;
        best_x = x;
      }
    }
    return best_x;
  }

  void refit() {
    const int n = static_cast<int>(history_.size());
    Eigen::MatrixXd X(n, space_.size());
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < space_.size(); ++k)
        X(i, k) = bodetail::to_unit(space_.dims[k], history_[i].point[k]);
      y(i) = history_[i].value;
    }
    gp_.fit(X, y, rng_);
  }

 private:
  std::vector<double> to_original(const Eigen::VectorXd& u) const {
    std::vector<double> p(space_.size());
    for (int i = 0; i < space_.size(); ++i)
      p[i] = bodetail::from_unit(space_.dims[i], u(i));
    return p;
  }

  void snap_integers(Eigen::VectorXd& u) const {
    for (int i = 0; i < space_.size(); ++i) {
      if (!space_.dims[i].integer) continue;
      const double v = bodetail::from_unit(space_.dims[i], u(i));
      u(i) = bodetail::to_unit(space_.dims[i], v);
    }
  }

  bool already_evaluated(const Eigen::VectorXd& u) const {
    const auto pt = to_original(u);
    for (const auto& obs : history_) {
      bool same = true;
      for (std::size_t i = 0; i < pt.size(); ++i)
        if (std::abs(obs.point[i] - pt[i]) >
            1e-12 * std::max(1.0, std::abs(pt[i]))) {
          same = false;
          break;
        }
      if (same) return true;
    }
    return false;
  }

  BoSpace space_;
  int budget_;
  int n_init_;
  Rng rng_;
  std::vector<Eigen::VectorXd> init_pts_;
  std::vector<BoObservation> history_;
  GaussianProcess gp_;
};

struct BoRunResult {
  BoObservation best;
  std::vector<BoObservation> history;
};

inline BoRunResult run_bo(
    const std::function<double(const std::vector<double>&)>& objective,
    const BoSpace& space, int budget, std::uint64_t seed, int n_init = 20) {
  BoOptimizer opt(space, budget, seed, n_init);
  for (int i = 0; i < budget; ++i) {
    const BoSuggestion s = opt.suggest();
    opt.observe(s.point, objective(s.point));
  }
  return {opt.best(), opt.history()};
}

}  // namespace gridflex
