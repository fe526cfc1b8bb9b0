#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "gridflex/csv.hpp"
#include "gridflex/errors.hpp"

namespace gridflex {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// min 1/2 x'Mx + d'x  s.t.  Ax = b,  Gx <= h,  lb <= x <= ub
struct QpProblem {
  SpMat M;
  Vec d;
  SpMat A;
  Vec b;
  SpMat G;
  Vec h;
  Vec lb;
  Vec ub;

  int n() const { return static_cast<int>(d.size()); }
  int n_eq() const { return static_cast<int>(b.size()); }
  int n_ineq() const { return static_cast<int>(h.size()); }

  double objective(const Vec& x) const {
    if (x.size() != d.size())
      throw ValidationError("objective: x has length " +
                            std::to_string(x.size()) + ", expected " +
                            std::to_string(d.size()));
    return 0.5 * x.dot(M * x) + d.dot(x);
  }
};

enum class QpStatus { optimal, infeasible, unbounded, max_iter };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::unbounded: return "unbounded";
    case QpStatus::max_iter: return "max_iter";
  }
  return "?";
}

struct QpSolution {
  Vec x;
  Vec y_eq;    // multipliers of Ax = b (signed)
  Vec y_ineq;  // multipliers of Gx <= h
  Vec y_lb;    // multipliers of x >= lb (>= 0, zero where lb = -inf)
  Vec y_ub;    // multipliers of x <= ub
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  double solve_time = 0.0;  // seconds
  double objective = 0.0;
  std::array<double, 4> kkt{};  // eq, ineq, stationarity, complementarity
  bool polished = false;
  int refactorizations = 0;
};

struct QpSettings {
  double tol = 1e-6;     // KKT acceptance tolerance for status = optimal
  int max_iter = 20000;
  double rho = 0.1;      // base step; equality rows get rho * 1e3
  double sigma = 1e-6;
  double alpha = 1.6;    // over-relaxation
  bool adaptive_rho = true;
  int rho_interval = 50;         // min iterations between rho refactors
  double rho_switch_factor = 5;  // refactor when rho would move this much
  bool polish = true;
  double polish_reg = 1e-9;
  int polish_refine = 3;
  int check_interval = 10;
  double inf_tol = 1e-8;  // infeasibility certificate threshold
  int scaling_iters = 10; // Ruiz equilibration passes (0 disables)
  std::string iter_log;   // optional CSV path: iter, primal, dual, objective
};

// The four KKT residual norms of a candidate solution:
//   ||Ax-b||_inf,
//   ||max(Gx-h, 0)||_inf including bound violations,
//   ||Mx + d + A'y_eq + G'y_ineq + y_ub - y_lb||_inf,
//   |y_ineq'(Gx-h)| summed with the bound terms.
inline std::array<double, 4> kkt_residuals(const QpProblem& p,
                                           const QpSolution& s) {
  const int n = p.n();
  if (s.x.size() != n || s.y_eq.size() != p.n_eq() ||
      s.y_ineq.size() != p.n_ineq())
    throw ValidationError("kkt_residuals: dimension mismatch");

  double r_eq = 0.0;
  if (p.n_eq() > 0) r_eq = (p.A * s.x - p.b).cwiseAbs().maxCoeff();

  double r_in = 0.0;
  if (p.n_ineq() > 0)
    r_in = (p.G * s.x - p.h).cwiseMax(0.0).maxCoeff();
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(p.lb(i))) r_in = std::max(r_in, p.lb(i) - s.x(i));
    if (std::isfinite(p.ub(i))) r_in = std::max(r_in, s.x(i) - p.ub(i));
  }
  r_in = std::max(r_in, 0.0);

  Vec stat = p.M * s.x + p.d;
  if (p.n_eq() > 0) stat += p.A.transpose() * s.y_eq;
  if (p.n_ineq() > 0) stat += p.G.transpose() * s.y_ineq;
  if (s.y_ub.size() == n) stat += s.y_ub;
  if (s.y_lb.size() == n) stat -= s.y_lb;
  const double r_stat = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;

  double comp = 0.0;
  if (p.n_ineq() > 0) comp += s.y_ineq.dot(p.G * s.x - p.h);
  for (int i = 0; i < n; ++i) {
    if (s.y_ub.size() == n && std::isfinite(p.ub(i)))
      comp += s.y_ub(i) * (s.x(i) - p.ub(i));
    if (s.y_lb.size() == n && std::isfinite(p.lb(i)))
      comp += s.y_lb(i) * (p.lb(i) - s.x(i));
  }
  return {r_eq, r_in, r_stat, std::abs(comp)};
}

// ---------------------------------------------------------------------------
// Operator-splitting solver. The constraint stack [A; G; box] and the cost
// matrix keep their sparsity pattern across rolling-horizon calls, so the KKT
// factorization and the equilibration are computed once in setup() and reused
// by update_vectors(); only b, h, lb, ub change per step.
class AdmmSolver {
 public:
  explicit AdmmSolver(QpSettings settings = {}) : cfg_(settings) {}

  QpSettings& settings() { return cfg_; }
  const QpSettings& settings() const { return cfg_; }

  void setup(const QpProblem& p) {
    check_problem(p);
    n_ = p.n();
    me_ = p.n_eq();
    mi_ = p.n_ineq();
    box_idx_.clear();
    for (int i = 0; i < n_; ++i)
      if (std::isfinite(p.lb(i)) || std::isfinite(p.ub(i)))
        box_idx_.push_back(i);
    nb_ = static_cast<int>(box_idx_.size());
    m_ = me_ + mi_ + nb_;

    P_ = p.M;
    q_ = p.d;
    C_.resize(m_, n_);
    {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(p.A.nonZeros() + p.G.nonZeros() + nb_);
      for (int k = 0; k < p.A.outerSize(); ++k)
        for (SpMat::InnerIterator it(p.A, k); it; ++it)
          trip.emplace_back(static_cast<int>(it.row()),
                            static_cast<int>(it.col()), it.value());
      for (int k = 0; k < p.G.outerSize(); ++k)
        for (SpMat::InnerIterator it(p.G, k); it; ++it)
          trip.emplace_back(me_ + static_cast<int>(it.row()),
                            static_cast<int>(it.col()), it.value());
      for (int i = 0; i < nb_; ++i)
        trip.emplace_back(me_ + mi_ + i, box_idx_[i], 1.0);
      C_.setFromTriplets(trip.begin(), trip.end());
    }
    set_lu(p);

    compute_scaling();
    Ps_ = (cost_scale_ * Dv_.asDiagonal() * P_ * Dv_.asDiagonal()).eval();
    qs_ = cost_scale_ * Dv_.asDiagonal() * q_;
    Cs_ = (Ev_.asDiagonal() * C_ * Dv_.asDiagonal()).eval();
    scale_lu();

    rho_bar_ = cfg_.rho;
    build_rho();
    factor();
    reset_state();
    ready_ = true;
  }

  // New b, h, lb, ub (and d) on the identical pattern; keeps the
  // factorization and the equilibration.
  void update_vectors(const QpProblem& p) {
    if (!ready_ || p.n() != n_ || p.n_eq() != me_ || p.n_ineq() != mi_)
      throw ValidationError("update_vectors: call setup() first");
    set_lu(p);
    scale_lu();
    q_ = p.d;
    qs_ = cost_scale_ * Dv_.asDiagonal() * q_;
    // A pin toggling (row switching between equality and range) would change
    // the rho vector; rebuild + refactor only in that case.
    if (equality_mask_changed()) {
      build_rho();
      factor();
    }
  }

  void warm_start(const Vec& x0) {
    if (static_cast<int>(x0.size()) != n_)
      throw ValidationError("warm_start: wrong length");
    xs_ = Dv_.cwiseInverse().asDiagonal() * x0;
    zs_ = Cs_ * xs_;
    warm_ = true;
  }

  void warm_start(const Vec& x0, const Vec& y0_full) {
    warm_start(x0);
    if (static_cast<int>(y0_full.size()) == m_)
      ys_ = Ev_.cwiseInverse().asDiagonal() * y0_full * cost_scale_;
  }

  QpSolution solve(const QpProblem& p) {
    if (!ready_)
      setup(p);
    else
      update_vectors(p);
    return run(p);
  }

  // Raw internal state access used by the rolling loop to shift solutions.
  const Vec& last_y() const { return y_unscaled_; }

 private:
  static void check_problem(const QpProblem& p) {
    const int n = p.n();
    if (p.M.rows() != n || p.M.cols() != n)
      throw ValidationError("qp: M must be n x n");
    if (p.A.cols() != n && p.n_eq() > 0)
      throw ValidationError("qp: A column count mismatch");
    if (p.G.cols() != n && p.n_ineq() > 0)
      throw ValidationError("qp: G column count mismatch");
    if (p.A.rows() != p.b.size() || p.G.rows() != p.h.size())
      throw ValidationError("qp: constraint vector length mismatch");
    if (p.lb.size() != n || p.ub.size() != n)
      throw ValidationError("qp: bound vector length mismatch");
    for (int i = 0; i < n; ++i)
      if (p.lb(i) > p.ub(i))
        throw ValidationError("qp: lb > ub at index " + std::to_string(i));
  }

  void set_lu(const QpProblem& p) {
    l_.resize(m_);
    u_.resize(m_);
    l_.head(me_) = p.b;
    u_.head(me_) = p.b;
    l_.segment(me_, mi_).setConstant(-kInf);
    u_.segment(me_, mi_) = p.h;
    for (int i = 0; i < nb_; ++i) {
      l_(me_ + mi_ + i) = p.lb(box_idx_[i]);
      u_(me_ + mi_ + i) = p.ub(box_idx_[i]);
    }
  }

  void scale_lu() {
    ls_ = l_;
    us_ = u_;
    for (int i = 0; i < m_; ++i) {
      if (std::isfinite(ls_(i))) ls_(i) *= Ev_(i);
      if (std::isfinite(us_(i))) us_(i) *= Ev_(i);
    }
  }

  bool equality_mask_changed() const {
    for (int i = 0; i < m_; ++i) {
      const bool eq = std::isfinite(l_(i)) && l_(i) == u_(i);
      if (eq != eq_row_[i]) return true;
    }
    return false;
  }

  // Modified Ruiz equilibration of [P C'; C 0] plus cost normalization.
  void compute_scaling() {
    Dv_ = Vec::Ones(n_);
    Ev_ = Vec::Ones(m_);
    cost_scale_ = 1.0;
    if (cfg_.scaling_iters <= 0 || n_ == 0) return;

    SpMat P = P_;
    SpMat C = C_;
    Vec q = q_;
    for (int pass = 0; pass < cfg_.scaling_iters; ++pass) {
      Vec dcol = Vec::Zero(n_);
      for (int k = 0; k < P.outerSize(); ++k)
        for (SpMat::InnerIterator it(P, k); it; ++it) {
          dcol(it.col()) = std::max(dcol(it.col()), std::abs(it.value()));
          dcol(it.row()) = std::max(dcol(it.row()), std::abs(it.value()));
        }
      for (int k = 0; k < C.outerSize(); ++k)
        for (SpMat::InnerIterator it(C, k); it; ++it)
          dcol(it.col()) = std::max(dcol(it.col()), std::abs(it.value()));
      Vec erow = Vec::Zero(m_);
      for (int k = 0; k < C.outerSize(); ++k)
        for (SpMat::InnerIterator it(C, k); it; ++it)
          erow(it.row()) = std::max(erow(it.row()), std::abs(it.value()));

      auto rescale = [](double v) {
        if (v < 1e-12) return 1.0;
        return 1.0 / std::sqrt(std::min(v, 1e12));
      };
      Vec dd = dcol.unaryExpr(rescale);
      Vec ee = erow.unaryExpr(rescale);
      P = (dd.asDiagonal() * P * dd.asDiagonal()).eval();
      C = (ee.asDiagonal() * C * dd.asDiagonal()).eval();
      q = dd.asDiagonal() * q;
      Dv_ = Dv_.cwiseProduct(dd);
      Ev_ = Ev_.cwiseProduct(ee);
    }
    // Normalize the cost so primal and dual residuals live on one scale.
    double pcol_mean = 0.0;
    if (P.nonZeros() > 0) {
      Vec pc = Vec::Zero(n_);
      for (int k = 0; k < P.outerSize(); ++k)
        for (SpMat::InnerIterator it(P, k); it; ++it)
          pc(it.col()) = std::max(pc(it.col()), std::abs(it.value()));
      pcol_mean = pc.mean();
    }
    const double qn = q.size() ? q.cwiseAbs().maxCoeff() : 0.0;
    const double denom = std::max(pcol_mean, qn);
    cost_scale_ = denom > 1e-12 ? 1.0 / denom : 1.0;
  }

  void build_rho() {
    rho_.resize(m_);
    eq_row_.assign(m_, false);
    for (int i = 0; i < m_; ++i) {
      const bool eq = std::isfinite(l_(i)) && l_(i) == u_(i);
      eq_row_[i] = eq;
      rho_(i) = eq ? rho_bar_ * 1e3 : rho_bar_;
    }
  }

  void factor() {
    const int dim = n_ + m_;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(Ps_.nonZeros() + Cs_.nonZeros() + dim);
    for (int k = 0; k < Ps_.outerSize(); ++k)
      for (SpMat::InnerIterator it(Ps_, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
    for (int i = 0; i < n_; ++i) trip.emplace_back(i, i, cfg_.sigma);
    for (int k = 0; k < Cs_.outerSize(); ++k)
      for (SpMat::InnerIterator it(Cs_, k); it; ++it) {
        trip.emplace_back(n_ + static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
        trip.emplace_back(static_cast<int>(it.col()),
                          n_ + static_cast<int>(it.row()), it.value());
      }
    for (int i = 0; i < m_; ++i)
      trip.emplace_back(n_ + i, n_ + i, -1.0 / rho_(i));
    SpMat K(dim, dim);
    K.setFromTriplets(trip.begin(), trip.end());
    kkt_.compute(K);
    if (kkt_.info() != Eigen::Success)
      throw SolveError("qp: KKT factorization failed");
    ++n_refactor_;
  }

  void reset_state() {
    xs_ = Vec::Zero(n_);
    zs_ = Vec::Zero(m_);
    ys_ = Vec::Zero(m_);
    warm_ = false;
  }

  static double inf_norm(const Vec& v) {
    return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  }

  QpSolution run(const QpProblem& p) {
    const auto t0 = std::chrono::steady_clock::now();
    QpSolution sol;
    std::ofstream log;
    if (!cfg_.iter_log.empty()) {
      log.open(cfg_.iter_log);
      log << "iter,primal_res,dual_res,objective\n";
    }

    Vec rhs(n_ + m_), xz(n_ + m_);
    Vec x_prev, y_prev, dx = Vec::Zero(n_), dy = Vec::Zero(m_);
    int last_rho_update = 0;
    double next_polish_at = std::max(1e-4, 10 * cfg_.tol);

    int it = 0;
    for (it = 1; it <= cfg_.max_iter; ++it) {
      x_prev = xs_;
      y_prev = ys_;

      rhs.head(n_) = cfg_.sigma * xs_ - qs_;
      rhs.tail(m_) = zs_ - ys_.cwiseQuotient(rho_);
      xz = kkt_.solve(rhs);
      const Vec& xt = xz.head(n_);
      Vec zt = zs_ + (xz.tail(m_) - ys_).cwiseQuotient(rho_);

      xs_ = cfg_.alpha * xt + (1.0 - cfg_.alpha) * xs_;
      Vec z_pre = cfg_.alpha * zt + (1.0 - cfg_.alpha) * zs_ +
                  ys_.cwiseQuotient(rho_);
      Vec z_new = z_pre.cwiseMax(ls_).cwiseMin(us_);
      ys_ += rho_.cwiseProduct(z_pre - ys_.cwiseQuotient(rho_) - z_new);
      zs_ = z_new;

      dx = xs_ - x_prev;
      dy = ys_ - y_prev;

      if (it % cfg_.check_interval != 0 && it != cfg_.max_iter) continue;

      unscale_iterate();
      const Vec Cx = C_ * x_unscaled_;
      const Vec Px = P_ * x_unscaled_;
      const Vec Cty = C_.transpose() * y_unscaled_;
      const double r_prim = inf_norm(Cx - z_unscaled_);
      const double r_dual = inf_norm(Px + q_ + Cty);
      if (log.is_open())
        log << it << ',' << r_prim << ',' << r_dual << ','
            << p.objective(x_unscaled_) << '\n';

      const double eps_prim =
          cfg_.tol + cfg_.tol * std::max(inf_norm(Cx), inf_norm(z_unscaled_));
      const double eps_dual =
          cfg_.tol + cfg_.tol * std::max({inf_norm(Px), inf_norm(q_),
                                          inf_norm(Cty)});

      const bool converged = r_prim <= eps_prim && r_dual <= eps_dual;
      const bool coarse = r_prim <= next_polish_at && r_dual <= next_polish_at;

      if (converged || (cfg_.polish && coarse)) {
        extract(sol, p);
        if (cfg_.polish) {
          if (try_polish(p, sol)) {
            sol.status = QpStatus::optimal;
            finish(sol, p, it, t0);
            return sol;
          }
          next_polish_at = std::max(next_polish_at * 0.1, cfg_.tol * 0.099);
        }
        if (converged) {
          sol.kkt = kkt_residuals(p, sol);
          sol.status = max_kkt(sol.kkt) <= cfg_.tol &&
                               dual_signs_ok(sol, cfg_.tol)
                           ? QpStatus::optimal
                           : QpStatus::max_iter;
          if (sol.status == QpStatus::optimal || !cfg_.polish) {
            finish(sol, p, it, t0);
            return sol;
          }
        }
      }

      if (check_primal_infeasible(dy)) {
        extract(sol, p);
        sol.status = QpStatus::infeasible;
        finish(sol, p, it, t0);
        return sol;
      }
      if (check_dual_infeasible(dx)) {
        extract(sol, p);
        sol.status = QpStatus::unbounded;
        finish(sol, p, it, t0);
        return sol;
      }

      if (cfg_.adaptive_rho && it - last_rho_update >= cfg_.rho_interval) {
        const double pn = std::max(
            {inf_norm(Cx), inf_norm(z_unscaled_), 1e-12});
        const double dn =
            std::max({inf_norm(Px), inf_norm(q_), inf_norm(Cty), 1e-12});
        const double ratio =
            std::sqrt((r_prim / pn) / std::max(r_dual / dn, 1e-16));
        if (ratio > cfg_.rho_switch_factor ||
            ratio < 1.0 / cfg_.rho_switch_factor) {
          rho_bar_ = std::clamp(rho_bar_ * ratio, 1e-6, 1e6);
          // Keep the dual iterate consistent across the rho change.
          build_rho();
          factor();
          last_rho_update = it;
        }
      }
    }

    extract(sol, p);
    sol.kkt = kkt_residuals(p, sol);
    sol.status =
        max_kkt(sol.kkt) <= cfg_.tol && dual_signs_ok(sol, cfg_.tol)
            ? QpStatus::optimal
            : QpStatus::max_iter;
    finish(sol, p, cfg_.max_iter, t0);
    return sol;
  }

  static double max_kkt(const std::array<double, 4>& k) {
    return std::max({k[0], k[1], k[2], k[3]});
  }

  // The four residual norms cannot see a sign-flipped multiplier on an
  // exactly active row; KKT optimality additionally needs y_ineq >= 0.
  static bool dual_signs_ok(const QpSolution& s, double tol) {
    for (int i = 0; i < s.y_ineq.size(); ++i)
      if (s.y_ineq(i) < -tol) return false;
    return true;
  }

  void unscale_iterate() {
    x_unscaled_ = Dv_.cwiseProduct(xs_);
    z_unscaled_ = zs_.cwiseQuotient(Ev_);
    y_unscaled_ = Ev_.cwiseProduct(ys_) / cost_scale_;
  }

  void extract(QpSolution& sol, const QpProblem& p) {
    unscale_iterate();
    sol.x = x_unscaled_;
    sol.y_eq = y_unscaled_.head(me_);
    sol.y_ineq = y_unscaled_.segment(me_, mi_);
    sol.y_lb = Vec::Zero(n_);
    sol.y_ub = Vec::Zero(n_);
    for (int i = 0; i < nb_; ++i) {
      const double y = y_unscaled_(me_ + mi_ + i);
      if (y > 0)
        sol.y_ub(box_idx_[i]) = y;
      else
        sol.y_lb(box_idx_[i]) = -y;
    }
    sol.objective = p.objective(sol.x);
  }

  void finish(QpSolution& sol, const QpProblem& p, int iters,
              std::chrono::steady_clock::time_point t0) {
    sol.iterations = iters;
    sol.refactorizations = n_refactor_;
    if (sol.kkt == std::array<double, 4>{}) sol.kkt = kkt_residuals(p, sol);
    sol.objective = p.objective(sol.x);
    sol.solve_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  }

  bool check_primal_infeasible(const Vec& dy_scaled) const {
    if (m_ == 0) return false;
    const Vec dy = Ev_.cwiseProduct(dy_scaled) / cost_scale_;
    const double nrm = inf_norm(dy);
    if (nrm < 1e-14) return false;
    const double eps = cfg_.inf_tol * nrm;
    if (inf_norm(C_.transpose() * dy) > eps) return false;
    double support = 0.0;
    for (int i = 0; i < m_; ++i) {
      const double pos = std::max(dy(i), 0.0), neg = std::min(dy(i), 0.0);
      if (pos > 0.0) {
        if (!std::isfinite(u_(i))) return false;
        support += u_(i) * pos;
      }
      if (neg < 0.0) {
        if (!std::isfinite(l_(i))) return false;
        support += l_(i) * neg;
      }
    }
    return support <= -eps;
  }

  bool check_dual_infeasible(const Vec& dx_scaled) const {
    const Vec dx = Dv_.cwiseProduct(dx_scaled);
    const double nrm = inf_norm(dx);
    if (nrm < 1e-14) return false;
    const double eps = cfg_.inf_tol * nrm;
    if (inf_norm(P_ * dx) > eps) return false;
    if (q_.dot(dx) > -eps) return false;
    const Vec Cdx = C_ * dx;
    for (int i = 0; i < m_; ++i) {
      if (std::isfinite(u_(i)) && Cdx(i) > eps) return false;
      if (std::isfinite(l_(i)) && Cdx(i) < -eps) return false;
    }
    return true;
  }

  // One equality-constrained KKT solve on the active set, with iterative
  // refinement; accepted only when it lowers the worst KKT residual.
  bool try_polish(const QpProblem& p, QpSolution& sol) {
    std::vector<int> act;
    std::vector<double> rhs_act;
    for (int i = 0; i < m_; ++i) {
      const double y = y_unscaled_(i);
      if (eq_row_[i]) {
        act.push_back(i);
        rhs_act.push_back(l_(i));
      } else if (y > 0 && std::isfinite(u_(i))) {
        act.push_back(i);
        rhs_act.push_back(u_(i));
      } else if (y < 0 && std::isfinite(l_(i))) {
        act.push_back(i);
        rhs_act.push_back(l_(i));
      }
    }
    const int na = static_cast<int>(act.size());
    const int dim = n_ + na;

    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < P_.outerSize(); ++k)
      for (SpMat::InnerIterator it(P_, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
    for (int i = 0; i < n_; ++i) trip.emplace_back(i, i, cfg_.polish_reg);
    // C rows restricted to the active set.
    std::vector<int> row_map(m_, -1);
    for (int a = 0; a < na; ++a) row_map[act[a]] = a;
    for (int k = 0; k < C_.outerSize(); ++k)
      for (SpMat::InnerIterator it(C_, k); it; ++it) {
        const int a = row_map[it.row()];
        if (a < 0) continue;
        trip.emplace_back(n_ + a, static_cast<int>(it.col()), it.value());
        trip.emplace_back(static_cast<int>(it.col()), n_ + a, it.value());
      }
    for (int a = 0; a < na; ++a)
      trip.emplace_back(n_ + a, n_ + a, -cfg_.polish_reg);
    SpMat K(dim, dim);
    K.setFromTriplets(trip.begin(), trip.end());

    Eigen::SimplicialLDLT<SpMat> ldlt(K);
    if (ldlt.info() != Eigen::Success) return false;

    Vec rhs(dim);
    rhs.head(n_) = -q_;
    for (int a = 0; a < na; ++a) rhs(n_ + a) = rhs_act[a];
    Vec sol_v = ldlt.solve(rhs);
    // Refine against the unregularized system.
    SpMat K0 = K;
    for (int i = 0; i < n_; ++i) K0.coeffRef(i, i) -= cfg_.polish_reg;
    for (int a = 0; a < na; ++a)
      K0.coeffRef(n_ + a, n_ + a) += cfg_.polish_reg;
    for (int r = 0; r < cfg_.polish_refine; ++r)
      sol_v += ldlt.solve(rhs - K0 * sol_v);
    if (!sol_v.allFinite()) return false;

    QpSolution cand = sol;
    cand.x = sol_v.head(n_);
    Vec y_full = Vec::Zero(m_);
    for (int a = 0; a < na; ++a) y_full(act[a]) = sol_v(n_ + a);

    // A guessed active set is only correct if each recovered multiplier
    // pushes from the side its row was pinned at.
    const double sign_tol = std::max(1e-9, cfg_.tol);
    for (int a = 0; a < na; ++a) {
      if (eq_row_[act[a]]) continue;
      const bool at_upper = rhs_act[a] == u_(act[a]);
      const double y = y_full(act[a]);
      if (at_upper ? y < -sign_tol : y > sign_tol) return false;
    }

    cand.y_eq = y_full.head(me_);
    cand.y_ineq = y_full.segment(me_, mi_);
    cand.y_lb = Vec::Zero(n_);
    cand.y_ub = Vec::Zero(n_);
    for (int i = 0; i < nb_; ++i) {
      const double y = y_full(me_ + mi_ + i);
      if (y > 0)
        cand.y_ub(box_idx_[i]) = y;
      else
        cand.y_lb(box_idx_[i]) = -y;
    }
    cand.kkt = kkt_residuals(p, cand);
    if (max_kkt(cand.kkt) > cfg_.tol || !dual_signs_ok(cand, cfg_.tol))
      return false;
    cand.objective = p.objective(cand.x);
    cand.polished = true;
    sol = cand;
    // Adopt the polished point as the iterate so a later warm start
    // continues from it.
    xs_ = Dv_.cwiseInverse().asDiagonal() * cand.x;
    ys_ = Ev_.cwiseInverse().asDiagonal() * y_full * cost_scale_;
    return true;
  }

  QpSettings cfg_;
  bool ready_ = false;
  int n_ = 0, me_ = 0, mi_ = 0, nb_ = 0, m_ = 0;
  std::vector<int> box_idx_;
  std::vector<bool> eq_row_;

  SpMat P_, C_;    // original
  Vec q_, l_, u_;  // original
  SpMat Ps_, Cs_;  // equilibrated
  Vec qs_, ls_, us_;
  Vec Dv_, Ev_;
  double cost_scale_ = 1.0;

  Vec rho_;
  double rho_bar_ = 0.1;
  Eigen::SimplicialLDLT<SpMat> kkt_;
  int n_refactor_ = 0;

  Vec xs_, zs_, ys_;  // scaled iterates
  Vec x_unscaled_, z_unscaled_, y_unscaled_;
  bool warm_ = false;
};

inline QpSolution solve_qp(const QpProblem& p, QpSettings settings = {}) {
  AdmmSolver solver(settings);
  return solver.solve(p);
}

// Coordinate-triplet text dump of a problem for external cross-checks.
inline void dump_problem(const QpProblem& p, std::ostream& os) {
  auto mat = [&os](const char* name, const SpMat& m) {
    os << name << ' ' << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros()
       << '\n';
    for (int k = 0; k < m.outerSize(); ++k)
      for (SpMat::InnerIterator it(m, k); it; ++it)
        os << it.row() << ' ' << it.col() << ' ' << format_double(it.value())
           << '\n';
  };
  auto vec = [&os](const char* name, const Vec& v) {
    os << name << ' ' << v.size() << '\n';
    for (int i = 0; i < v.size(); ++i)
      os << i << ' ' << format_double(v(i)) << '\n';
  };
  mat("M", p.M);
  vec("d", p.d);
  mat("A", p.A);
  vec("b", p.b);
  mat("G", p.G);
  vec("h", p.h);
  vec("lb", p.lb);
  vec("ub", p.ub);
}

}  // namespace gridflex
