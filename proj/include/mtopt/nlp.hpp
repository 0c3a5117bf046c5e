#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "mtopt/common.hpp"

namespace mtopt {

/// General nonlinear program
///   min f(x)  s.t.  c_lower <= c(x) <= c_upper,  lower <= x <= upper,
/// with equalities expressed as c_lower == c_upper. Callbacks are fused so a
/// transcription can share work between objective and constraints.
struct NlpProblem {
  int num_vars = 0;
  int num_cons = 0;
  VectorXd x0;
  VectorXd lower, upper;      // variable bounds, +-inf allowed
  VectorXd c_lower, c_upper;  // constraint ranges

  // value-only evaluation: objective and constraint vector
  std::function<void(const VectorXd& x, double& f, VectorXd& c)> eval;
  // full evaluation: adds objective gradient and dense constraint Jacobian
  std::function<void(const VectorXd& x, double& f, VectorXd& c, VectorXd& grad,
                     MatrixXd& jac)>
      eval_derivs;
};

struct NlpOptions {
  double tol_c = 1e-4;          // feasibility tolerance (scaled constraints)
  double tol_stat = 1e-6;       // projected-gradient stationarity target
  double obj_stability = 1e-3;  // relative objective span over the window
  int stability_window = 10;
  int outer_cap = 50;
  int inner_cap = 500;
  double mu0 = 10.0;
  double mu_growth = 10.0;
  double mu_max = 1e8;
  int lbfgs_memory = 12;
  bool verbose = false;
};

struct NlpResult {
  VectorXd x;
  double objective = 0.0;
  double max_violation = 0.0;  // recomputed at the returned point
  int outer_iterations = 0;
  int inner_iterations = 0;
  bool feasible = false;
  bool converged = false;
  double wall_time_s = 0.0;
};

namespace detail {

inline VectorXd clamp_to_box(const VectorXd& x, const VectorXd& lo, const VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

inline double constraint_violation(const VectorXd& c, const VectorXd& lo,
                                   const VectorXd& hi) {
  if (c.size() == 0) return 0.0;
  return (c - c.cwiseMax(lo).cwiseMin(hi)).cwiseAbs().maxCoeff();
}

// Limited-memory BFGS two-loop recursion.
class LbfgsMemory {
 public:
  explicit LbfgsMemory(int capacity) : capacity_(capacity) {}

  void clear() {
    s_.clear();
    y_.clear();
    rho_.clear();
  }

  void push(const VectorXd& s, const VectorXd& y) {
    const double sy = s.dot(y);
    if (sy <= 1e-10 * s.norm() * y.norm()) return;  // skip non-curvature pairs
    s_.push_back(s);
    y_.push_back(y);
    rho_.push_back(1.0 / sy);
    if (static_cast<int>(s_.size()) > capacity_) {
      s_.pop_front();
      y_.pop_front();
      rho_.pop_front();
    }
  }

  VectorXd apply(const VectorXd& g) const {
    VectorXd q = g;
    const int k = static_cast<int>(s_.size());
    std::vector<double> alpha(k);
    for (int i = k - 1; i >= 0; --i) {
      alpha[i] = rho_[i] * s_[i].dot(q);
      q -= alpha[i] * y_[i];
    }
    if (k > 0) {
      const double gamma = s_.back().dot(y_.back()) / y_.back().squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < k; ++i) {
      const double beta = rho_[i] * y_[i].dot(q);
      q += (alpha[i] - beta) * s_[i];
    }
    return q;
  }

 private:
  int capacity_;
  std::deque<VectorXd> s_, y_;
  std::deque<double> rho_;
};

}  // namespace detail

/// Augmented-Lagrangian outer loop with a projected L-BFGS inner minimizer.
/// Terminates on feasibility plus objective stability (relative change below
/// obj_stability across stability_window consecutive outer iterations), on a
/// stationary feasible point, or on the outer iteration cap. Never throws on
/// non-convergence: the best iterate comes back flagged.
inline NlpResult solve_nlp(const NlpProblem& p, const NlpOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();

  const int n = p.num_vars, m = p.num_cons;
  VectorXd x = detail::clamp_to_box(p.x0, p.lower, p.upper);
  VectorXd lambda = VectorXd::Zero(m);
  double mu = opts.mu0;

  // shifted-slack form of the AL for range constraints lo <= c <= up,
  // written as c - z = 0 with slack z in [lo, up]; minimizing over z gives
  //   z* = clamp(c + lambda/mu, c_lo, c_up)
  //   Phi = f + lambda.(c - z*) + mu/2 |c - z*|^2
  //   grad Phi = grad f + J^T (lambda + mu (c - z*))
  // so inactive constraints with decaying multipliers exert no force.
  const auto al_terms = [&](const VectorXd& c, VectorXd& cs) {
    cs = c;
    if (m > 0) {
      const VectorXd shifted = c + lambda / mu;
      cs = c - detail::clamp_to_box(shifted, p.c_lower, p.c_upper);
    }
  };
  const auto phi_of = [&](double f, const VectorXd& c) {
    if (m == 0) return f;
    VectorXd cs;
    al_terms(c, cs);
    return f + lambda.dot(cs) + 0.5 * mu * cs.squaredNorm();
  };

  NlpResult res;
  res.x = x;
  int total_inner = 0;
  double best_infeasible_v = std::numeric_limits<double>::infinity();
  std::deque<double> recent_obj;
  double prev_violation = std::numeric_limits<double>::infinity();
  double omega = 1e-2;  // inner stationarity target, tightened as we go

  double f_val = 0.0;
  VectorXd c_val(m), grad(n);
  MatrixXd jac(m, n);

  for (int outer = 0; outer < opts.outer_cap; ++outer) {
    res.outer_iterations = outer + 1;

    detail::LbfgsMemory mem(opts.lbfgs_memory);
    p.eval_derivs(x, f_val, c_val, grad, jac);
    VectorXd cs;
    al_terms(c_val, cs);
    VectorXd g = grad;
    if (m > 0) g.noalias() += jac.transpose() * (lambda + mu * cs);
    double phi = phi_of(f_val, c_val);

    int inner = 0;
    double pg_norm = 0.0;
    for (; inner < opts.inner_cap; ++inner) {
      pg_norm = (x - detail::clamp_to_box(x - g, p.lower, p.upper)).cwiseAbs().maxCoeff();
      if (pg_norm <= omega) break;

      VectorXd d = -mem.apply(g);
      // freeze directions pushing out of an active bound
      for (int i = 0; i < n; ++i) {
        const bool at_lo = x[i] <= p.lower[i] + 1e-12 && d[i] < 0;
        const bool at_hi = x[i] >= p.upper[i] - 1e-12 && d[i] > 0;
        if (at_lo || at_hi) d[i] = 0.0;
      }
      if (d.dot(g) > -1e-12 * d.norm() * g.norm()) {
        d = -(x - detail::clamp_to_box(x - g, p.lower, p.upper));
      }

      double alpha = 1.0;
      bool accepted = false;
      VectorXd x_new, c_new;
      double f_new = 0.0, phi_new = 0.0;
      for (int ls = 0; ls < 40; ++ls) {
        x_new = detail::clamp_to_box(x + alpha * d, p.lower, p.upper);
        const VectorXd step_vec = x_new - x;
        if (step_vec.cwiseAbs().maxCoeff() < 1e-15) break;
        p.eval(x_new, f_new, c_new);
        phi_new = phi_of(f_new, c_new);
        const double slope = g.dot(step_vec);
        const double required =
            slope < 0 ? phi + 1e-4 * slope : phi - 1e-12 * std::abs(phi);
        if (phi_new <= required) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;

      VectorXd f_grad_new(n);
      MatrixXd jac_new(m, n);
      double f_tmp;
      VectorXd c_tmp(m);
      p.eval_derivs(x_new, f_tmp, c_tmp, f_grad_new, jac_new);
      VectorXd cs_new;
      al_terms(c_tmp, cs_new);
      VectorXd g_new = f_grad_new;
      if (m > 0) g_new.noalias() += jac_new.transpose() * (lambda + mu * cs_new);

      mem.push(x_new - x, g_new - g);
      x = x_new;
      g = g_new;
      f_val = f_tmp;
      c_val = c_tmp;
      phi = phi_of(f_val, c_val);
    }
    total_inner += inner;

    const double v = detail::constraint_violation(c_val, p.c_lower, p.c_upper);

    if (opts.verbose) {
      std::fprintf(stderr, "[al] outer %2d  f=%-12.6g viol=%-10.3g mu=%-8.2g inner=%d\n",
                   outer + 1, f_val, v, mu, inner);
    }

    // track the best iterate in case we never reach feasibility
    if (v < best_infeasible_v) {
      best_infeasible_v = v;
      res.x = x;
      res.objective = f_val;
      res.max_violation = v;
    }

    if (v <= opts.tol_c) {
      res.x = x;
      res.objective = f_val;
      res.max_violation = v;
      recent_obj.push_back(f_val);
      if (static_cast<int>(recent_obj.size()) > opts.stability_window)
        recent_obj.pop_front();

      // stationary feasible point: nothing will move anymore
      const bool stationary = pg_norm <= std::max(opts.tol_stat, omega) && inner == 0;
      bool stable = false;
      if (static_cast<int>(recent_obj.size()) >= opts.stability_window) {
        const double lo = *std::min_element(recent_obj.begin(), recent_obj.end());
        const double hi = *std::max_element(recent_obj.begin(), recent_obj.end());
        stable = (hi - lo) <= opts.obj_stability * std::max(1.0, std::abs(hi));
      }
      if (stationary || stable) {
        res.feasible = true;
        res.converged = true;
        break;
      }
    } else {
      recent_obj.clear();
    }

    // multiplier / penalty update
    if (m > 0) {
      VectorXd cs_cur;
      al_terms(c_val, cs_cur);
      if (v <= std::max(opts.tol_c, 0.25 * prev_violation)) {
        lambda += mu * cs_cur;
        omega = std::max(opts.tol_stat * 0.1, omega * 0.3);
      } else {
        mu = std::min(mu * opts.mu_growth, opts.mu_max);
        omega = std::max(opts.tol_stat, omega * 0.7);
      }
    } else {
      omega = std::max(opts.tol_stat * 0.1, omega * 0.3);
    }
    prev_violation = std::min(prev_violation, v);
  }

  res.inner_iterations = total_inner;
  // recompute the report quantities at the returned point
  {
    double f_chk;
    VectorXd c_chk(m);
    p.eval(res.x, f_chk, c_chk);
    res.objective = f_chk;
    res.max_violation = detail::constraint_violation(c_chk, p.c_lower, p.c_upper);
    res.feasible = res.max_violation <= opts.tol_c;
  }
  res.wall_time_s =
      std::chrono::duration<double>(clock::now() - t_start).count();
  return res;
}

}  // namespace mtopt
