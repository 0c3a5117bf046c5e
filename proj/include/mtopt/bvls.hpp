#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "mtopt/common.hpp"

namespace mtopt {

struct BvlsOptions {
  int max_iterations = 10000;
  double kkt_tol_rel = 1e-12;  // relative to max(1, ||A^T b||_inf)
};

struct BvlsResult {
  VectorXd x;
  double kkt_residual = 0.0;  // absolute KKT violation at the returned point
  int iterations = 0;
};

/// Bounded-variable least squares: minimize ||b - A x||_2 over lb <= x <= ub.
/// Active-set method in the style of Stark & Parker: grow a free set by the
/// most violated bound, solve the unconstrained subproblem on it, and clip
/// back variables that cross their bounds.
inline BvlsResult solve_bvls(const MatrixXd& A, const VectorXd& b,
                             const VectorXd& lb, const VectorXd& ub,
                             const BvlsOptions& opts = {}) {
  const int n = static_cast<int>(A.cols());
  enum State : int { kLower = -1, kFree = 0, kUpper = 1 };
  std::vector<State> state(n, kLower);
  VectorXd x = lb;
  for (int j = 0; j < n; ++j)
    if (!std::isfinite(lb[j])) throw Error("solve_bvls: bounds must be finite");

  const double scale = std::max(1.0, (A.transpose() * b).cwiseAbs().maxCoeff());
  const double tol = opts.kkt_tol_rel * scale;

  std::vector<bool> banned(n, false);  // anti-cycling: cleared on objective progress
  double best_obj = std::numeric_limits<double>::infinity();
  BvlsResult res;

  const auto kkt = [&](const VectorXd& w, int j) -> double {
    if (state[j] == kFree) return std::abs(w[j]);
    if (state[j] == kLower) return std::max(0.0, w[j]);
    return std::max(0.0, -w[j]);
  };

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    res.iterations = iter;
    VectorXd r = b - A * x;
    VectorXd w = A.transpose() * r;  // negative gradient of 0.5||r||^2

    const double obj = 0.5 * r.squaredNorm();
    if (obj < best_obj - tol * 1e-3) {
      best_obj = obj;
      std::fill(banned.begin(), banned.end(), false);
    }

    int enter = -1;
    double worst = tol;
    for (int j = 0; j < n; ++j) {
      if (state[j] == kFree || banned[j]) continue;
      if (ub[j] - lb[j] <= 0) continue;  // fixed variable
      const double v = kkt(w, j);
      if (v > worst) {
        worst = v;
        enter = j;
      }
    }
    if (enter < 0) {
      double resid = 0.0;
      for (int j = 0; j < n; ++j) resid = std::max(resid, kkt(w, j));
      res.kkt_residual = resid;
      res.x = x;
      return res;
    }
    const State entered_from = state[enter];
    state[enter] = kFree;

    // Re-solve on the free set, clipping crossers until the subproblem
    // solution is interior.
    for (int pass = 0; pass < n + 1; ++pass) {
      std::vector<int> free;
      for (int j = 0; j < n; ++j)
        if (state[j] == kFree) free.push_back(j);
      if (free.empty()) break;

      VectorXd rhs = b;
      for (int j = 0; j < n; ++j)
        if (state[j] != kFree) rhs -= A.col(j) * x[j];
      MatrixXd Af(A.rows(), free.size());
      for (size_t c = 0; c < free.size(); ++c) Af.col(c) = A.col(free[c]);
      const VectorXd z = Af.colPivHouseholderQr().solve(rhs);

      bool interior = true;
      double alpha = 1.0;
      for (size_t c = 0; c < free.size(); ++c) {
        const int j = free[c];
        if (z[c] < lb[j] || z[c] > ub[j]) {
          interior = false;
          const double target = z[c] < lb[j] ? lb[j] : ub[j];
          const double denom = z[c] - x[j];
          if (std::abs(denom) > 0)
            alpha = std::min(alpha, (target - x[j]) / denom);
        }
      }
      if (interior) {
        for (size_t c = 0; c < free.size(); ++c) x[free[c]] = z[c];
        break;
      }
      alpha = std::max(0.0, std::min(1.0, alpha));
      if (alpha == 0.0 && state[enter] == kFree && free.size() == 1 &&
          free[0] == enter) {
        // the freshly freed variable wants to cross straight back: rounding
        // artifact; re-bind and ban it until progress
        state[enter] = entered_from;
        banned[enter] = true;
        break;
      }
      for (size_t c = 0; c < free.size(); ++c) {
        const int j = free[c];
        x[j] += alpha * (z[c] - x[j]);
        if (z[c] <= lb[j] && x[j] <= lb[j] + 1e-14 * std::max(1.0, std::abs(lb[j]))) {
          x[j] = lb[j];
          state[j] = kLower;
        } else if (z[c] >= ub[j] &&
                   x[j] >= ub[j] - 1e-14 * std::max(1.0, std::abs(ub[j]))) {
          x[j] = ub[j];
          state[j] = kUpper;
        }
      }
    }
  }
  throw SolverError("solve_bvls: iteration cap exceeded without convergence",
                    res.kkt_residual);
}

}  // namespace mtopt
