#pragma once

#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "mtopt/common.hpp"

namespace mtopt {

struct LpOptions {
  int max_iterations = 10000;
  double feas_tol = 1e-7;    // phase-one optimum below which the LP counts as feasible
  double cost_tol_rel = 1e-10;
  double pivot_tol = 1e-11;
};

struct LpResult {
  bool feasible = false;
  VectorXd x;          // structural variables only
  double objective = 0.0;
  VectorXd duals;      // one multiplier per equality row
  double phase1_residual = 0.0;
  int iterations = 0;
};

/// Two-phase primal simplex with variable bounds and Bland's rule:
/// minimize c.x subject to A x = b, lb <= x <= ub (all bounds finite).
/// Artificial variables carry phase one; their optimum is returned as the
/// infeasibility residual.
inline LpResult solve_bounded_lp(const VectorXd& cost, const MatrixXd& A,
                                 const VectorXd& b, const VectorXd& lb,
                                 const VectorXd& ub, const LpOptions& opts = {}) {
  const int n = static_cast<int>(A.cols());
  const int m = static_cast<int>(A.rows());
  const int N = n + m;  // structural + artificial
  const double inf = std::numeric_limits<double>::infinity();

  for (int j = 0; j < n; ++j)
    if (!std::isfinite(lb[j]) || !std::isfinite(ub[j]) || lb[j] > ub[j])
      throw Error("solve_bounded_lp: structural bounds must be finite with lb <= ub");

  VectorXd xlb(N), xub(N), x(N);
  xlb.head(n) = lb;
  xub.head(n) = ub;
  x.head(n) = lb;  // start structurals at their lower bounds

  VectorXd resid = b - A * x.head(n);
  VectorXd art_sign(m);
  for (int i = 0; i < m; ++i) {
    art_sign[i] = resid[i] >= 0 ? 1.0 : -1.0;
    x[n + i] = std::abs(resid[i]);
    xlb[n + i] = 0.0;
    xub[n + i] = inf;
  }

  const auto column = [&](int j) -> VectorXd {
    if (j < n) return A.col(j);
    VectorXd e = VectorXd::Zero(m);
    e[j - n] = art_sign[j - n];
    return e;
  };

  std::vector<int> basis(m);
  std::vector<int> state(N, -1);  // -1 at lower, +1 at upper, 0 basic
  for (int i = 0; i < m; ++i) {
    basis[i] = n + i;
    state[n + i] = 0;
  }

  LpResult out;
  int total_iters = 0;
  VectorXd duals = VectorXd::Zero(m);

  const auto run_phase = [&](const VectorXd& c, int phase) -> bool {
    const double cost_tol = opts.cost_tol_rel * std::max(1.0, c.cwiseAbs().maxCoeff());
    while (true) {
      if (++total_iters > opts.max_iterations)
        throw SolverError("solve_bounded_lp: iteration cap exceeded (phase " +
                          std::to_string(phase) + ")");
      MatrixXd B(m, m);
      for (int i = 0; i < m; ++i) B.col(i) = column(basis[i]);
      Eigen::PartialPivLU<MatrixXd> lu(B);
      VectorXd cb(m);
      for (int i = 0; i < m; ++i) cb[i] = c[basis[i]];
      duals = lu.transpose().solve(cb);

      // Bland: smallest-index eligible entering variable
      int enter = -1;
      double dir = 0.0;
      for (int j = 0; j < N; ++j) {
        if (state[j] == 0) continue;
        if (xub[j] - xlb[j] <= 0) continue;  // fixed
        const double dj = c[j] - duals.dot(column(j));
        if (state[j] == -1 && dj < -cost_tol) {
          enter = j;
          dir = 1.0;
          break;
        }
        if (state[j] == +1 && dj > cost_tol) {
          enter = j;
          dir = -1.0;
          break;
        }
      }
      if (enter < 0) return true;  // optimal for this phase

      const VectorXd u = lu.solve(column(enter));
      // x_basis(t) = x_basis - dir * t * u, entering moves by dir * t
      const double t_flip = xub[enter] - xlb[enter];
      VectorXd bound_t = VectorXd::Constant(m, inf);
      for (int i = 0; i < m; ++i) {
        const int k = basis[i];
        const double rate = dir * u[i];
        if (rate > opts.pivot_tol) {
          bound_t[i] = std::max(0.0, (x[k] - xlb[k]) / rate);
        } else if (rate < -opts.pivot_tol && std::isfinite(xub[k])) {
          bound_t[i] = std::max(0.0, (xub[k] - x[k]) / (-rate));
        }
      }
      double t_max = std::min(t_flip, bound_t.minCoeff());
      if (!std::isfinite(t_max))
        throw SolverError("solve_bounded_lp: unbounded direction encountered");
      int leave_pos = -1;
      if (bound_t.minCoeff() <= t_flip) {
        // Bland tie-break: among blocking rows, smallest variable index leaves
        const double cutoff = t_max + 1e-12 * std::max(1.0, t_max);
        for (int i = 0; i < m; ++i)
          if (bound_t[i] <= cutoff &&
              (leave_pos < 0 || basis[i] < basis[leave_pos]))
            leave_pos = i;
        t_max = bound_t[leave_pos];
      }

      for (int i = 0; i < m; ++i) x[basis[i]] -= dir * t_max * u[i];
      x[enter] += dir * t_max;

      if (leave_pos < 0) {
        // entering variable flipped to its opposite bound
        state[enter] = (dir > 0) ? +1 : -1;
        x[enter] = (dir > 0) ? xub[enter] : xlb[enter];
      } else {
        const int k = basis[leave_pos];
        const double rate = dir * u[leave_pos];
        if (rate > 0) {
          x[k] = xlb[k];
          state[k] = -1;
        } else {
          x[k] = xub[k];
          state[k] = +1;
        }
        basis[leave_pos] = enter;
        state[enter] = 0;
      }
    }
  };

  // phase one: minimize the artificial sum
  VectorXd c1 = VectorXd::Zero(N);
  c1.tail(m).setOnes();
  run_phase(c1, 1);
  double phase1 = x.tail(m).sum();
  out.phase1_residual = std::max(0.0, phase1);
  if (phase1 > opts.feas_tol) {
    out.feasible = false;
    out.iterations = total_iters;
    out.x = x.head(n);
    return out;
  }

  // pin artificials at zero and optimize the real cost
  for (int i = 0; i < m; ++i) {
    xub[n + i] = 0.0;
    x[n + i] = 0.0;
  }
  VectorXd c2 = VectorXd::Zero(N);
  c2.head(n) = cost;
  run_phase(c2, 2);

  out.feasible = true;
  out.x = x.head(n);
  out.objective = cost.dot(out.x);
  out.duals = duals;
  out.iterations = total_iters;
  return out;
}

}  // namespace mtopt
