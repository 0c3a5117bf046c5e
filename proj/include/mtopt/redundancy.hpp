#pragma once

#include <optional>

#include <Eigen/Core>

#include "mtopt/bvls.hpp"
#include "mtopt/model.hpp"
#include "mtopt/simplex.hpp"

namespace mtopt {

/// A proposed torque counts as feasible when its correction norm falls below
/// this cutoff (N m). Chosen so the downstream +-3 Nm relaxation dominates
/// solver noise by several orders of magnitude.
inline constexpr double kFeasibilityCutoff = 1e-5;

struct CorrectionResult {
  VectorXd delta_tau;   // displacement onto the feasible set; zero iff feasible
  VectorXd activation;  // witness achieving tau - delta_tau
  double kkt_residual = 0.0;
};

/// L2-closest feasible displacement at a fixed state, computed on a
/// prebuilt affine torque map. The witness activation realizes tau - delta
/// exactly (up to round-off) by construction.
inline CorrectionResult correction(const AffineTorqueMap& map,
                                   const Eigen::Ref<const VectorXd>& tau) {
  const int nm = map.muscle_dim();
  const auto r = solve_bvls(map.gain, tau - map.passive, VectorXd::Zero(nm),
                            VectorXd::Ones(nm));
  CorrectionResult out;
  out.activation = r.x;
  out.delta_tau = tau - map.passive - map.gain * r.x;
  out.kkt_residual = r.kkt_residual;
  return out;
}

inline CorrectionResult correction(const MusculoskeletalModel& model,
                                   const JointState& s,
                                   const Eigen::Ref<const VectorXd>& tau) {
  return correction(torque_affine_map(model, s), tau);
}

/// Feasibility indicator: -1 when tau lies in the feasible torque set
/// {G a + p : 0 <= a <= 1}, +1 otherwise.
inline int feasibility(const AffineTorqueMap& map,
                       const Eigen::Ref<const VectorXd>& tau) {
  return correction(map, tau).delta_tau.norm() <= kFeasibilityCutoff ? -1 : +1;
}

inline int feasibility(const MusculoskeletalModel& model, const JointState& s,
                       const Eigen::Ref<const VectorXd>& tau) {
  return feasibility(torque_affine_map(model, s), tau);
}

struct EnergyResult {
  double value = 0.0;       // minimal weighted activation sum
  VectorXd activation;      // an argmin (vertex reported by the solver)
  VectorXd dual_certificate;  // multiplier per torque equality row
};

/// Minimal effort rate realizing tau at a fixed state: a bounded-variable
/// linear program over the activation box. Throws InfeasibleError with the
/// phase-one residual when tau lies outside the feasible set.
inline EnergyResult energy(const AffineTorqueMap& map, const VectorXd& weights,
                           const Eigen::Ref<const VectorXd>& tau) {
  const int nm = map.muscle_dim();
  const auto lp = solve_bounded_lp(weights, map.gain, tau - map.passive,
                                   VectorXd::Zero(nm), VectorXd::Ones(nm));
  if (!lp.feasible)
    throw InfeasibleError("energy: requested torque is infeasible (phase-one residual " +
                              std::to_string(lp.phase1_residual) + " N m)",
                          lp.phase1_residual);
  return {lp.objective, lp.x, lp.duals};
}

inline EnergyResult energy(const MusculoskeletalModel& model, const JointState& s,
                           const Eigen::Ref<const VectorXd>& tau) {
  return energy(torque_affine_map(model, s), model.effort_weights(), tau);
}

/// Minimal effort with only a subset of torque rows pinned; rows with no
/// requested value are left unconstrained. Used by the pose-sweep reports.
inline std::optional<EnergyResult> energy_for_rows(
    const AffineTorqueMap& map, const VectorXd& weights,
    const std::vector<std::pair<int, double>>& requested) {
  const int nm = map.muscle_dim();
  MatrixXd A(requested.size(), nm);
  VectorXd b(requested.size());
  for (size_t i = 0; i < requested.size(); ++i) {
    A.row(i) = map.gain.row(requested[i].first);
    b[i] = requested[i].second - map.passive[requested[i].first];
  }
  const auto lp =
      solve_bounded_lp(weights, A, b, VectorXd::Zero(nm), VectorXd::Ones(nm));
  if (!lp.feasible) return std::nullopt;
  return EnergyResult{lp.objective, lp.x, lp.duals};
}

/// The augmented energy: E itself on the feasible set, otherwise the energy
/// of the projected torque plus a norm penalty on the correction.
inline double augmented_energy(const AffineTorqueMap& map, const VectorXd& weights,
                               const Eigen::Ref<const VectorXd>& tau,
                               double w_penalty) {
  if (!(w_penalty > 0)) throw Error("augmented_energy: penalty weight must be positive");
  const auto corr = correction(map, tau);
  const double dist = corr.delta_tau.norm();
  if (dist <= kFeasibilityCutoff) {
    // evaluate at the projected point so torques that graze the boundary by
    // less than the feasibility cutoff never trip the LP's tighter tolerance
    return energy(map, weights, tau - corr.delta_tau).value;
  }
  const VectorXd projected = tau - corr.delta_tau;
  return energy(map, weights, projected).value + w_penalty * dist;
}

inline double augmented_energy(const MusculoskeletalModel& model, const JointState& s,
                               const Eigen::Ref<const VectorXd>& tau,
                               double w_penalty) {
  return augmented_energy(torque_affine_map(model, s), model.effort_weights(), tau,
                          w_penalty);
}

enum class LimitDirection { Max, Min };

/// Extreme achievable torque on one actuated DOF, other DOFs unconstrained.
/// The box LP separates per muscle, so the optimum is closed-form.
inline double torque_limit_bound(const AffineTorqueMap& map, int dof,
                                 LimitDirection dir) {
  if (dof < 0 || dof >= map.torque_dim())
    throw Error("torque_limit_bound: DOF index out of range");
  double v = map.passive[dof];
  for (int j = 0; j < map.muscle_dim(); ++j) {
    const double g = map.gain(dof, j);
    v += dir == LimitDirection::Max ? std::max(g, 0.0) : std::min(g, 0.0);
  }
  return v;
}

inline double torque_limit_bound(const MusculoskeletalModel& model, const JointState& s,
                                 int dof, LimitDirection dir) {
  return torque_limit_bound(torque_affine_map(model, s), dof, dir);
}

struct GridOracleResult {
  bool feasible = false;
  double min_correction_norm = 0.0;
  double min_energy = std::numeric_limits<double>::infinity();
  double resolution = 0.0;
};

/// Exhaustive activation-grid enumeration, the independent reference the
/// optimizing solvers are audited against. Limited to three muscles.
/// min_correction_norm is the global minimum of ||G a + p - tau||_2 over the
/// grid. A grid point counts as realizing tau when each torque row lands
/// within half a grid step of its row scale (|row residual| <=
/// resolution * row_sum(|G|) / 2), which is exactly the slack introduced by
/// rounding an activation vector to the grid; min_energy and the feasibility
/// flag are taken over those points.
inline GridOracleResult grid_oracle(const AffineTorqueMap& map, const VectorXd& weights,
                                    const Eigen::Ref<const VectorXd>& tau,
                                    double resolution) {
  const int nm = map.muscle_dim();
  if (nm > 3) throw Error("grid_oracle: unsupported size, at most 3 muscles");
  if (!(resolution >= 1e-3 && resolution <= 0.1))
    throw Error("grid_oracle: resolution must lie in [1e-3, 0.1]");

  const int steps = static_cast<int>(std::lround(1.0 / resolution));
  const VectorXd row_accept =
      0.5 * resolution * map.gain.cwiseAbs().rowwise().sum() +
      VectorXd::Constant(map.torque_dim(), 1e-12);

  GridOracleResult out;
  out.resolution = resolution;
  out.min_correction_norm = std::numeric_limits<double>::infinity();

  const int n0 = steps, n1 = nm > 1 ? steps : 0, n2 = nm > 2 ? steps : 0;
  const VectorXd base = map.passive - tau;
  for (int i0 = 0; i0 <= n0; ++i0) {
    const double a0 = static_cast<double>(i0) / steps;
    const VectorXd t0 = base + map.gain.col(0) * a0;
    const double e0 = weights[0] * a0;
    for (int i1 = 0; i1 <= n1; ++i1) {
      const double a1 = static_cast<double>(i1) / steps;
      const VectorXd t1 = nm > 1 ? VectorXd(t0 + map.gain.col(1) * a1) : t0;
      const double e1 = nm > 1 ? e0 + weights[1] * a1 : e0;
      for (int i2 = 0; i2 <= n2; ++i2) {
        const double a2 = static_cast<double>(i2) / steps;
        const VectorXd t2 = nm > 2 ? VectorXd(t1 + map.gain.col(2) * a2) : t1;
        const double e2 = nm > 2 ? e1 + weights[2] * a2 : e1;
        out.min_correction_norm = std::min(out.min_correction_norm, t2.norm());
        if ((t2.cwiseAbs().array() <= row_accept.array()).all()) {
          out.feasible = true;
          out.min_energy = std::min(out.min_energy, e2);
        }
      }
    }
  }
  return out;
}

inline GridOracleResult grid_oracle(const MusculoskeletalModel& model,
                                    const JointState& s,
                                    const Eigen::Ref<const VectorXd>& tau,
                                    double resolution) {
  return grid_oracle(torque_affine_map(model, s), model.effort_weights(), tau,
                     resolution);
}

}  // namespace mtopt
