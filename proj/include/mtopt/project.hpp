#pragma once

#include <functional>

#include <Eigen/Core>

#include "mtopt/chain.hpp"
#include "mtopt/redundancy.hpp"

namespace mtopt {

/// A correction function: maps (state, proposed torque) to the displacement
/// taking the torque into the feasible set. Satisfied by the exact solver
/// and by trained surrogates alike.
using CorrectionFn =
    std::function<VectorXd(const JointState&, const Eigen::Ref<const VectorXd>&)>;

inline CorrectionFn exact_correction_fn(const MusculoskeletalModel& model) {
  return [&model](const JointState& s, const Eigen::Ref<const VectorXd>& tau) {
    return correction(model, s, tau).delta_tau;
  };
}

struct ProjectionResult {
  VectorXd tau;                 // clipped torque, tau_p - R(state, tau_p)
  double correction_norm = 0.0;  // ||R||_2, the reward-shaping penalty term
};

/// Clip a proposed torque onto the feasible set: tau_p - R(q, qd, tau_p).
inline ProjectionResult project_torque(const CorrectionFn& correction_fn,
                                       const JointState& s,
                                       const Eigen::Ref<const VectorXd>& tau_proposed) {
  if (!all_finite(tau_proposed))
    throw Error("project_torque: proposed torque must be finite");
  const VectorXd delta = correction_fn(s, tau_proposed);
  return {tau_proposed - delta, delta.norm()};
}

}  // namespace mtopt
