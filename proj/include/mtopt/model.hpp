#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mtopt/chain.hpp"
#include "mtopt/common.hpp"
#include "mtopt/curves.hpp"

namespace mtopt {

/// Moment arm of one muscle about one DOF, as a cubic polynomial in that
/// DOF's coordinate. Musculotendon length is the exact antiderivative, so
/// the moment-arm/length consistency r = -dl/dq holds by construction.
struct MomentArmTerm {
  int dof = 0;
  std::array<double, 4> coeffs{};  // r(q) = c0 + c1 q + c2 q^2 + c3 q^3

  double arm(double qi) const {
    return coeffs[0] + qi * (coeffs[1] + qi * (coeffs[2] + qi * coeffs[3]));
  }
  /// Integral of the arm from 0 to qi (length shortens by this much).
  double excursion(double qi) const {
    return qi * (coeffs[0] + qi * (coeffs[1] / 2 + qi * (coeffs[2] / 3 + qi * coeffs[3] / 4)));
  }
};

struct MuscleTendonUnit {
  std::string name;
  double f_o = 0.0;           // optimal fiber force, N
  double l_o = 0.0;           // optimal fiber length, m
  double tendon_slack = 0.0;  // m
  double alpha_o = 0.0;       // pennation at optimal fiber length, rad
  double l_mt_ref = 0.0;      // musculotendon length at q = 0, m
  std::vector<MomentArmTerm> path;
  CurveParams curves;

  /// Musculotendon length at joint configuration q.
  double musculotendon_length(const Eigen::Ref<const VectorXd>& q) const {
    double l = l_mt_ref;
    for (const auto& t : path) l -= t.excursion(q[t.dof]);
    return l;
  }

  double musculotendon_velocity(const Eigen::Ref<const VectorXd>& q,
                                const Eigen::Ref<const VectorXd>& qd) const {
    double v = 0.0;
    for (const auto& t : path) v -= t.arm(q[t.dof]) * qd[t.dof];
    return v;
  }
};

struct MusculoskeletalModel {
  ArticulatedChain skeleton;
  std::vector<MuscleTendonUnit> muscles;
  std::vector<int> actuated_dofs;  // DOFs driven by the muscle set, in torque order

  int muscle_count() const { return static_cast<int>(muscles.size()); }
  int actuated_count() const { return static_cast<int>(actuated_dofs.size()); }
  int state_dofs() const { return skeleton.dof_count(); }

  /// Energy-rate weights: one unit of activation of muscle j costs f_o[j].
  VectorXd effort_weights() const {
    VectorXd w(muscle_count());
    for (int j = 0; j < muscle_count(); ++j) w[j] = muscles[j].f_o;
    return w;
  }
};

/// Rigid-tendon fiber state: normalized length, normalized velocity, and
/// pennation cosine. Constant-height pennation model: the fiber keeps a
/// transverse thickness of l_o sin(alpha_o) while its projection on the
/// tendon line spans l_mt - tendon_slack.
struct FiberGeometry {
  double l_norm = 0.0;
  double v_norm = 0.0;
  double cos_alpha = 1.0;
};

inline FiberGeometry fiber_geometry(const MuscleTendonUnit& mtu, const JointState& s) {
  const double lmt = mtu.musculotendon_length(s.q);
  const double span = lmt - mtu.tendon_slack;
  if (!(span > 0.0))
    throw DegenerateGeometryError(mtu.name);
  const double h = mtu.l_o * std::sin(mtu.alpha_o);
  const double fiber = std::sqrt(span * span + h * h);
  const double cos_a = span / fiber;
  const double fiber_vel = mtu.musculotendon_velocity(s.q, s.qd) * cos_a;
  return {fiber / mtu.l_o, fiber_vel / (mtu.l_o * mtu.curves.max_contraction_velocity),
          cos_a};
}

/// W[i, j]: moment arm of muscle j about actuated DOF i at configuration q.
inline MatrixXd moment_arm_matrix(const MusculoskeletalModel& model,
                                  const Eigen::Ref<const VectorXd>& q) {
  MatrixXd W = MatrixXd::Zero(model.actuated_count(), model.muscle_count());
  for (int j = 0; j < model.muscle_count(); ++j) {
    for (const auto& t : model.muscles[j].path) {
      for (int i = 0; i < model.actuated_count(); ++i) {
        if (model.actuated_dofs[i] == t.dof) W(i, j) = t.arm(q[t.dof]);
      }
    }
  }
  return W;
}

/// State-dependent affine torque map: tau = gain * a + passive reproduces the
/// muscle dynamics exactly for every activation at the state it was built.
struct AffineTorqueMap {
  MatrixXd gain;     // n_act x n_m
  VectorXd passive;  // n_act

  VectorXd apply(const Eigen::Ref<const VectorXd>& a) const {
    return gain * a + passive;
  }
  int torque_dim() const { return static_cast<int>(passive.size()); }
  int muscle_dim() const { return static_cast<int>(gain.cols()); }
};

inline AffineTorqueMap torque_affine_map(const MusculoskeletalModel& model,
                                         const JointState& s) {
  const int nq = model.actuated_count();
  const int nm = model.muscle_count();
  AffineTorqueMap map;
  map.gain = MatrixXd::Zero(nq, nm);
  map.passive = VectorXd::Zero(nq);
  for (int j = 0; j < nm; ++j) {
    const auto& mtu = model.muscles[j];
    const auto fg = fiber_geometry(mtu, s);
    const double active_gain =
        mtu.f_o * mtu.curves.active_force_length(fg.l_norm) *
        mtu.curves.force_velocity(fg.v_norm) * fg.cos_alpha;
    const double passive_force =
        mtu.f_o * mtu.curves.passive_force(fg.l_norm) * fg.cos_alpha;
    for (const auto& t : mtu.path) {
      for (int i = 0; i < nq; ++i) {
        if (model.actuated_dofs[i] != t.dof) continue;
        const double r = t.arm(s.q[t.dof]);
        map.gain(i, j) += r * active_gain;
        map.passive[i] += r * passive_force;
      }
    }
  }
  return map;
}

/// tau = D(a, q, qd): torque on the actuated DOFs produced by activation a.
inline VectorXd muscle_dynamics(const MusculoskeletalModel& model,
                                const Eigen::Ref<const VectorXd>& a,
                                const JointState& s) {
  if (a.size() != model.muscle_count())
    throw Error("muscle_dynamics: activation dimension mismatch");
  if ((a.array() < -1e-12).any() || (a.array() > 1.0 + 1e-12).any())
    throw Error("muscle_dynamics: activations must lie in [0, 1]");
  return torque_affine_map(model, s).apply(a);
}

}  // namespace mtopt
