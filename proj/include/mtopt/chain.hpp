#pragma once

#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "mtopt/common.hpp"

namespace mtopt {

struct RigidLink {
  double mass = 0.0;        // kg
  double com_offset = 0.0;  // m, along the link axis from the proximal joint
  double inertia = 0.0;     // kg m^2, about the COM
  double length = 0.0;      // m
};

enum class BaseType { Pinned, Floating2d };

/// Planar serial chain of revolute joints. Angles are measured
/// counterclockwise, with q = 0 pointing straight down; gravity acts along -y.
/// A floating base prepends two translational DOFs (base point x, y) before
/// the first revolute coordinate.
struct ArticulatedChain {
  std::vector<RigidLink> links;
  BaseType base = BaseType::Pinned;
  double gravity = 9.8;              // m/s^2, magnitude
  std::vector<int> actuated_dofs;    // DOF indices receiving direct torque
  VectorXd passive_damping;          // per DOF, N m s / rad; empty means zero

  int link_count() const { return static_cast<int>(links.size()); }
  int base_dofs() const { return base == BaseType::Floating2d ? 2 : 0; }
  int dof_count() const { return base_dofs() + link_count(); }

  double damping(int dof) const {
    return passive_damping.size() > dof ? passive_damping[dof] : 0.0;
  }

  std::vector<std::string> validation_errors() const {
    std::vector<std::string> errs;
    if (links.empty()) errs.push_back("chain must have at least one link");
    for (size_t k = 0; k < links.size(); ++k) {
      const auto& L = links[k];
      const std::string id = "link " + std::to_string(k);
      if (!(L.mass > 0)) errs.push_back(id + ": mass must be positive");
      if (L.inertia < 0) errs.push_back(id + ": inertia must be non-negative");
      if (!(L.length > 0)) errs.push_back(id + ": length must be positive");
      if (L.com_offset < 0 || L.com_offset > L.length)
        errs.push_back(id + ": com_offset must lie within [0, length]");
    }
    for (int d : actuated_dofs)
      if (d < 0 || d >= dof_count())
        errs.push_back("actuated DOF " + std::to_string(d) + " out of range");
    if (passive_damping.size() != 0 && passive_damping.size() != dof_count())
      errs.push_back("passive_damping length must match DOF count");
    return errs;
  }
};

struct JointState {
  VectorXd q;   // rad (plus m for floating base coordinates)
  VectorXd qd;  // rad/s

  JointState() = default;
  JointState(VectorXd q_in, VectorXd qd_in) : q(std::move(q_in)), qd(std::move(qd_in)) {}
  static JointState zero(int n) { return {VectorXd::Zero(n), VectorXd::Zero(n)}; }
};

struct SimState {
  JointState state;
  double time = 0.0;
};

namespace detail {

// Per-link COM kinematics of the chain at q: positions, 2xN velocity
// Jacobians, angular-velocity selector rows, and the q-dd-free acceleration
// bias J'(q) qd. Everything downstream (M, coriolis, gravity, COM state)
// is assembled from these.
struct LinkKinematics {
  std::vector<Eigen::Vector2d> com;     // COM position per link
  std::vector<Eigen::Matrix2Xd> jac;    // d(com)/dq per link
  std::vector<Eigen::Vector2d> bias;    // d/dt(jac) * qd per link
  std::vector<double> phi;              // absolute link angle
  std::vector<double> phidot;
  int first_rev = 0;
};

inline LinkKinematics link_kinematics(const ArticulatedChain& chain,
                                      const Eigen::Ref<const VectorXd>& q,
                                      const Eigen::Ref<const VectorXd>& qd) {
  const int n = chain.dof_count();
  const int nl = chain.link_count();
  const int rev0 = chain.base_dofs();
  LinkKinematics K;
  K.first_rev = rev0;
  K.com.resize(nl);
  K.jac.assign(nl, Eigen::Matrix2Xd::Zero(2, n));
  K.bias.assign(nl, Eigen::Vector2d::Zero());
  K.phi.resize(nl);
  K.phidot.resize(nl);

  Eigen::Vector2d base = Eigen::Vector2d::Zero();
  if (rev0 == 2) base << q[0], q[1];

  // u(phi) = (sin, -cos): unit vector along the link; u' = (cos, sin); u'' = -u.
  double phi = 0.0, phidot = 0.0;
  Eigen::Vector2d joint = base;                       // proximal joint of link k
  Eigen::Matrix2Xd joint_jac = Eigen::Matrix2Xd::Zero(2, n);
  if (rev0 == 2) joint_jac.leftCols<2>().setIdentity();
  Eigen::Vector2d joint_bias = Eigen::Vector2d::Zero();

  for (int k = 0; k < nl; ++k) {
    phi += q[rev0 + k];
    phidot += qd[rev0 + k];
    K.phi[k] = phi;
    K.phidot[k] = phidot;
    const Eigen::Vector2d u(std::sin(phi), -std::cos(phi));
    const Eigen::Vector2d up(std::cos(phi), std::sin(phi));
    const double c = chain.links[k].com_offset;

    K.com[k] = joint + c * u;
    K.jac[k] = joint_jac;
    for (int j = 0; j <= k; ++j) K.jac[k].col(rev0 + j) += c * up;
    K.bias[k] = joint_bias - c * phidot * phidot * u;

    const double L = chain.links[k].length;
    joint += L * u;
    for (int j = 0; j <= k; ++j) joint_jac.col(rev0 + j) += L * up;
    joint_bias += -L * phidot * phidot * u;
  }
  return K;
}

}  // namespace detail

inline MatrixXd mass_matrix(const ArticulatedChain& chain,
                            const Eigen::Ref<const VectorXd>& q) {
  const int n = chain.dof_count();
  const auto K = detail::link_kinematics(chain, q, VectorXd::Zero(n));
  MatrixXd M = MatrixXd::Zero(n, n);
  for (int k = 0; k < chain.link_count(); ++k) {
    const auto& L = chain.links[k];
    M.noalias() += L.mass * K.jac[k].transpose() * K.jac[k];
    // angular part: omega_k = sum of revolute rates up to k
    const int rev0 = chain.base_dofs();
    for (int i = 0; i <= k; ++i)
      for (int j = 0; j <= k; ++j) M(rev0 + i, rev0 + j) += L.inertia;
  }
  return M;
}

/// Generalized gravity force, on the right-hand side of
/// M qdd + c(q, qd) = tau + g(q).
inline VectorXd gravity_force(const ArticulatedChain& chain,
                              const Eigen::Ref<const VectorXd>& q) {
  const int n = chain.dof_count();
  const auto K = detail::link_kinematics(chain, q, VectorXd::Zero(n));
  VectorXd g = VectorXd::Zero(n);
  for (int k = 0; k < chain.link_count(); ++k)
    g.noalias() -= chain.links[k].mass * chain.gravity * K.jac[k].row(1).transpose();
  return g;
}

/// Velocity-product (Coriolis/centrifugal) generalized force c(q, qd).
inline VectorXd coriolis_force(const ArticulatedChain& chain,
                               const Eigen::Ref<const VectorXd>& q,
                               const Eigen::Ref<const VectorXd>& qd) {
  const auto K = detail::link_kinematics(chain, q, qd);
  VectorXd c = VectorXd::Zero(chain.dof_count());
  for (int k = 0; k < chain.link_count(); ++k)
    c.noalias() += chain.links[k].mass * (K.jac[k].transpose() * K.bias[k]);
  return c;
}

/// Mass matrix, bias forces, and COM row data evaluated once at a state so
/// that qdd and COM acceleration become affine functions of the applied
/// generalized force.
struct DynamicsEval {
  MatrixXd mass;
  Eigen::LLT<MatrixXd> mass_factor;
  VectorXd rhs_bias;        // g(q) - c(q, qd) - damping .* qd
  Eigen::RowVectorXd com_y_jac;  // d(com_y)/dq
  double com_y_bias = 0.0;       // qdd-free part of com_y acceleration
  double total_mass = 0.0;

  VectorXd qdd(const Eigen::Ref<const VectorXd>& tau_full) const {
    return mass_factor.solve(tau_full + rhs_bias);
  }
  double com_y_accel(const Eigen::Ref<const VectorXd>& qdd_val) const {
    return com_y_jac.dot(qdd_val) + com_y_bias;
  }
};

inline DynamicsEval eval_dynamics(const ArticulatedChain& chain, const JointState& s) {
  const int n = chain.dof_count();
  if (s.q.size() != n || s.qd.size() != n)
    throw Error("eval_dynamics: state dimension mismatch");
  const auto K = detail::link_kinematics(chain, s.q, s.qd);
  DynamicsEval ev;
  ev.mass = MatrixXd::Zero(n, n);
  VectorXd grav = VectorXd::Zero(n);
  VectorXd cori = VectorXd::Zero(n);
  ev.com_y_jac = Eigen::RowVectorXd::Zero(n);
  double m_tot = 0.0, com_y_bias = 0.0;
  const int rev0 = chain.base_dofs();
  for (int k = 0; k < chain.link_count(); ++k) {
    const auto& L = chain.links[k];
    ev.mass.noalias() += L.mass * K.jac[k].transpose() * K.jac[k];
    for (int i = 0; i <= k; ++i)
      for (int j = 0; j <= k; ++j) ev.mass(rev0 + i, rev0 + j) += L.inertia;
    grav.noalias() -= L.mass * chain.gravity * K.jac[k].row(1).transpose();
    cori.noalias() += L.mass * (K.jac[k].transpose() * K.bias[k]);
    ev.com_y_jac += L.mass * K.jac[k].row(1);
    com_y_bias += L.mass * K.bias[k][1];
    m_tot += L.mass;
  }
  ev.total_mass = m_tot;
  ev.com_y_jac /= m_tot;
  ev.com_y_bias = com_y_bias / m_tot;
  VectorXd damp = VectorXd::Zero(n);
  for (int d = 0; d < n; ++d) damp[d] = chain.damping(d) * s.qd[d];
  ev.rhs_bias = grav - cori - damp;
  ev.mass_factor.compute(ev.mass);
  if (ev.mass_factor.info() != Eigen::Success)
    throw SolverError("mass matrix factorization failed (chain is singular)");
  return ev;
}

/// qdd = M^{-1} (tau_full + g(q) - c(q, qd) - damping .* qd).
inline VectorXd forward_dynamics(const ArticulatedChain& chain,
                                 const Eigen::Ref<const VectorXd>& tau_full,
                                 const JointState& s) {
  return eval_dynamics(chain, s).qdd(tau_full);
}

/// One classical RK4 step at fixed dt under a constant generalized force.
inline SimState step(const ArticulatedChain& chain, const SimState& s,
                     const Eigen::Ref<const VectorXd>& tau_full, double dt) {
  if (!(dt > 0.0) || dt > 0.05)
    throw Error("step: dt must lie in (0, 0.05] s");
  const auto deriv = [&](const JointState& y) -> std::pair<VectorXd, VectorXd> {
    return {y.qd, forward_dynamics(chain, tau_full, y)};
  };
  const auto [k1q, k1v] = deriv(s.state);
  const auto [k2q, k2v] = deriv({s.state.q + 0.5 * dt * k1q, s.state.qd + 0.5 * dt * k1v});
  const auto [k3q, k3v] = deriv({s.state.q + 0.5 * dt * k2q, s.state.qd + 0.5 * dt * k2v});
  const auto [k4q, k4v] = deriv({s.state.q + dt * k3q, s.state.qd + dt * k3v});
  SimState out;
  out.state.q = s.state.q + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
  out.state.qd = s.state.qd + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  out.time = s.time + dt;
  if (!all_finite(out.state.q) || !all_finite(out.state.qd))
    throw IntegrationError("integration blew up at t = " + std::to_string(out.time),
                           out.time);
  return out;
}

struct ComState {
  double x = 0, y = 0, xdot = 0, ydot = 0;
};

inline ComState com_state(const ArticulatedChain& chain, const JointState& s) {
  const auto K = detail::link_kinematics(chain, s.q, s.qd);
  Eigen::Vector2d pos = Eigen::Vector2d::Zero(), vel = Eigen::Vector2d::Zero();
  double m_tot = 0.0;
  for (int k = 0; k < chain.link_count(); ++k) {
    const double m = chain.links[k].mass;
    pos += m * K.com[k];
    vel += m * (K.jac[k] * s.qd);
    m_tot += m;
  }
  pos /= m_tot;
  vel /= m_tot;
  return {pos[0], pos[1], vel[0], vel[1]};
}

/// Ballistic apex height reached from a release state (y, ydot).
inline double flight_apex(double y, double ydot, double gravity) {
  return y + ydot * ydot / (2.0 * gravity);
}

/// Kinetic plus gravitational potential energy.
inline double mechanical_energy(const ArticulatedChain& chain, const JointState& s) {
  const auto K = detail::link_kinematics(chain, s.q, s.qd);
  double e = 0.0;
  for (int k = 0; k < chain.link_count(); ++k) {
    const auto& L = chain.links[k];
    const Eigen::Vector2d v = K.jac[k] * s.qd;
    e += 0.5 * L.mass * v.squaredNorm() + 0.5 * L.inertia * K.phidot[k] * K.phidot[k];
    e += L.mass * chain.gravity * K.com[k][1];
  }
  return e;
}

}  // namespace mtopt
