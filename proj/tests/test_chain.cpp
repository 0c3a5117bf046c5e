#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mtopt/chain.hpp"
#include "mtopt/model_io.hpp"
#include "mtopt/project.hpp"
#include "test_paths.hpp"

using namespace mtopt;

namespace {

ArticulatedChain pendulum_chain() {
  ArticulatedChain c;
  c.links.push_back({5.0, 0.5, 5.0 / 12.0, 1.0});
  c.actuated_dofs = {0};
  return c;
}

ArticulatedChain two_link_chain() {
  ArticulatedChain c;
  c.links.push_back({3.0, 0.4, 0.2, 0.9});
  c.links.push_back({1.5, 0.3, 0.05, 0.7});
  c.actuated_dofs = {0, 1};
  return c;
}

// Closed-form compound double pendulum in relative coordinates, derived by
// hand from the Lagrangian; independent of the library's chain assembly.
VectorXd double_pendulum_qdd(const ArticulatedChain& c, const JointState& s,
                             const VectorXd& tau) {
  const double m1 = c.links[0].mass, m2 = c.links[1].mass;
  const double I1 = c.links[0].inertia, I2 = c.links[1].inertia;
  const double c1 = c.links[0].com_offset, c2 = c.links[1].com_offset;
  const double L1 = c.links[0].length, g = c.gravity;
  const double q1 = s.q[0], q2 = s.q[1], w1 = s.qd[0], w2 = s.qd[1];

  Eigen::Matrix2d M;
  M(0, 0) = I1 + I2 + m1 * c1 * c1 + m2 * (L1 * L1 + c2 * c2 + 2 * L1 * c2 * std::cos(q2));
  M(0, 1) = I2 + m2 * (c2 * c2 + L1 * c2 * std::cos(q2));
  M(1, 0) = M(0, 1);
  M(1, 1) = I2 + m2 * c2 * c2;

  Eigen::Vector2d cor;
  cor[0] = -m2 * L1 * c2 * std::sin(q2) * (2 * w1 * w2 + w2 * w2);
  cor[1] = m2 * L1 * c2 * std::sin(q2) * w1 * w1;

  Eigen::Vector2d grav;
  grav[0] = -(m1 * c1 + m2 * L1) * g * std::sin(q1) - m2 * g * c2 * std::sin(q1 + q2);
  grav[1] = -m2 * g * c2 * std::sin(q1 + q2);

  return M.inverse() * (tau.head<2>() + grav - cor);
}

}  // namespace

TEST_CASE("pendulum mass matrix") {
  const auto chain = pendulum_chain();
  const MatrixXd M = mass_matrix(chain, VectorXd::Zero(1));
  CHECK_THAT(M(0, 0), Catch::Matchers::WithinAbs(1.6667, 1e-4));
}

TEST_CASE("mass matrix symmetry and positive definiteness") {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  for (const auto& chain : {pendulum_chain(), two_link_chain()}) {
    for (int i = 0; i < 1000; ++i) {
      VectorXd q(chain.dof_count());
      for (int k = 0; k < q.size(); ++k) q[k] = d(gen);
      const MatrixXd M = mass_matrix(chain, q);
      CHECK((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      Eigen::LLT<MatrixXd> llt(M);
      CHECK(llt.info() == Eigen::Success);
    }
  }
}

TEST_CASE("pendulum forward dynamics") {
  const auto chain = pendulum_chain();
  JointState rest = JointState::zero(1);
  CHECK_THAT(forward_dynamics(chain, VectorXd::Zero(1), rest)[0],
             Catch::Matchers::WithinAbs(0.0, 1e-12));

  JointState horizontal{VectorXd::Constant(1, M_PI_2), VectorXd::Zero(1)};
  CHECK_THAT(forward_dynamics(chain, VectorXd::Zero(1), horizontal)[0],
             Catch::Matchers::WithinAbs(-14.7, 1e-3));
}

TEST_CASE("two-link dynamics vs closed-form double pendulum") {
  const auto chain = two_link_chain();
  std::mt19937 gen(99);
  std::uniform_real_distribution<double> qd(-M_PI, M_PI), vd(-4, 4), td(-20, 20);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    JointState s{(VectorXd(2) << qd(gen), qd(gen)).finished(),
                 (VectorXd(2) << vd(gen), vd(gen)).finished()};
    VectorXd tau = (VectorXd(2) << td(gen), td(gen)).finished();
    const VectorXd a = forward_dynamics(chain, tau, s);
    const VectorXd b = double_pendulum_qdd(chain, s, tau);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("floating base adds two translational DOFs") {
  auto chain = two_link_chain();
  chain.base = BaseType::Floating2d;
  CHECK(chain.dof_count() == 4);
  // free fall: zero torque from rest gives ydd = -g on the base and no spin
  JointState s = JointState::zero(4);
  const VectorXd qdd = forward_dynamics(chain, VectorXd::Zero(4), s);
  CHECK_THAT(qdd[0], Catch::Matchers::WithinAbs(0.0, 1e-10));
  CHECK_THAT(qdd[1], Catch::Matchers::WithinAbs(-9.8, 1e-10));
  CHECK_THAT(qdd[2], Catch::Matchers::WithinAbs(0.0, 1e-10));
  CHECK_THAT(qdd[3], Catch::Matchers::WithinAbs(0.0, 1e-10));
}

TEST_CASE("rk4 step basics") {
  const auto chain = pendulum_chain();
  SimState s;
  s.state = JointState::zero(1);
  CHECK_THROWS(step(chain, s, VectorXd::Zero(1), 0.0));
  CHECK_THROWS(step(chain, s, VectorXd::Zero(1), 0.06));

  const auto s1 = step(chain, s, VectorXd::Zero(1), 1e-6);
  CHECK(std::abs(s1.state.q[0]) < 1e-9);

  // determinism: identical inputs, bit-identical outputs
  SimState a = s, b = s;
  VectorXd tau = VectorXd::Constant(1, 3.7);
  for (int i = 0; i < 50; ++i) {
    a = step(chain, a, tau, 1e-3);
    b = step(chain, b, tau, 1e-3);
  }
  CHECK(a.state.q[0] == b.state.q[0]);
  CHECK(a.state.qd[0] == b.state.qd[0]);
}

TEST_CASE("undamped pendulum conserves energy over 5 s") {
  const auto chain = pendulum_chain();
  SimState s;
  s.state = JointState{VectorXd::Constant(1, M_PI_2), VectorXd::Zero(1)};
  const double e0 = mechanical_energy(chain, s.state);
  double max_drift = 0.0;
  const double scale = 5.0 * 9.8 * 0.5 * 2;  // peak-to-peak potential span
  for (int i = 0; i < 5000; ++i) {
    s = step(chain, s, VectorXd::Zero(1), 1e-3);
    max_drift = std::max(max_drift, std::abs(mechanical_energy(chain, s.state) - e0));
  }
  CHECK(max_drift / scale <= 1e-3);
}

TEST_CASE("power balance along a driven trajectory") {
  auto chain = two_link_chain();
  chain.passive_damping = (VectorXd(2) << 0.3, 0.1).finished();
  SimState s;
  s.state = JointState{(VectorXd(2) << 0.4, -0.2).finished(),
                       (VectorXd(2) << 1.0, -0.5).finished()};
  VectorXd tau = (VectorXd(2) << 2.0, -1.0).finished();
  const double dt = 1e-3;
  for (int i = 0; i < 200; ++i) {
    const double e_before = mechanical_energy(chain, s.state);
    const auto mid = s.state;
    s = step(chain, s, tau, dt);
    const double e_after = mechanical_energy(chain, s.state);
    const VectorXd qd_mid = 0.5 * (mid.qd + s.state.qd);
    const VectorXd damp = (VectorXd(2) << chain.damping(0) * qd_mid[0],
                           chain.damping(1) * qd_mid[1])
                              .finished();
    const double power = qd_mid.dot(tau - damp);
    const double predicted = power * dt;
    const double actual = e_after - e_before;
    CHECK(std::abs(actual - predicted) <=
          0.01 * std::max({std::abs(actual), std::abs(predicted), 1e-4}));
  }
}

TEST_CASE("pinned chain is the stiff-penalty limit of a floating chain") {
  // drive the floating base toward the origin with a spring-damper and watch
  // the revolute trajectory approach the pinned one as stiffness grows
  const auto pinned = pendulum_chain();
  auto floating = pendulum_chain();
  floating.base = BaseType::Floating2d;

  SimState ps;
  ps.state = JointState{VectorXd::Constant(1, 1.0), VectorXd::Zero(1)};

  std::vector<double> errors;
  for (double k : {1e3, 1e4, 1e5}) {
    SimState fs;
    fs.state = JointState::zero(3);
    fs.state.q[2] = 1.0;
    SimState p = ps;
    const double dt = 2e-5;
    const double damp = 2.0 * std::sqrt(k * 5.0);
    double err = 0.0;
    for (int i = 0; i < 25000; ++i) {
      VectorXd tau3 = VectorXd::Zero(3);
      tau3[0] = -k * fs.state.q[0] - damp * fs.state.qd[0];
      tau3[1] = -k * fs.state.q[1] - damp * fs.state.qd[1];
      fs = step(floating, fs, tau3, dt);
      p = step(pinned, p, VectorXd::Zero(1), dt);
      err = std::max(err, std::abs(fs.state.q[2] - p.state.q[0]));
    }
    errors.push_back(err);
  }
  CHECK(errors[1] < errors[0]);
  CHECK(errors[2] < errors[1]);
}

TEST_CASE("center of mass state") {
  const auto chain = pendulum_chain();
  const auto cs = com_state(chain, JointState::zero(1));
  CHECK_THAT(cs.x, Catch::Matchers::WithinAbs(0.0, 1e-14));
  CHECK_THAT(cs.y, Catch::Matchers::WithinAbs(-0.5, 1e-14));
  CHECK_THAT(cs.xdot, Catch::Matchers::WithinAbs(0.0, 1e-14));
  CHECK_THAT(cs.ydot, Catch::Matchers::WithinAbs(0.0, 1e-14));

  // momentum consistency on random states of the two-link chain
  const auto two = two_link_chain();
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  const double m_tot = two.links[0].mass + two.links[1].mass;
  for (int i = 0; i < 100; ++i) {
    JointState s{(VectorXd(2) << d(gen), d(gen)).finished(),
                 (VectorXd(2) << d(gen), d(gen)).finished()};
    const auto cs2 = com_state(two, s);
    // sum of link momenta via finite difference of positions
    const double h = 1e-7;
    JointState sp{s.q + h * s.qd, s.qd};
    JointState sm{s.q - h * s.qd, s.qd};
    const auto cp = com_state(two, sp);
    const auto cm = com_state(two, sm);
    const double px = m_tot * (cp.x - cm.x) / (2 * h);
    const double py = m_tot * (cp.y - cm.y) / (2 * h);
    CHECK_THAT(m_tot * cs2.xdot, Catch::Matchers::WithinRel(px, 1e-5));
    CHECK_THAT(m_tot * cs2.ydot, Catch::Matchers::WithinRel(py, 1e-5));
  }
}

TEST_CASE("flight apex") {
  CHECK_THAT(flight_apex(1.0, 2.0, 9.8),
             Catch::Matchers::WithinAbs(1.0 + 4.0 / 19.6, 1e-12));
}

TEST_CASE("project torque with the exact correction") {
  const auto model = load_model(fixture_path("pendulum2.model.json"));
  const auto fn = exact_correction_fn(model);
  const JointState zero = JointState::zero(1);

  const auto inside = project_torque(fn, zero, VectorXd::Constant(1, 25.0));
  CHECK_THAT(inside.tau[0], Catch::Matchers::WithinAbs(25.0, 1e-9));
  CHECK_THAT(inside.correction_norm, Catch::Matchers::WithinAbs(0.0, 1e-9));

  const auto outside = project_torque(fn, zero, VectorXd::Constant(1, 60.0));
  CHECK_THAT(outside.tau[0], Catch::Matchers::WithinAbs(50.0, 1e-9));
  CHECK_THAT(outside.correction_norm, Catch::Matchers::WithinAbs(10.0, 1e-9));

  // idempotence
  const auto again = project_torque(fn, zero, outside.tau);
  CHECK(std::abs(again.tau[0] - outside.tau[0]) <= 1e-6);

  CHECK_THROWS(project_torque(fn, zero, VectorXd::Constant(1, std::nan(""))));
}
