#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mtopt/model_io.hpp"
#include "mtopt/redundancy.hpp"
#include "test_paths.hpp"

using namespace mtopt;

namespace {

JointState random_state(const MusculoskeletalModel& m, std::mt19937& gen,
                        double qlim = 0.8, double vlim = 4.0) {
  std::uniform_real_distribution<double> qd(-qlim, qlim), vd(-vlim, vlim);
  JointState s = JointState::zero(m.state_dofs());
  for (int i = 0; i < m.state_dofs(); ++i) {
    s.q[i] = qd(gen);
    s.qd[i] = vd(gen);
  }
  return s;
}

/// Sub-model keeping a subset of muscles; skips file validation because a
/// subset may leave some DOF unspanned, which the solvers handle fine.
MusculoskeletalModel sub_model(const MusculoskeletalModel& model,
                               const std::vector<int>& keep) {
  MusculoskeletalModel out;
  out.skeleton = model.skeleton;
  out.actuated_dofs = model.actuated_dofs;
  for (int j : keep) out.muscles.push_back(model.muscles[j]);
  return out;
}

}  // namespace

TEST_CASE("correction on pendulum2") {
  const auto model = load_model(fixture_path("pendulum2.model.json"));
  const JointState zero = JointState::zero(1);

  const auto inside = correction(model, zero, VectorXd::Constant(1, 25.0));
  CHECK_THAT(inside.delta_tau.norm(), Catch::Matchers::WithinAbs(0.0, 1e-9));
  CHECK(inside.kkt_residual <= 1e-8);

  const auto above = correction(model, zero, VectorXd::Constant(1, 60.0));
  CHECK_THAT(above.delta_tau[0], Catch::Matchers::WithinAbs(10.0, 1e-9));
  CHECK_THAT(above.activation[0], Catch::Matchers::WithinAbs(1.0, 1e-9));
  CHECK_THAT(above.activation[1], Catch::Matchers::WithinAbs(0.0, 1e-9));

  const auto below = correction(model, zero, VectorXd::Constant(1, -60.0));
  CHECK_THAT(below.delta_tau[0], Catch::Matchers::WithinAbs(-10.0, 1e-9));
  CHECK_THAT(below.activation[0], Catch::Matchers::WithinAbs(0.0, 1e-9));
  CHECK_THAT(below.activation[1], Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("correction witness invariant") {
  const auto model = load_model(fixture_path("leg3.model.json"));
  std::mt19937 gen(17);
  std::uniform_real_distribution<double> td(-300, 300);
  for (int i = 0; i < 300; ++i) {
    const auto s = random_state(model, gen);
    VectorXd tau(3);
    tau << td(gen), td(gen), td(gen);
    const auto map = torque_affine_map(model, s);
    const auto res = correction(map, tau);
    CHECK((res.activation.array() >= -1e-12).all());
    CHECK((res.activation.array() <= 1 + 1e-12).all());
    const VectorXd realized = map.apply(res.activation);
    CHECK((realized - (tau - res.delta_tau)).cwiseAbs().maxCoeff() <= 1e-7);
  }
}

TEST_CASE("feasibility") {
  const auto model = load_model(fixture_path("pendulum2.model.json"));
  const JointState zero = JointState::zero(1);
  CHECK(feasibility(model, zero, VectorXd::Constant(1, 25.0)) == -1);
  CHECK(feasibility(model, zero, VectorXd::Constant(1, 60.0)) == +1);

  // torques built via the muscle dynamics are feasible by construction
  const auto leg3 = load_model(fixture_path("leg3.model.json"));
  std::mt19937 gen(23);
  std::uniform_real_distribution<double> ad(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const auto s = random_state(leg3, gen);
    VectorXd a(leg3.muscle_count());
    for (int j = 0; j < a.size(); ++j) a[j] = ad(gen);
    const VectorXd tau = muscle_dynamics(leg3, a, s);
    CHECK(feasibility(leg3, s, tau) == -1);
  }
}

TEST_CASE("projection feasibility and idempotence") {
  const auto model = load_model(fixture_path("leg3.model.json"));
  std::mt19937 gen(29);
  std::uniform_real_distribution<double> td(-400, 400);
  for (int i = 0; i < 2000; ++i) {
    const auto s = random_state(model, gen);
    VectorXd tau(3);
    tau << td(gen), td(gen), td(gen);
    const auto map = torque_affine_map(model, s);
    const auto res = correction(map, tau);
    const VectorXd projected = tau - res.delta_tau;
    CHECK(feasibility(map, projected) == -1);
    const auto res2 = correction(map, projected);
    CHECK(res2.delta_tau.norm() <= 1e-6);
  }
}

TEST_CASE("energy on pendulum2") {
  const auto model = load_model(fixture_path("pendulum2.model.json"));
  const JointState zero = JointState::zero(1);

  const auto at_rest = energy(model, zero, VectorXd::Zero(1));
  CHECK_THAT(at_rest.value, Catch::Matchers::WithinAbs(0.0, 1e-9));
  CHECK(at_rest.activation.cwiseAbs().maxCoeff() <= 1e-9);

  const auto mid = energy(model, zero, VectorXd::Constant(1, 25.0));
  CHECK_THAT(mid.value, Catch::Matchers::WithinAbs(500.0, 1e-7));
  CHECK_THAT(mid.activation[0], Catch::Matchers::WithinAbs(0.5, 1e-9));
  CHECK_THAT(mid.activation[1], Catch::Matchers::WithinAbs(0.0, 1e-9));

  try {
    energy(model, zero, VectorXd::Constant(1, 60.0));
    FAIL("expected infeasibility");
  } catch (const InfeasibleError& e) {
    CHECK(e.residual() > 1.0);
  }
}

TEST_CASE("energy minimality and convexity") {
  const auto model = load_model(fixture_path("leg3.model.json"));
  std::mt19937 gen(37);
  std::uniform_real_distribution<double> ad(0.0, 1.0);
  const VectorXd w = model.effort_weights();

  for (int i = 0; i < 200; ++i) {
    const auto s = random_state(model, gen);
    const auto map = torque_affine_map(model, s);
    VectorXd a(model.muscle_count());
    for (int j = 0; j < a.size(); ++j) a[j] = ad(gen);
    const VectorXd tau = map.apply(a);
    const auto res = energy(map, w, tau);
    CHECK(res.value <= w.dot(a) + 1e-6);
    CHECK(std::abs(res.value - w.dot(res.activation)) <= 1e-9 * std::max(1.0, res.value));
    CHECK((map.apply(res.activation) - tau).cwiseAbs().maxCoeff() <= 1e-7);

    // convexity of the LP value in tau
    VectorXd a2(model.muscle_count());
    for (int j = 0; j < a2.size(); ++j) a2[j] = ad(gen);
    const VectorXd tau2 = map.apply(a2);
    const double e1 = res.value;
    const double e2 = energy(map, w, tau2).value;
    const double emid = energy(map, w, 0.5 * (tau + tau2)).value;
    CHECK(emid <= 0.5 * e1 + 0.5 * e2 + 1e-6);
  }

  // zero activation costs exactly nothing
  const auto s = random_state(model, gen);
  const VectorXd tau0 = muscle_dynamics(model, VectorXd::Zero(model.muscle_count()), s);
  CHECK(energy(model, s, tau0).value == 0.0);
}

TEST_CASE("augmented energy") {
  const auto model = load_model(fixture_path("pendulum2.model.json"));
  const JointState zero = JointState::zero(1);

  CHECK_THAT(augmented_energy(model, zero, VectorXd::Constant(1, 25.0), 10.0),
             Catch::Matchers::WithinAbs(500.0, 1e-7));
  CHECK_THAT(augmented_energy(model, zero, VectorXd::Constant(1, 25.0), 123.0),
             Catch::Matchers::WithinAbs(500.0, 1e-7));
  CHECK_THAT(augmented_energy(model, zero, VectorXd::Constant(1, 60.0), 10.0),
             Catch::Matchers::WithinAbs(1100.0, 1e-6));

  // continuity across the feasibility boundary
  const double lo = augmented_energy(model, zero, VectorXd::Constant(1, 50.0 - 1e-6), 10.0);
  const double hi = augmented_energy(model, zero, VectorXd::Constant(1, 50.0 + 1e-6), 10.0);
  CHECK(std::abs(hi - lo) <= 1e-3);

  CHECK_THROWS(augmented_energy(model, zero, VectorXd::Constant(1, 25.0), 0.0));
}

TEST_CASE("torque limit bounds") {
  const auto model = load_model(fixture_path("pendulum2.model.json"));
  const JointState zero = JointState::zero(1);
  CHECK_THAT(torque_limit_bound(model, zero, 0, LimitDirection::Max),
             Catch::Matchers::WithinAbs(50.0, 1e-10));
  CHECK_THAT(torque_limit_bound(model, zero, 0, LimitDirection::Min),
             Catch::Matchers::WithinAbs(-50.0, 1e-10));

  // bounds bracket the passive torque at any state
  const auto leg3 = load_model(fixture_path("leg3.model.json"));
  std::mt19937 gen(43);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_state(leg3, gen);
    const auto map = torque_affine_map(leg3, s);
    for (int d = 0; d < 3; ++d) {
      const double lo = torque_limit_bound(map, d, LimitDirection::Min);
      const double hi = torque_limit_bound(map, d, LimitDirection::Max);
      CHECK(lo <= map.passive[d] + 1e-12);
      CHECK(hi >= map.passive[d] - 1e-12);
    }
  }
}

TEST_CASE("grid oracle examples") {
  const auto model = load_model(fixture_path("pendulum2.model.json"));
  const JointState zero = JointState::zero(1);

  const auto mid = grid_oracle(model, zero, VectorXd::Constant(1, 25.0), 0.01);
  CHECK(mid.feasible);
  CHECK(std::abs(mid.min_energy - 500.0) <= 10.0);

  const auto out = grid_oracle(model, zero, VectorXd::Constant(1, 60.0), 0.01);
  CHECK(std::abs(out.min_correction_norm - 10.0) <= 0.5);

  CHECK_THROWS(grid_oracle(model, zero, VectorXd::Constant(1, 25.0), 0.3));
  const auto leg3 = load_model(fixture_path("leg3.model.json"));
  CHECK_THROWS(grid_oracle(leg3, JointState::zero(4), VectorXd::Zero(3), 0.01));
}

TEST_CASE("grid refinement does not lose accuracy") {
  const auto model = load_model(fixture_path("pendulum2.model.json"));
  const JointState zero = JointState::zero(1);
  for (double tau : {25.0, 60.0, -12.5, 41.0}) {
    const VectorXd t = VectorXd::Constant(1, tau);
    const auto coarse = grid_oracle(model, zero, t, 0.02);
    const auto fine = grid_oracle(model, zero, t, 0.01);
    const auto corr = correction(model, zero, t).delta_tau.norm();
    CHECK(fine.min_correction_norm - corr <=
          coarse.min_correction_norm - corr + 1e-9);
    if (coarse.feasible && fine.feasible) {
      const double e = energy(model, zero, t - correction(model, zero, t).delta_tau).value;
      CHECK(std::abs(fine.min_energy - e) <= std::abs(coarse.min_energy - e) + 1e-9);
    }
  }
}

TEST_CASE("oracle agreement on sub-models") {
  const auto pendulum = load_model(fixture_path("pendulum2.model.json"));
  const auto leg3 = load_model(fixture_path("leg3.model.json"));
  std::mt19937 gen(53);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const double res = 0.01;

  // a few representative 3-muscle subsets, full coverage lives in acceptance
  const std::vector<std::vector<int>> subsets = {
      {0, 1, 2}, {0, 3, 7}, {2, 5, 6}, {1, 4, 6}};
  std::vector<MusculoskeletalModel> models;
  models.push_back(pendulum);
  for (const auto& keep : subsets) models.push_back(sub_model(leg3, keep));

  for (const auto& m : models) {
    const VectorXd w = m.effort_weights();
    const double w_max = w.maxCoeff();
    for (int i = 0; i < 25; ++i) {
      const auto s = random_state(m, gen, 0.6, 3.0);
      const auto map = torque_affine_map(m, s);
      const double g_inf = map.gain.cwiseAbs().rowwise().sum().maxCoeff();

      // mix feasible (through the map) and free-roaming torques
      VectorXd tau;
      const bool feasible_draw = i % 2 == 0;
      if (feasible_draw) {
        VectorXd a(m.muscle_count());
        for (int j = 0; j < a.size(); ++j) a[j] = ud(gen);
        tau = map.apply(a);
      } else {
        tau = map.passive;
        for (int d = 0; d < tau.size(); ++d)
          tau[d] += (2 * ud(gen) - 1) * 1.5 * std::max(g_inf, 1.0);
      }

      const auto grid = grid_oracle(map, w, tau, res);
      const auto corr = correction(map, tau);
      CHECK(std::abs(corr.delta_tau.norm() - grid.min_correction_norm) <=
            g_inf * res + 1e-9);
      if (feasible_draw) {
        const double e = energy(map, w, tau).value;
        CHECK(std::abs(e - grid.min_energy) <= w_max * res + 1e-9);
      }
    }
  }
}
