#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "mtopt/curves.hpp"

using mtopt::CurveParams;

TEST_CASE("active force-length") {
  CurveParams c;
  CHECK(c.active_force_length(1.0) == 1.0);
  CHECK_THAT(c.active_force_length(0.5), Catch::Matchers::WithinAbs(0.5738, 1e-4));
  // symmetric about the optimum
  for (double d : {0.05, 0.2, 0.31, 0.49}) {
    CHECK(c.active_force_length(1.0 + d) ==
          Catch::Approx(c.active_force_length(1.0 - d)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(c.active_force_length(0.0), std::domain_error);
  CHECK_THROWS_AS(c.active_force_length(-0.3), std::domain_error);
  CHECK_THROWS_AS(c.active_force_length(std::nan("")), std::domain_error);
}

TEST_CASE("force-velocity") {
  CurveParams c;
  CHECK(c.force_velocity(0.0) == 1.0);
  CHECK(c.force_velocity(-1.0) == 0.0);
  CHECK(c.force_velocity(-2.5) == 0.0);  // clamped below -1
  CHECK_THAT(c.force_velocity(0.25), Catch::Matchers::WithinAbs(1.2, 1e-9));
  CHECK_THROWS_AS(c.force_velocity(std::nan("")), std::domain_error);
}

TEST_CASE("passive force") {
  CurveParams c;
  CHECK(c.passive_force(0.9) == 0.0);
  CHECK(c.passive_force(1.0) == 0.0);
  CHECK_THAT(c.passive_force(1.6), Catch::Matchers::WithinAbs(1.0, 1e-12));
  CHECK_THAT(c.passive_force(1.3), Catch::Matchers::WithinAbs(0.1192, 1e-4));
  CHECK_THROWS_AS(c.passive_force(0.0), std::domain_error);
}

TEST_CASE("curve bounds and monotonicity on random inputs") {
  CurveParams c;
  std::mt19937 gen(12345);
  std::uniform_real_distribution<double> ldist(0.05, 2.5);
  std::uniform_real_distribution<double> vdist(-3.0, 5.0);

  std::vector<double> vs;
  for (int i = 0; i < 10000; ++i) {
    const double l = ldist(gen);
    const double fl = c.active_force_length(l);
    CHECK(fl > 0.0);
    CHECK(fl <= 1.0);
    const double fpe = c.passive_force(l);
    CHECK(fpe >= 0.0);
    const double v = vdist(gen);
    const double fv = c.force_velocity(v);
    CHECK(fv >= 0.0);
    CHECK(fv < c.max_eccentric_gain);
    vs.push_back(v);
  }
  std::sort(vs.begin(), vs.end());
  double prev = c.force_velocity(vs.front());
  for (double v : vs) {
    const double fv = c.force_velocity(v);
    CHECK(fv >= prev - 1e-14);
    prev = fv;
  }
  // passive force monotone non-decreasing
  double lprev = 0.05, fprev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double l = 0.05 + 2.45 * i / 100.0;
    const double f = c.passive_force(l);
    CHECK(f >= fprev - 1e-14);
    fprev = f;
    lprev = l;
  }
  (void)lprev;
}
