#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ddgen/gscm.hpp"
#include "doctest.h"

using namespace ddgen::gscm;
constexpr double kPi = std::numbers::pi;

TEST_CASE("place_scatterers") {
  const Bounds b;
  const auto f = place_scatterers(26, b, 7);
  CHECK(f.size() == 26);
  for (const auto& p : f.positions()) CHECK(b.contains(p));

  CHECK(place_scatterers(0, b, 7).empty());

  const auto again = place_scatterers(26, b, 7);
  for (std::size_t i = 0; i < 26; ++i) CHECK(f.positions()[i] == again.positions()[i]);
  CHECK_FALSE(place_scatterers(26, b, 8).positions()[0] == f.positions()[0]);

  Bounds bad;
  bad.z = {5.0, 1.0};
  CHECK_THROWS_AS(place_scatterers(3, bad, 1), std::invalid_argument);
  Bounds point;
  point.x = {2.0, 2.0};
  const auto flat = place_scatterers(5, point, 1);
  for (const auto& p : flat.positions()) CHECK(p.x == 2.0);
}

TEST_CASE("heading_angle_set") {
  const auto h = heading_angle_set(50);
  CHECK(h.size() == 50);
  CHECK(std::abs(h.back()) < 1e-12);
  CHECK(h.front() == doctest::Approx(2 * kPi * std::sin(0.1 * kPi)));
  CHECK(h.front() == doctest::Approx(1.9416).epsilon(1e-4));
  CHECK(heading_angle_set(2).front() == doctest::Approx(1.9416).epsilon(1e-4));
  CHECK_THROWS_AS(heading_angle_set(1), std::invalid_argument);
}

TEST_CASE("step_rx") {
  const TrajectoryPoint p{{1.0, 2.0, 1.5}, 0.0, 3};
  auto a = step_rx(p, 0.0, 1.0);
  CHECK(a.position.x == doctest::Approx(2.0));
  CHECK(a.position.y == 2.0);
  CHECK(a.position.z == 1.5);
  CHECK(a.step_index == 4);
  auto b = step_rx(p, kPi / 2, 1.0);
  CHECK(std::abs(b.position.x - 1.0) < 1e-15);
  CHECK(b.position.y == doctest::Approx(3.0));
  auto c = step_rx(p, kPi / 4, 1.0);
  CHECK(c.position.x - 1.0 == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(c.position.y - 2.0 == doctest::Approx(0.70711).epsilon(1e-5));
}

TEST_CASE("gen_trajectory") {
  const auto headings = heading_angle_set(50);
  TrajectoryConfig cfg;
  cfg.steps = 1;
  auto one = gen_trajectory(cfg, headings);
  REQUIRE(one.size() == 1);
  CHECK(one[0].position == cfg.start);

  cfg.steps = 5000;
  cfg.delta2d = 1.5;
  cfg.seed = 3;
  const auto t = gen_trajectory(cfg, headings);
  REQUIRE(t.size() == 5000);
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double dx = t[i].position.x - t[i - 1].position.x;
    const double dy = t[i].position.y - t[i - 1].position.y;
    CHECK(std::abs(std::hypot(dx, dy) - 1.5) < 1e-9);
    CHECK(t[i].position.z == cfg.start.z);
  }
  const auto t2 = gen_trajectory(cfg, headings);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i].position == t2[i].position);

  cfg.steps = 0;
  CHECK_THROWS(gen_trajectory(cfg, headings));
}

TEST_CASE("gen_trajectory stays near the TX over a long run") {
  const auto headings = heading_angle_set(50);
  for (double delta : {0.5, 1.0, 1.5}) {
    TrajectoryConfig cfg;
    cfg.steps = 100000;
    cfg.delta2d = delta;
    cfg.seed = 11;
    const auto t = gen_trajectory(cfg, headings);
    double worst = 0.0;
    for (const auto& p : t) worst = std::max(worst, distance_2d(cfg.tx, p.position));
    CHECK(worst <= 600.0 + delta * 501.0);
  }
}

TEST_CASE("pathloss_db") {
  CHECK(pathloss_db(100.0, 2.4, 1.5) == doctest::Approx(99.3042).epsilon(1e-6));
  CHECK(std::abs(pathloss_db(100.0, 2.4, 1.5) - 99.3042) < 1e-4);
  CHECK(std::abs(pathloss_db(1000.0, 2.4, 1.5) - 138.3842) < 1e-4);
  CHECK(pathloss_db(100.0, 2.4, 1.5) ==
        13.54 + 39.08 * std::log10(100.0) + 20.0 * std::log10(2.4));
  CHECK(pathloss_db(100.0, 2.4, 2.5) == doctest::Approx(pathloss_db(100.0, 2.4, 1.5) - 0.6));
  double prev = pathloss_db(1.0, 2.4, 1.5);
  for (double d = 2.0; d < 5000.0; d *= 1.3) {
    const double cur = pathloss_db(d, 2.4, 1.5);
    CHECK(cur > prev);
    prev = cur;
  }
  CHECK_THROWS_AS(pathloss_db(0.0, 2.4, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(pathloss_db(10.0, 0.0, 1.5), std::invalid_argument);
}

TEST_CASE("mpc_geometry") {
  const Vec3 tx{0, 0, 25};
  SUBCASE("delay") {
    const auto g = mpc_geometry(tx, {100, 0, 1.5}, {50, 0, 10});
    CHECK(g.delay == doctest::Approx((std::sqrt(2725.0) + std::sqrt(2572.25)) / 3e8));
    CHECK(g.delay * 1e9 == doctest::Approx(343.06).epsilon(1e-5));
  }
  SUBCASE("azimuth with shared y") {
    const auto g = mpc_geometry(tx, {10, 5, 1.5}, {40, 5, 10});
    CHECK(g.az_dod == 0.0);
    CHECK(g.az_doa == doctest::Approx(kPi));
  }
  SUBCASE("scatterer above the receiver") {
    const auto g = mpc_geometry(tx, {10, 5, 1.5}, {10, 5, 20});
    CHECK(g.zn_doa == 0.0);
  }
  SUBCASE("angles in (-pi, pi]") {
    for (int i = 0; i < 200; ++i) {
      const double a = 0.1 * i;
      const auto g = mpc_geometry(tx, {100 * std::cos(a), 100 * std::sin(a), 1.5},
                                  {30 * std::sin(3 * a), -40 * std::cos(a), 15});
      for (double v : {g.az_dod, g.zn_dod, g.az_doa, g.zn_doa}) {
        CHECK(v > -kPi);
        CHECK(v <= kPi);
      }
      CHECK(g.delay > 0.0);
    }
  }
  SUBCASE("coincident points") {
    CHECK_THROWS_AS(mpc_geometry(tx, {1, 1, 1.5}, tx), std::invalid_argument);
    CHECK_THROWS_AS(mpc_geometry(tx, {1, 1, 1.5}, {1, 1, 1.5}), std::invalid_argument);
  }
}

TEST_CASE("total_gain_db") {
  const double one[] = {-87.25};
  CHECK(total_gain_db(one) == -87.25);
  const double two[] = {-100.0, -100.0};
  CHECK(total_gain_db(two) == doctest::Approx(-96.9897).epsilon(1e-6));
  CHECK(std::abs(total_gain_db(two) - 10 * std::log10(2e-10)) < 1e-9);
}

TEST_CASE("synthesize_sample") {
  const Vec3 tx{0, 0, 25};
  const TrajectoryPoint rx{{100, 100, 1.5}, 0.0, 0};
  const auto field = place_scatterers(26, Bounds{}, 5);
  const auto s = synthesize_sample(tx, rx, field, 2.4);
  REQUIRE(s.paths.size() == 26);
  CHECK(s.flatten().size() == 186);
  CHECK(feature_dim(26) == 186);
  double max_g = -1e300;
  for (std::size_t n = 0; n < 26; ++n) {
    const auto& p = s.paths[n];
    CHECK(p.path_id == n + 1);
    const Vec3 sc = field.positions()[n];
    const double d = distance_3d(tx, sc) + distance_3d(sc, rx.position);
    CHECK(p.gain_db == doctest::Approx(-pathloss_db(d, 2.4, 1.5)));
    CHECK(p.delay > 0.0);
    max_g = std::max(max_g, p.gain_db);
  }
  CHECK(s.total_gain_db > max_g);

  const ScattererField single({{50, 0, 10}}, 0);
  const auto s1 = synthesize_sample(tx, rx, single, 2.4);
  CHECK(s1.total_gain_db == s1.paths[0].gain_db);

  CHECK_THROWS_AS(synthesize_sample(tx, rx, ScattererField({}, 0), 2.4), std::invalid_argument);
}

TEST_CASE("feature vector layout and units") {
  const Vec3 tx{0, 0, 25};
  const TrajectoryPoint rx{{100, -20, 1.5}, 0.0, 0};
  const auto field = place_scatterers(3, Bounds{}, 9);
  const auto s = synthesize_sample(tx, rx, field, 2.4);
  const auto row = s.flatten();
  CHECK(row[col::kX] == 100.0);
  CHECK(row[col::kY] == -20.0);
  CHECK(row[col::kZ] == 1.5);
  CHECK(row[col::kTotalGain] == s.total_gain_db);
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(row[col::path(n, col::kPathId)] == static_cast<double>(n + 1));
    CHECK(row[col::path(n, col::kDelay)] == doctest::Approx(s.paths[n].delay * 1e9));
    CHECK(row[col::path(n, col::kAzDod)] == doctest::Approx(s.paths[n].az_dod * 180.0 / kPi));
    CHECK(row[col::path(n, col::kZnDoa)] == doctest::Approx(s.paths[n].zn_doa * 180.0 / kPi));
  }
  const auto back = ChannelSample::from_features(row, 3);
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(back.paths[n].delay == doctest::Approx(s.paths[n].delay));
    CHECK(back.paths[n].az_doa == doctest::Approx(s.paths[n].az_doa));
  }
  CHECK_THROWS(ChannelSample::from_features(row, 4));
}

TEST_CASE("phases are drawn but not emitted") {
  const Vec3 tx{0, 0, 25};
  const TrajectoryPoint rx{{100, -20, 1.5}, 0.0, 0};
  const auto field = place_scatterers(4, Bounds{}, 9);
  const std::uint64_t seed_a = 1, seed_b = 2;
  const auto a = synthesize_sample(tx, rx, field, 2.4, &seed_a);
  const auto b = synthesize_sample(tx, rx, field, 2.4, &seed_b);
  CHECK(a.paths[0].phase != b.paths[0].phase);
  CHECK(a.flatten() == b.flatten());
}
