#include <doctest.h>

#include <cmath>
#include <random>

#include "ensbench/error.hpp"
#include "ensbench/grid.hpp"
#include "ensbench/metrics.hpp"

using namespace ensbench;

TEST_CASE("latitude weights") {
  SUBCASE("single ring at the equator is uniform") {
    GridSpec g{1, 8, 0.0, 1.0, 0.0, 45.0};
    for (double w : latitude_weights(g).weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("-60, 0, 60") {
    GridSpec g{3, 4, -60.0, 60.0, 0.0, 90.0};
    const auto w = latitude_weights(g).weights;
    CHECK(w[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("pole row gets zero weight") {
    GridSpec g{2, 4, 0.0, 90.0, 0.0, 90.0};
    CHECK(std::abs(latitude_weights(g).weights[1]) < 1e-15);
  }
  SUBCASE("all-pole grid is degenerate") {
    GridSpec g{1, 4, 90.0, 1.0, 0.0, 90.0};
    try {
      latitude_weights(g);
      FAIL("expected DegenerateWeights");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateWeights);
    }
  }
  SUBCASE("unit mean on random grids") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> n(1, 40);
    std::uniform_real_distribution<double> start(-89.0, 0.0);
    for (int trial = 0; trial < 500; ++trial) {
      GridSpec g;
      g.nlat = static_cast<std::size_t>(n(rng));
      g.nlon = 4;
      g.lat_start = start(rng);
      g.lat_step = g.nlat > 1 ? (89.0 - g.lat_start) / static_cast<double>(g.nlat - 1) : 1.0;
      const auto w = latitude_weights(g).weights;
      double mean = 0.0;
      for (double v : w) mean += v;
      mean /= static_cast<double>(w.size());
      CHECK(std::abs(mean - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS((GridSpec{0, 4, 0, 1, 0, 1}.validate()), Error);
  CHECK_THROWS_AS((GridSpec{10, 4, 80, 5, 0, 1}.validate()), Error);  // runs past 90N
  CHECK_NOTHROW((GridSpec{3, 4, -60, 60, 0, 90}.validate()));
  CHECK(GridSpec{1, 40, 0, 1, 0, 9}.periodic_lon());
  CHECK_FALSE(GridSpec{1, 40, 0, 1, 0, 1}.periodic_lon());
  CHECK(wrap_lon(-10.0) == doctest::Approx(350.0));
  CHECK(wrap_lon(370.0) == doctest::Approx(10.0));
}

TEST_CASE("average pool") {
  SUBCASE("constant 5x5 by 5") {
    Field f(GridSpec{5, 5, 0, 1, 0, 1}, 1.0);
    const auto p = average_pool(f, 5);
    REQUIRE(p.grid().size() == 1);
    CHECK(p.values()[0] == 1.0);
  }
  SUBCASE("2x2 mean") {
    Field f(GridSpec{2, 2, 0, 1, 0, 1}, {1, 2, 3, 4});
    CHECK(average_pool(f, 2).values()[0] == 2.5);
  }
  SUBCASE("single spike") {
    Field f(GridSpec{5, 5, 0, 1, 0, 1}, 0.0);
    f.at(2, 3) = 10.0;
    CHECK(average_pool(f, 5).values()[0] == doctest::Approx(0.4).epsilon(1e-15));
  }
  SUBCASE("output grid sits on block centres") {
    Field f(GridSpec{10, 10, 0.0, 0.5, 100.0, 0.5}, 0.0);
    const auto g = average_pool(f, 5).grid();
    CHECK(g.nlat == 2);
    CHECK(g.lat_step == 2.5);
    CHECK(g.lat_start == doctest::Approx(1.0));
    CHECK(g.lon_start == doctest::Approx(101.0));
  }
  SUBCASE("factor zero and non-divisible dims") {
    Field f(GridSpec{6, 6, 0, 1, 0, 1}, 0.0);
    CHECK_THROWS_AS(average_pool(f, 0), Error);
    CHECK_THROWS_AS(average_pool(f, 4), Error);
    const auto t = average_pool(f, 4, PoolEdgePolicy::Truncate);
    CHECK(t.grid().nlat == 1);
    CHECK(t.grid().nlon == 1);
  }
  SUBCASE("idempotent on constants, commutes with adding a constant") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5, 5);
    GridSpec g{6, 9, 0, 1, 0, 1};
    std::vector<double> v(g.size());
    for (double& x : v) x = u(rng);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += 3.25;
    const auto a = average_pool(Field(g, v), 3);
    const auto b = average_pool(Field(g, shifted), 3);
    for (std::size_t k = 0; k < a.values().size(); ++k) CHECK(b.values()[k] == doctest::Approx(a.values()[k] + 3.25));
    const auto c = average_pool(Field(g, 7.5), 3);
    for (double x : c.values()) CHECK(x == 7.5);
  }
}

TEST_CASE("great circle distance") {
  CHECK(great_circle_km({0, 0}, {0, 0}) == 0.0);
  CHECK(great_circle_km({0, 0}, {90, 0}) == doctest::Approx(10007.543).epsilon(1e-7));
  CHECK(great_circle_km({0, 0}, {0, 180}) == doctest::Approx(20015.087).epsilon(1e-7));
  CHECK(great_circle_km({0, 359.5}, {0, -0.5}) < 1e-9);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lat(-90, 90), lon(0, 360);
  for (int k = 0; k < 10000; ++k) {
    const LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, c{lat(rng), lon(rng)};
    const double ab = great_circle_km(a, b), ba = great_circle_km(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab <= great_circle_km(a, c) + great_circle_km(c, b) + 1e-6);
  }
}

TEST_CASE("destination and bearing round trip") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lat(-70, 70), lon(0, 360), brg(0, 360), dist(1, 2000);
  for (int k = 0; k < 1000; ++k) {
    const LatLon a{lat(rng), lon(rng)};
    const double b = brg(rng), d = dist(rng);
    const LatLon p = destination(a, b, d);
    CHECK(great_circle_km(a, p) == doctest::Approx(d).epsilon(1e-9));
    double diff = std::fmod(initial_bearing_deg(a, p) - b + 540.0, 360.0) - 180.0;
    CHECK(std::abs(diff) < 1e-6);
  }
}

TEST_CASE("uniform weights give unweighted metrics") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  GridSpec g{5, 7, -40, 20, 0, 10};
  std::vector<double> a(g.size()), b(g.size());
  for (auto& x : a) x = n(rng);
  for (auto& x : b) x = n(rng);
  double se = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) se += (a[k] - b[k]) * (a[k] - b[k]);
  const double plain = std::sqrt(se / static_cast<double>(a.size()));
  CHECK(rmse(a, b, g, LatWeights::uniform(g.nlat)) == doctest::Approx(plain).epsilon(1e-14));
}
