#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ensbench/error.hpp"
#include "ensbench/tracker.hpp"
#include "ensbench/vortex.hpp"

using namespace ensbench;

namespace {

const double kCoarseCellDeg = 2.5;  // pool factor 5 on the 0.5 degree grid

GridSpec test_grid() { return {61, 101, 0.0, 0.5, 120.0, 0.5}; }

TrackFields uniform_fields(const GridSpec& g, double u, double v) {
  TrackFields f;
  f.msl = Field(g, 1010.0);
  f.u10 = Field(g, u);
  f.v10 = Field(g, v);
  f.z850 = Field(g, 1500.0);
  f.elevation = Field(g, 0.0);
  for (int k = 0; k < 3; ++k) {
    f.u_levels.emplace_back(g, u);
    f.v_levels.emplace_back(g, v);
  }
  return f;
}

VortexScenario one_vortex(LatLon at, double heading, double speed) {
  VortexScenario sc;
  VortexSpec v;
  v.start = at;
  v.heading_deg = heading;
  v.speed_kmh = speed;
  sc.vortices.push_back(v);
  return sc;
}

std::vector<TrackFields> lead_fields(const VortexScenario& sc, const GridSpec& g, std::size_t leads) {
  std::vector<TrackFields> out;
  for (std::size_t k = 0; k <= leads; ++k) out.push_back(TrackFields::from(vortex_fields(sc, 6.0 * k, g)));
  return out;
}

bool within_cell(LatLon a, LatLon b) {
  const double dlon = std::abs(wrap_lon(a.lon - b.lon + 180.0) - 180.0);
  return std::abs(a.lat - b.lat) <= kCoarseCellDeg && dlon <= kCoarseCellDeg;
}

}  // namespace

TEST_CASE("candidate detection") {
  const GridSpec g = test_grid();
  const TrackerConfig cfg;
  SUBCASE("single vortex, nearby prior") {
    const auto sc = one_vortex({15.2, 150.3}, 290, 15);
    const auto f = TrackFields::from(vortex_fields(sc, 0.0, g));
    const auto det = detect_candidates(f, destination({15.2, 150.3}, 40.0, 180.0), cfg);
    REQUIRE(det.candidates.size() == 1);
    CHECK(within_cell(det.candidates[0].pos, {15.2, 150.3}));
    CHECK(det.candidates[0].vorticity >= cfg.vorticity_threshold);
  }
  SUBCASE("flat msl") {
    CHECK(detect_candidates(uniform_fields(g, 0, 0), {15, 150}, cfg).candidates.empty());
  }
  SUBCASE("vortex on a ridge") {
    auto sc = one_vortex({15.0, 150.0}, 290, 15);
    sc.ridges.push_back({12.0, 18.0, 147.0, 153.0, 1500.0});
    const auto det = detect_candidates(TrackFields::from(vortex_fields(sc, 0.0, g)), {15, 150}, cfg);
    CHECK(det.candidates.empty());
    CHECK(det.rejected_elevation >= 1);
  }
  SUBCASE("grid mismatch") {
    auto f = uniform_fields(g, 0, 0);
    f.z850 = Field(GridSpec{10, 10, 0, 1, 120, 1}, 1500.0);
    CHECK_THROWS_AS(detect_candidates(f, {15, 150}, cfg), Error);
  }
}

TEST_CASE("displacement prediction") {
  const GridSpec g{61, 101, -15.0, 0.5, 120.0, 0.5};
  const TrackerConfig cfg;
  const LatLon eq{0.0, 150.0};
  SUBCASE("zero wind, one position") {
    const LatLon hist[] = {eq};
    const auto p = predict_displacement(hist, uniform_fields(g, 0, 0), cfg);
    CHECK(great_circle_km(p, eq) < 1e-9);
  }
  SUBCASE("5 m/s eastward at the equator") {
    const LatLon hist[] = {eq};
    const auto p = predict_displacement(hist, uniform_fields(g, 5, 0), cfg);
    CHECK(p.lon - eq.lon == doctest::Approx(108.0 / (kEarthRadiusKm * kPi / 180.0)).epsilon(1e-6));
    CHECK(p.lon - eq.lon == doctest::Approx(0.971).epsilon(1e-3));
    CHECK(std::abs(p.lat) < 1e-9);
  }
  SUBCASE("cap at three times the previous step") {
    const LatLon a{0.0, 150.0};
    const LatLon b = destination(a, 90.0, 50.0);
    // Extrapolation 50 km plus advection 750 km averages to a 400 km raw step.
    const double u = 750e3 / (6 * 3600.0);
    const LatLon hist[] = {a, b};
    const auto p = predict_displacement(hist, uniform_fields(g, u, 0), cfg);
    CHECK(great_circle_km(b, p) == doctest::Approx(150.0).epsilon(1e-9));
    CHECK(initial_bearing_deg(b, p) == doctest::Approx(90.0).epsilon(1e-6));
  }
}

TEST_CASE("storm tracking") {
  const GridSpec g = vortex_grid();
  const TrackerConfig cfg;
  SUBCASE("straight 15 km/h track over 10 leads") {
    const auto sc = one_vortex({16.0, 160.0}, 300, 15);
    const auto fields = lead_fields(sc, g, 10);
    const auto tr = track_storm(fields, {16.0, 160.0}, cfg);
    REQUIRE(tr.points.size() == 11);
    CHECK(tr.terminated == TrackEnd::Horizon);
    for (const auto& p : tr.points) CHECK(within_cell(p.pos(), sc.vortices[0].center(p.lead_hours)));
  }
  SUBCASE("vortex vanishes at lead 5") {
    auto sc = one_vortex({16.0, 160.0}, 300, 15);
    sc.vortices[0].t_end_h = 30.0;
    const auto tr = track_storm(lead_fields(sc, g, 10), {16.0, 160.0}, cfg);
    CHECK(tr.points.size() == 5);
    CHECK(tr.terminated == TrackEnd::Lost);
  }
  SUBCASE("two vortices 2000 km apart") {
    auto sc = one_vortex({15.0, 165.0}, 280, 20);
    VortexSpec far = sc.vortices[0];
    far.start = destination({15.0, 165.0}, 300.0, 2000.0);
    far.heading_deg = 280.0;
    sc.vortices.push_back(far);
    const auto tr = track_storm(lead_fields(sc, g, 12), {15.0, 165.0}, cfg);
    REQUIRE(tr.points.size() == 13);
    for (const auto& p : tr.points) {
      CHECK(great_circle_km(p.pos(), sc.vortices[0].center(p.lead_hours)) < 300.0);
      CHECK(great_circle_km(p.pos(), sc.vortices[1].center(p.lead_hours)) > 1000.0);
    }
  }
  SUBCASE("no storm at the analysis") {
    VortexScenario empty;
    std::vector<TrackFields> f = {TrackFields::from(vortex_fields(empty, 0.0, g))};
    const auto tr = track_storm(f, {15, 150}, cfg);
    CHECK(tr.points.empty());
    CHECK(tr.terminated == TrackEnd::Lost);
  }
}

TEST_CASE("along and cross track") {
  const PlaneOffset north{0.0, 100.0};
  const LatLon obs{10.0, 100.0};
  auto d = at_ct({10.5, 100.0}, obs, north);
  CHECK(d.at_km > 0.0);
  CHECK(std::abs(d.ct_km) < 1e-9);
  d = at_ct({10.0, 100.5}, obs, north);
  CHECK(std::abs(d.at_km) < 1e-9);
  CHECK(d.ct_km > 0.0);
  d = at_ct(obs, obs, north);
  CHECK(d.at_km == 0.0);
  CHECK(d.ct_km == 0.0);
  CHECK(at_ct({-10.0, 100.5}, {-10.0, 100.0}, north).ct_km < 0.0);
  try {
    at_ct({10.5, 100.0}, obs, PlaneOffset{0.0, 0.0});
    FAIL("expected UndefinedDecomposition");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UndefinedDecomposition);
  }

  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> lat(-40, 40), lon(0, 360), brg(0, 360), dist(1, 300);
  for (int k = 0; k < 2000; ++k) {
    const LatLon o{lat(rng), lon(rng)};
    const LatLon f = destination(o, brg(rng), dist(rng));
    const double b = deg2rad(brg(rng));
    const auto r = at_ct(f, o, PlaneOffset{std::sin(b), std::cos(b)});
    const double e = great_circle_km(f, o);
    CHECK(std::abs(r.at_km * r.at_km + r.ct_km * r.ct_km - e * e) <= 0.01 * e * e);
  }
}

TEST_CASE("ensemble track statistics") {
  const TimePoint t0 = parse_time("2018-09-10T00:00:00Z");
  BestTrack best{"S1", {}};
  for (int h = 0; h <= 120; h += 6)
    best.points.push_back({t0 + std::chrono::hours{h}, {15.0 + 0.1 * h, 140.0}});

  auto member = [&](int id, double dlon) {
    Track t{id, {}, TrackEnd::Horizon};
    for (int h = 0; h <= 120; h += 6) t.points.push_back({double(h), 15.0 + 0.1 * h, 140.0 + dlon, 1000.0});
    return t;
  };

  SUBCASE("perfect ensemble") {
    const TrackCase c{"S1", t0, {member(0, 0), member(1, 0), member(2, 0)}, best};
    const auto s = ensemble_track_stats(std::span<const TrackCase>(&c, 1));
    CHECK(s.acc_error_km < 1e-9);
    CHECK(s.acc_spread_km < 1e-9);
    for (const auto& l : s.leads) CHECK(l.error_km < 1e-9);
  }
  SUBCASE("two symmetric members") {
    const double dlon = 0.5;
    const TrackCase c{"S1", t0, {member(0, dlon), member(1, -dlon)}, best};
    const auto s = ensemble_track_stats(std::span<const TrackCase>(&c, 1));
    const auto& l = s.leads[3];  // 24 h
    const double d = great_circle_km({15.0 + 2.4, 140.0 + dlon}, {15.0 + 2.4, 140.0});
    CHECK(l.error_km < 1e-9);
    CHECK(l.spread_km == doctest::Approx(d).epsilon(1e-12));
  }
  SUBCASE("acc sums, exclusion gate") {
    const TrackCase good{"S1", t0, {member(0, 0.3), member(1, -0.1), member(2, 0.6)}, best};
    Track lost{3, {}, TrackEnd::Lost};
    lost.points.push_back({0.0, 15.0, 140.0, 1000.0});
    const TrackCase half{"S2", t0, {member(0, 0.2), member(1, 0.1), lost, lost}, best};
    const TrackCase cases[] = {good, half};
    const auto s = ensemble_track_stats(cases);
    double e = 0.0, sp = 0.0;
    for (const auto& l : s.leads) {
      e += l.error_km;
      sp += l.spread_km;
    }
    CHECK(s.acc_error_km == e);
    CHECK(s.acc_spread_km == sp);
    CHECK(s.leads.size() == 20);
    CHECK(s.excluded == 1);
    CHECK(s.cases[0].included);
    CHECK_FALSE(s.cases[1].included);
    double ce = 0.0;
    for (double x : s.cases[0].error_km) ce += x;
    CHECK(s.cases[0].acc_error_km == ce);
  }
}

TEST_CASE("best-track csv") {
  std::istringstream is(
      "# comment\n"
      "sid,iso_time,NAME,lat,lon\n"
      " ,units,,degrees_north,degrees_east\n"
      "S1,2018-09-10 00:00:00,X,15.0,140.0\n"
      "S1,2018-09-10T06:00:00Z,X,15.5,139.5\n"
      "S2,2018-09-10 00:00:00,Y,20,-170\n");
  const auto m = read_best_tracks_csv(is);
  REQUIRE(m.size() == 2);
  const auto& s1 = m.at("S1");
  REQUIRE(s1.points.size() == 2);
  const auto mid = s1.position(parse_time("2018-09-10T03:00:00Z"));
  REQUIRE(mid.has_value());
  CHECK(mid->lat == doctest::Approx(15.25));
  CHECK(m.at("S2").points[0].pos.lon == doctest::Approx(190.0));
  std::istringstream bad("a,b,c\n1,2,3\n");
  CHECK_THROWS_AS(read_best_tracks_csv(bad), Error);

  std::ostringstream os;
  write_best_track_csv(os, s1);
  std::istringstream back(os.str());
  CHECK(read_best_tracks_csv(back).at("S1").points.size() == 2);
}

TEST_CASE("track json round trip") {
  Track t{2, {{0, 15, 140, 990}, {6, 15.5, 139.2, 992}}, TrackEnd::Elevation};
  const auto back = tracks_from_json(tracks_to_json(std::span<const Track>(&t, 1)));
  REQUIRE(back.size() == 1);
  CHECK(back[0].terminated == TrackEnd::Elevation);
  CHECK(back[0].points[1].lon == 139.2);
  CHECK(parse_track_end("horizon") == TrackEnd::Horizon);
}
