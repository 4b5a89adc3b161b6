#include "ensbench/vortex.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "ensbench/error.hpp"

namespace ensbench {

void VortexSpec::validate() const {
  require(radius_km > 0.0, "vortex radius must be positive");
  require(depth_hpa > 0.0, "vortex depth must be positive");
  require(speed_kmh >= 0.0, "vortex speed must be non-negative");
  require(start.lat >= -90.0 && start.lat <= 90.0, "vortex start latitude out of range");
}

LatLon VortexSpec::center(double t_h) const { return destination(start, heading_deg, speed_kmh * t_h); }

PlaneOffset VortexSpec::motion_ms() const {
  const double ms = speed_kmh / 3.6;
  const double b = deg2rad(heading_deg);
  return {ms * std::sin(b), ms * std::cos(b)};
}

void VortexScenario::validate() const {
  for (const auto& v : vortices) v.validate();
  require(horizon_h >= 0.0, "scenario horizon must be non-negative");
}

double rankine_speed(double d_km, double radius_km, double vmax_ms) {
  if (d_km <= radius_km) return vmax_ms * d_km / radius_km;
  double v = vmax_ms * radius_km / d_km;
  if (d_km > 5.0 * radius_km) v *= std::exp(-(d_km - 5.0 * radius_km) / radius_km);
  return v;
}

VortexFields vortex_fields(const VortexScenario& scenario, double t_h, const GridSpec& grid) {
  scenario.validate();
  grid.validate();
  require(t_h >= 0.0 && t_h <= scenario.horizon_h + 1e-9, "time lies outside the scenario horizon");
  const std::size_t L = scenario.level_factors.size();
  VortexFields f{Field(grid, scenario.background_hpa), Field(grid), Field(grid),
                 Field(grid, scenario.z850_background_m), Field(grid), std::vector<Field>(L, Field(grid)),
                 std::vector<Field>(L, Field(grid)), {}};

  struct Live {
    const VortexSpec* spec;
    LatLon c;
    PlaneOffset motion;
  };
  std::vector<Live> live;
  for (const auto& v : scenario.vortices) {
    if (v.active(t_h)) {
      live.push_back({&v, v.center(t_h), v.motion_ms()});
      f.centers.emplace_back(live.back().c);
    } else {
      f.centers.emplace_back(std::nullopt);
    }
  }

  for (std::size_t i = 0; i < grid.nlat; ++i) {
    for (std::size_t j = 0; j < grid.nlon; ++j) {
      const LatLon p = grid.point(i, j);
      double msl = scenario.background_hpa, z = scenario.z850_background_m;
      double su = 0.0, sv = 0.0, sw = 0.0;  // steering blended by proximity
      double tu = 0.0, tv = 0.0;             // vortex circulation
      for (const auto& lv : live) {
        const double d = great_circle_km(lv.c, p);
        const double g = std::exp(-(d / lv.spec->radius_km) * (d / lv.spec->radius_km));
        msl -= lv.spec->depth_hpa * g;
        z -= lv.spec->z850_depth_m * g;
        const double w = std::exp(-(d / 1000.0) * (d / 1000.0)) + 1e-12;
        su += w * lv.motion.east_km;
        sv += w * lv.motion.north_km;
        sw += w;
        if (d > 0.0) {
          const PlaneOffset o = tangent_offset(lv.c, p);
          const double r = std::hypot(o.east_km, o.north_km);
          if (r > 0.0) {
            const double speed = rankine_speed(d, lv.spec->radius_km, lv.spec->vmax_ms);
            // Counter-clockwise in the north, clockwise in the south.
            const double hemi = lv.c.lat >= 0.0 ? 1.0 : -1.0;
            tu += hemi * speed * (-o.north_km / r);
            tv += hemi * speed * (o.east_km / r);
          }
        }
      }
      const double steer_u = sw > 0.0 ? su / sw : 0.0;
      const double steer_v = sw > 0.0 ? sv / sw : 0.0;
      f.msl.at(i, j) = msl;
      f.z850.at(i, j) = z;
      f.u10.at(i, j) = steer_u + tu;
      f.v10.at(i, j) = steer_v + tv;
      for (std::size_t l = 0; l < L; ++l) {
        f.u_levels[l].at(i, j) = steer_u + scenario.level_factors[l] * tu;
        f.v_levels[l].at(i, j) = steer_v + scenario.level_factors[l] * tv;
      }
      double elev = 0.0;
      const double lon = p.lon;
      for (const auto& r : scenario.ridges)
        if (p.lat >= r.lat_min && p.lat <= r.lat_max && lon >= wrap_lon(r.lon_min) && lon <= wrap_lon(r.lon_max))
          elev = std::max(elev, r.height_m);
      f.elevation.at(i, j) = elev;
    }
  }
  return f;
}

nlohmann::json scenario_to_json(const VortexScenario& s) {
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& v : s.vortices)
    vs.push_back({{"lat", v.start.lat},
                  {"lon", v.start.lon},
                  {"heading_deg", v.heading_deg},
                  {"speed_kmh", v.speed_kmh},
                  {"depth_hpa", v.depth_hpa},
                  {"radius_km", v.radius_km},
                  {"vmax_ms", v.vmax_ms},
                  {"z850_depth_m", v.z850_depth_m},
                  {"t_start_h", v.t_start_h},
                  {"t_end_h", v.t_end_h}});
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : s.ridges)
    rs.push_back({{"lat_min", r.lat_min},
                  {"lat_max", r.lat_max},
                  {"lon_min", r.lon_min},
                  {"lon_max", r.lon_max},
                  {"height_m", r.height_m}});
  return {{"vortices", vs},
          {"ridges", rs},
          {"background_hpa", s.background_hpa},
          {"z850_background_m", s.z850_background_m},
          {"horizon_h", s.horizon_h},
          {"level_factors", s.level_factors}};
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) fail(ErrorKind::Config, "unknown key '" + where + it.key() + "' in vortex scenario");
  }
}

}  // namespace

VortexScenario scenario_from_json(const nlohmann::json& j) {
  VortexScenario s;
  try {
    reject_unknown(j, {"vortices", "ridges", "background_hpa", "z850_background_m", "horizon_h", "level_factors"}, "");
    for (const auto& v : j.at("vortices")) {
      reject_unknown(v,
                     {"lat", "lon", "heading_deg", "speed_kmh", "depth_hpa", "radius_km", "vmax_ms", "z850_depth_m",
                      "t_start_h", "t_end_h"},
                     "vortices.");
      VortexSpec d;
      d.start = {v.at("lat").get<double>(), v.at("lon").get<double>()};
      d.heading_deg = v.value("heading_deg", d.heading_deg);
      d.speed_kmh = v.value("speed_kmh", d.speed_kmh);
      d.depth_hpa = v.value("depth_hpa", d.depth_hpa);
      d.radius_km = v.value("radius_km", d.radius_km);
      d.vmax_ms = v.value("vmax_ms", d.vmax_ms);
      d.z850_depth_m = v.value("z850_depth_m", d.z850_depth_m);
      d.t_start_h = v.value("t_start_h", d.t_start_h);
      d.t_end_h = v.value("t_end_h", d.t_end_h);
      s.vortices.push_back(d);
    }
    if (j.contains("ridges"))
      for (const auto& r : j.at("ridges")) {
        reject_unknown(r, {"lat_min", "lat_max", "lon_min", "lon_max", "height_m"}, "ridges.");
        s.ridges.push_back({r.at("lat_min").get<double>(), r.at("lat_max").get<double>(),
                            r.at("lon_min").get<double>(), r.at("lon_max").get<double>(),
                            r.value("height_m", 1500.0)});
      }
    s.background_hpa = j.value("background_hpa", s.background_hpa);
    s.z850_background_m = j.value("z850_background_m", s.z850_background_m);
    s.horizon_h = j.value("horizon_h", s.horizon_h);
    if (j.contains("level_factors")) s.level_factors = j.at("level_factors").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed vortex scenario: ") + e.what());
  }
  s.validate();
  return s;
}

VortexScenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Data, "cannot open scenario file: " + path.string());
  try {
    return scenario_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Config, "scenario " + path.string() + " is not valid JSON: " + e.what());
  }
}

VortexScenario random_scenario(std::uint64_t seed, double speed_min_kmh, double speed_max_kmh, double lat_min,
                               double lat_max, double lon_min, double lon_max) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VortexSpec v;
  v.start = {lat_min + (lat_max - lat_min) * u(rng), lon_min + (lon_max - lon_min) * u(rng)};
  v.heading_deg = 270.0 + 90.0 * u(rng);
  v.speed_kmh = speed_min_kmh + (speed_max_kmh - speed_min_kmh) * u(rng);
  v.radius_km = 180.0 + 60.0 * u(rng);
  v.depth_hpa = 20.0 + 30.0 * u(rng);
  v.vmax_ms = 25.0 + 15.0 * u(rng);
  VortexScenario s;
  s.vortices.push_back(v);
  return s;
}

GridSpec vortex_grid() { return GridSpec{111, 161, 0.0, 0.5, 100.0, 0.5}; }

}  // namespace ensbench
