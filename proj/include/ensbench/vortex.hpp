#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ensbench/grid.hpp"

namespace ensbench {

/// One vortex moving along a great circle at constant speed.
struct VortexSpec {
  LatLon start;
  double heading_deg = 290.0;  // clockwise from north
  double speed_kmh = 15.0;
  double depth_hpa = 30.0;
  double radius_km = 200.0;
  double vmax_ms = 30.0;  // Rankine peak tangential wind
  double z850_depth_m = 150.0;
  double t_start_h = 0.0;
  double t_end_h = 1e9;  // present for t in [t_start_h, t_end_h)

  void validate() const;
  bool active(double t_h) const { return t_h >= t_start_h && t_h < t_end_h; }
  LatLon center(double t_h) const;
  /// Translation velocity in m/s (east, north).
  PlaneOffset motion_ms() const;
};

/// Rectangular block of raised terrain.
struct Ridge {
  double lat_min = 0, lat_max = 0, lon_min = 0, lon_max = 0;
  double height_m = 1500.0;
};

struct VortexScenario {
  std::vector<VortexSpec> vortices;
  std::vector<Ridge> ridges;
  double background_hpa = 1010.0;
  double z850_background_m = 1500.0;
  double horizon_h = 120.0;
  /// Relative amplitude of the vortex circulation at each advection level.
  std::vector<double> level_factors = {0.8, 0.6, 0.4};

  void validate() const;
};

struct VortexFields {
  Field msl, u10, v10, z850, elevation;
  std::vector<Field> u_levels, v_levels;  // parallel to level_factors
  std::vector<std::optional<LatLon>> centers;  // analytic centre per vortex when active
};

/// Rankine tangential wind speed: linear inside the radius, 1/d outside,
/// exponentially damped beyond five radii.
double rankine_speed(double d_km, double radius_km, double vmax_ms);

VortexFields vortex_fields(const VortexScenario& scenario, double t_h, const GridSpec& grid);

nlohmann::json scenario_to_json(const VortexScenario& s);
VortexScenario scenario_from_json(const nlohmann::json& j);
VortexScenario load_scenario(const std::filesystem::path& path);

/// Single straight-track vortex with a random west-to-north heading, speed
/// in [speed_min, speed_max] km/h, starting inside the given box.
VortexScenario random_scenario(std::uint64_t seed, double speed_min_kmh = 10.0, double speed_max_kmh = 40.0,
                               double lat_min = 12.0, double lat_max = 18.0, double lon_min = 160.0,
                               double lon_max = 168.0);

/// Default tracker-experiment grid: 0.5 degree spacing over 0-55N, 100-180E.
GridSpec vortex_grid();

}  // namespace ensbench
