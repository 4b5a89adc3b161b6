#include "ensbench/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ensbench/error.hpp"

namespace ensbench {

double wrap_lon(double lon) {
  double w = std::fmod(lon, 360.0);
  if (w < 0.0) w += 360.0;
  if (w >= 360.0) w -= 360.0;
  return w;
}

bool GridSpec::periodic_lon() const {
  return std::abs(static_cast<double>(nlon) * std::abs(lon_step) - 360.0) < 1e-6;
}

void GridSpec::validate() const {
  require(nlat >= 1 && nlon >= 1, "grid must have at least one row and one column");
  require(std::isfinite(lat_start) && std::isfinite(lat_step) && std::isfinite(lon_start) &&
              std::isfinite(lon_step),
          "grid coordinates must be finite");
  const double first = lat(0);
  const double last = lat(nlat - 1);
  const double tol = 1e-9;
  require(first >= -90.0 - tol && first <= 90.0 + tol && last >= -90.0 - tol && last <= 90.0 + tol,
          "grid latitudes must lie within [-90, 90]: " + describe());
}

std::string GridSpec::describe() const {
  std::ostringstream os;
  os << nlat << "x" << nlon << " lat0=" << lat_start << " dlat=" << lat_step
     << " lon0=" << lon_start << " dlon=" << lon_step;
  return os.str();
}

Field::Field(GridSpec grid, double fill) : grid_(grid), values_(grid.size(), fill) {
  grid_.validate();
}

Field::Field(GridSpec grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
  grid_.validate();
  require(values_.size() == grid_.size(), "field value count does not match grid " + grid_.describe());
}

void Field::check_finite() const {
  for (double v : values_) require(std::isfinite(v), "field contains non-finite values");
}

LatWeights latitude_weights(const GridSpec& grid) {
  grid.validate();
  std::vector<double> w(grid.nlat);
  double sum = 0.0;
  for (std::size_t i = 0; i < grid.nlat; ++i) {
    // cos(90 deg) is 6e-17 in floating point; poles get exactly zero weight.
    const double lat = grid.lat(i);
    w[i] = std::abs(std::abs(lat) - 90.0) < 1e-12 ? 0.0 : std::max(0.0, std::cos(deg2rad(lat)));
    sum += w[i];
  }
  if (!(sum > 0.0)) fail(ErrorKind::DegenerateWeights, "all grid rows lie on a pole");
  const double mean = sum / static_cast<double>(grid.nlat);
  for (double& x : w) x /= mean;
  return {std::move(w)};
}

Field average_pool(const Field& field, std::size_t factor, PoolEdgePolicy policy) {
  require(factor > 0, "pooling factor must be positive");
  const GridSpec& g = field.grid();
  if (policy == PoolEdgePolicy::Reject) {
    require(g.nlat % factor == 0 && g.nlon % factor == 0,
            "pooling factor " + std::to_string(factor) + " does not divide grid " + g.describe());
  }
  const std::size_t out_lat = g.nlat / factor;
  const std::size_t out_lon = g.nlon / factor;
  require(out_lat >= 1 && out_lon >= 1, "pooling factor exceeds grid size");

  GridSpec out;
  out.nlat = out_lat;
  out.nlon = out_lon;
  const double half = 0.5 * static_cast<double>(factor - 1);
  out.lat_step = g.lat_step * static_cast<double>(factor);
  out.lon_step = g.lon_step * static_cast<double>(factor);
  out.lat_start = g.lat_start + half * g.lat_step;
  out.lon_start = g.lon_start + half * g.lon_step;

  std::vector<double> values(out.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t bi = 0; bi < out_lat; ++bi) {
    for (std::size_t bj = 0; bj < out_lon; ++bj) {
      double s = 0.0;
      for (std::size_t di = 0; di < factor; ++di)
        for (std::size_t dj = 0; dj < factor; ++dj) s += field.at(bi * factor + di, bj * factor + dj);
      values[bi * out_lon + bj] = s * inv;
    }
  }
  return Field(out, std::move(values));
}

double great_circle_km(LatLon a, LatLon b) {
  const double p1 = deg2rad(a.lat);
  const double p2 = deg2rad(b.lat);
  const double dp = p2 - p1;
  const double dl = deg2rad(wrap_lon(b.lon) - wrap_lon(a.lon));
  const double s1 = std::sin(dp / 2.0);
  const double s2 = std::sin(dl / 2.0);
  double h = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

double initial_bearing_deg(LatLon a, LatLon b) {
  const double p1 = deg2rad(a.lat);
  const double p2 = deg2rad(b.lat);
  const double dl = deg2rad(b.lon - a.lon);
  const double y = std::sin(dl) * std::cos(p2);
  const double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  double brg = rad2deg(std::atan2(y, x));
  if (brg < 0.0) brg += 360.0;
  return brg;
}

LatLon destination(LatLon start, double bearing_deg, double dist_km) {
  const double delta = dist_km / kEarthRadiusKm;
  const double th = deg2rad(bearing_deg);
  const double p1 = deg2rad(start.lat);
  const double l1 = deg2rad(start.lon);
  const double sp2 = std::sin(p1) * std::cos(delta) + std::cos(p1) * std::sin(delta) * std::cos(th);
  const double p2 = std::asin(std::clamp(sp2, -1.0, 1.0));
  const double l2 = l1 + std::atan2(std::sin(th) * std::sin(delta) * std::cos(p1),
                                    std::cos(delta) - std::sin(p1) * std::sin(p2));
  return {rad2deg(p2), wrap_lon(rad2deg(l2))};
}

PlaneOffset tangent_offset(LatLon a, LatLon b) {
  double dlon = wrap_lon(b.lon) - wrap_lon(a.lon);
  if (dlon > 180.0) dlon -= 360.0;
  if (dlon < -180.0) dlon += 360.0;
  const double km_per_rad = kEarthRadiusKm;
  return {deg2rad(dlon) * std::cos(deg2rad(a.lat)) * km_per_rad, deg2rad(b.lat - a.lat) * km_per_rad};
}

LatLon displace(LatLon from, PlaneOffset offset) {
  const double dist = std::hypot(offset.east_km, offset.north_km);
  if (dist == 0.0) return {from.lat, wrap_lon(from.lon)};
  const double brg = rad2deg(std::atan2(offset.east_km, offset.north_km));
  return destination(from, brg, dist);
}

}  // namespace ensbench
