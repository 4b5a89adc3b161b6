#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ensbench {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double d) { return d * kPi / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

/// Wrap a longitude into [0, 360).
double wrap_lon(double lon);

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

/// Regular lat-lon grid. Latitudes run lat_start + i*lat_step, longitudes
/// lon_start + j*lon_step (mod 360).
struct GridSpec {
  std::size_t nlat = 1;
  std::size_t nlon = 1;
  double lat_start = 0.0;
  double lat_step = 1.0;
  double lon_start = 0.0;
  double lon_step = 1.0;

  std::size_t size() const { return nlat * nlon; }
  double lat(std::size_t i) const { return lat_start + static_cast<double>(i) * lat_step; }
  double lon(std::size_t j) const { return wrap_lon(lon_start + static_cast<double>(j) * lon_step); }
  LatLon point(std::size_t i, std::size_t j) const { return {lat(i), lon(j)}; }

  /// True when the longitudes close a full circle, so column neighbours wrap.
  bool periodic_lon() const;

  /// Throws InvalidArgument if the grid violates its invariants.
  void validate() const;

  std::string describe() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// One H x W slice of real values, row-major (latitude outer).
class Field {
 public:
  Field() = default;
  explicit Field(GridSpec grid, double fill = 0.0);
  Field(GridSpec grid, std::vector<double> values);

  const GridSpec& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double& at(std::size_t i, std::size_t j) { return values_[i * grid_.nlon + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * grid_.nlon + j]; }

  /// Throws InvalidArgument if any entry is non-finite.
  void check_finite() const;

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

/// Per-row latitude weights normalized to unit mean.
struct LatWeights {
  std::vector<double> weights;

  static LatWeights uniform(std::size_t nlat) { return {std::vector<double>(nlat, 1.0)}; }
};

LatWeights latitude_weights(const GridSpec& grid);

enum class PoolEdgePolicy { Reject, Truncate };

/// Mean over factor x factor blocks; output coordinates sit on block centres.
Field average_pool(const Field& field, std::size_t factor,
                   PoolEdgePolicy policy = PoolEdgePolicy::Reject);

/// Haversine distance on a sphere of radius kEarthRadiusKm.
double great_circle_km(LatLon a, LatLon b);

/// Initial bearing from a to b in degrees clockwise from north, in [0, 360).
double initial_bearing_deg(LatLon a, LatLon b);

/// Point reached travelling dist_km from start along the given initial bearing.
LatLon destination(LatLon start, double bearing_deg, double dist_km);

/// East/north components (km) of b relative to a on the equirectangular
/// tangent plane at a.
struct PlaneOffset {
  double east_km = 0.0;
  double north_km = 0.0;
};
PlaneOffset tangent_offset(LatLon a, LatLon b);

/// Apply a tangent-plane displacement at `from` along the great circle with
/// the same bearing and length.
LatLon displace(LatLon from, PlaneOffset offset);

}  // namespace ensbench
