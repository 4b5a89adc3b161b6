#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensbench/grid.hpp"
#include "ensbench/timeutil.hpp"
#include "ensbench/vortex.hpp"

namespace ensbench {

struct TrackerConfig {
  double radius_km = 445.0;
  std::size_t pool_factor = 5;
  double vorticity_threshold = 5e-5;  // s^-1, cyclonic sign
  double vorticity_radius_km = 278.0;
  double z850_radius_km = 278.0;
  double elevation_max_m = 1000.0;
  double cap_factor = 3.0;
  double step_hours = 6.0;
  double advection_radius_km = 445.0;
  bool vorticity_seeds = true;
  bool require_msl_minimum = true;
  bool require_vorticity = true;
  bool require_z850 = true;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Fields the tracker reads at one lead; all share one grid.
struct TrackFields {
  Field msl, u10, v10, z850, elevation;
  std::vector<Field> u_levels, v_levels;

  void validate() const;
  static TrackFields from(const VortexFields& f);
};

/// Relative vorticity of (u, v) in s^-1 on the sphere, centred differences.
Field relative_vorticity(const Field& u, const Field& v);

struct Candidate {
  LatLon pos;
  double msl = 0.0;
  double vorticity = 0.0;  // max cyclonic vorticity nearby
};

struct Detection {
  std::vector<Candidate> candidates;  // nearest to the prior first
  std::size_t rejected_elevation = 0;
};

Detection detect_candidates(const TrackFields& fields, LatLon prior, const TrackerConfig& cfg);

/// Mean wind over the advection levels inside the advection disc, in m/s.
PlaneOffset advection_wind(const TrackFields& fields, LatLon at, const TrackerConfig& cfg);

/// Next-position estimate from the last one or two positions (oldest first).
LatLon predict_displacement(std::span<const LatLon> history, const TrackFields& fields, const TrackerConfig& cfg);

struct TrackPoint {
  double lead_hours = 0.0;
  double lat = 0.0, lon = 0.0;
  double msl_min = 0.0;

  LatLon pos() const { return {lat, lon}; }
};

enum class TrackEnd { Lost, Elevation, Horizon };
std::string to_string(TrackEnd e);
TrackEnd parse_track_end(const std::string& s);

struct Track {
  int member = 0;
  std::vector<TrackPoint> points;
  TrackEnd terminated = TrackEnd::Lost;

  const TrackPoint* at_lead(double lead_hours) const;
};

/// leads[0] is the analysis. Empty track with reason lost when the initial
/// search finds nothing.
Track track_storm(std::span<const TrackFields> leads, LatLon init_obs, const TrackerConfig& cfg, int member = 0);

struct BestTrackPoint {
  TimePoint time;
  LatLon pos;
};

struct BestTrack {
  std::string id;
  std::vector<BestTrackPoint> points;  // chronological

  /// Position at `t`, interpolated between bracketing points.
  std::optional<LatLon> position(TimePoint t) const;
  /// Observed motion (km per step direction only) around `t`.
  std::optional<PlaneOffset> motion(TimePoint t) const;
};

struct AtCt {
  double at_km = 0.0;
  double ct_km = 0.0;
};

/// Along-track (ahead positive) and cross-track (right of track positive in
/// the north, reversed in the south) components of forecast - observed on the
/// tangent plane at the observed position. Zero motion throws
/// UndefinedDecomposition.
AtCt at_ct(LatLon forecast, LatLon observed, PlaneOffset motion);
AtCt at_ct(LatLon forecast, const BestTrack& best, TimePoint valid);

/// Coordinate-wise mean, longitudes unwrapped around the first point.
LatLon mean_position(std::span<const LatLon> points);

struct TrackCase {
  std::string id;
  TimePoint init{};
  std::vector<Track> members;
  BestTrack best;
};

struct TrackStatsOptions {
  double min_fraction = 2.0 / 3.0;
  double step_hours = 6.0;
  double max_lead_hours = 120.0;
};

struct CaseTrackStats {
  std::string id;
  bool included = false;
  std::string note;  // exclusion reason or shrinking-membership flag
  std::vector<double> lead_hours;
  std::vector<double> error_km, spread_km, at_km, ct_km;
  std::vector<std::size_t> members_used;
  double acc_error_km = 0.0, acc_spread_km = 0.0;
};

struct LeadTrackStats {
  double lead_hours = 0.0;
  std::size_t cases = 0;
  double error_km = 0.0;   // RMS over cases of ensemble-mean position error
  double spread_km = 0.0;  // RMS over cases of per-case spread
  double at_km = 0.0, ct_km = 0.0;  // means over cases
};

struct EnsembleTrackStats {
  std::vector<LeadTrackStats> leads;
  double acc_error_km = 0.0, acc_spread_km = 0.0;
  std::vector<CaseTrackStats> cases;
  std::size_t excluded = 0;
};

EnsembleTrackStats ensemble_track_stats(std::span<const TrackCase> cases, const TrackStatsOptions& opts = {});

// I/O
std::map<std::string, BestTrack> read_best_tracks_csv(std::istream& is);
void write_best_track_csv(std::ostream& os, const BestTrack& bt);
void write_tracks_csv(std::ostream& os, std::span<const Track> tracks, const std::string& meta);
/// One row per point with the case id and initialization time in front.
void write_tracks_csv(std::ostream& os, std::span<const TrackCase> cases, const std::string& meta);
nlohmann::json tracks_to_json(std::span<const Track> tracks);
std::vector<Track> tracks_from_json(const nlohmann::json& j);
nlohmann::json track_stats_to_json(const EnsembleTrackStats& s);
void write_track_stats_csv(std::ostream& os, const EnsembleTrackStats& s, const std::string& meta);

}  // namespace ensbench
