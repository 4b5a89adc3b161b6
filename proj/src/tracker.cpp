#include "ensbench/tracker.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "ensbench/error.hpp"

namespace ensbench {

void TrackerConfig::validate() const {
  require(radius_km > 0.0, "track.radius_km must be positive");
  require(pool_factor >= 1, "track.pool_factor must be >= 1");
  require(vorticity_radius_km > 0.0 && z850_radius_km > 0.0 && advection_radius_km > 0.0,
          "tracker search radii must be positive");
  require(cap_factor > 0.0, "track.cap_factor must be positive");
  require(step_hours > 0.0, "track.step_hours must be positive");
}

nlohmann::json TrackerConfig::to_json() const {
  return {{"radius_km", radius_km},
          {"pool_factor", pool_factor},
          {"vorticity_threshold", vorticity_threshold},
          {"vorticity_radius_km", vorticity_radius_km},
          {"z850_radius_km", z850_radius_km},
          {"elevation_max_m", elevation_max_m},
          {"cap_factor", cap_factor},
          {"step_hours", step_hours},
          {"advection_radius_km", advection_radius_km},
          {"vorticity_seeds", vorticity_seeds},
          {"require_msl_minimum", require_msl_minimum},
          {"require_vorticity", require_vorticity},
          {"require_z850", require_z850}};
}

void TrackFields::validate() const {
  const auto& g = msl.grid();
  require(msl.values().size() == g.size() && g.size() > 0, "tracker fields are empty");
  auto same = [&](const Field& f, const char* name) {
    require(f.grid() == g, std::string("tracker field ") + name + " is on a different grid than MSL");
  };
  same(u10, "u10");
  same(v10, "v10");
  same(z850, "z850");
  same(elevation, "elevation");
  require(u_levels.size() == v_levels.size(), "advection levels need matching u and v fields");
  for (const auto& f : u_levels) same(f, "u_level");
  for (const auto& f : v_levels) same(f, "v_level");
}

TrackFields TrackFields::from(const VortexFields& f) {
  return {f.msl, f.u10, f.v10, f.z850, f.elevation, f.u_levels, f.v_levels};
}

namespace {

constexpr double kKmPerDegree = kEarthRadiusKm * kPi / 180.0;

std::size_t wrap_col(long j, std::size_t nlon) {
  const long n = static_cast<long>(nlon);
  return static_cast<std::size_t>(((j % n) + n) % n);
}

/// Strict local extremum over the 8-neighbourhood: no neighbour beyond the
/// centre and at least one strictly inside. Non-periodic edges never qualify.
bool local_extremum(const Field& f, std::size_t i, std::size_t j, bool minimum) {
  const auto& g = f.grid();
  const bool periodic = g.periodic_lon();
  if (g.nlat < 3 || i == 0 || i + 1 >= g.nlat) return false;
  if (!periodic && (j == 0 || j + 1 >= g.nlon)) return false;
  const double c = f.at(i, j);
  bool strict = false;
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj) {
      if (di == 0 && dj == 0) continue;
      const double v = f.at(i + di, wrap_col(static_cast<long>(j) + dj, g.nlon));
      const double d = minimum ? v - c : c - v;
      if (d < 0.0) return false;
      if (d > 0.0) strict = true;
    }
  return strict;
}

template <typename Fn>
void for_each_within(const GridSpec& g, LatLon c, double radius_km, Fn fn) {
  const double band = radius_km / kKmPerDegree + std::abs(g.lat_step);
  for (std::size_t i = 0; i < g.nlat; ++i) {
    if (std::abs(g.lat(i) - c.lat) > band) continue;
    for (std::size_t j = 0; j < g.nlon; ++j)
      if (great_circle_km(c, g.point(i, j)) <= radius_km) fn(i, j);
  }
}

double parabolic_offset(double a, double b, double c) {
  const double den = a - 2.0 * b + c;
  if (den <= 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
}

Field cyclonic(const Field& vort) {
  Field out = vort;
  for (std::size_t i = 0; i < out.grid().nlat; ++i) {
    const double s = out.grid().lat(i) >= 0.0 ? 1.0 : -1.0;
    for (std::size_t j = 0; j < out.grid().nlon; ++j) out.at(i, j) *= s;
  }
  return out;
}

}  // namespace

Field relative_vorticity(const Field& u, const Field& v) {
  require(u.grid() == v.grid(), "u and v must share a grid");
  const auto& g = u.grid();
  Field z(g);
  const double R = kEarthRadiusKm * 1000.0;
  const bool periodic = g.periodic_lon();
  const double dlam = deg2rad(g.lon_step), dphi = deg2rad(g.lat_step);
  for (std::size_t i = 0; i < g.nlat; ++i) {
    const double cphi = std::cos(deg2rad(g.lat(i)));
    if (cphi < 1e-9) continue;
    for (std::size_t j = 0; j < g.nlon; ++j) {
      double dv = 0.0;
      if (g.nlon > 1) {
        std::size_t jm, jp;
        double span;
        if (periodic) {
          jm = wrap_col(static_cast<long>(j) - 1, g.nlon);
          jp = wrap_col(static_cast<long>(j) + 1, g.nlon);
          span = 2.0;
        } else {
          jm = j == 0 ? 0 : j - 1;
          jp = j + 1 >= g.nlon ? g.nlon - 1 : j + 1;
          span = static_cast<double>(jp - jm);
        }
        dv = (v.at(i, jp) - v.at(i, jm)) / (span * dlam);
      }
      double du = 0.0;
      if (g.nlat > 1) {
        const std::size_t im = i == 0 ? 0 : i - 1;
        const std::size_t ip = i + 1 >= g.nlat ? g.nlat - 1 : i + 1;
        const double span = static_cast<double>(ip - im);
        du = (u.at(ip, j) * std::cos(deg2rad(g.lat(ip))) - u.at(im, j) * std::cos(deg2rad(g.lat(im)))) /
             (span * dphi);
      }
      z.at(i, j) = (dv - du) / (R * cphi);
    }
  }
  return z;
}

Detection detect_candidates(const TrackFields& fields, LatLon prior, const TrackerConfig& cfg) {
  cfg.validate();
  fields.validate();
  const auto& g = fields.msl.grid();
  const std::size_t f = cfg.pool_factor;
  require(g.nlat >= f && g.nlon >= f, "grid is smaller than the pooling factor");

  const Field pooled_msl = average_pool(fields.msl, f, PoolEdgePolicy::Truncate);
  const Field vort = cyclonic(relative_vorticity(fields.u10, fields.v10));
  const Field pooled_vort = average_pool(vort, f, PoolEdgePolicy::Truncate);
  const auto& pg = pooled_msl.grid();

  std::vector<std::pair<std::size_t, std::size_t>> msl_minima, seeds;
  for (std::size_t I = 0; I < pg.nlat; ++I)
    for (std::size_t J = 0; J < pg.nlon; ++J) {
      const bool near = great_circle_km(prior, pg.point(I, J)) <= cfg.radius_km;
      if (local_extremum(pooled_msl, I, J, true)) {
        msl_minima.emplace_back(I, J);
        if (near) seeds.emplace_back(I, J);
      } else if (cfg.vorticity_seeds && near && pooled_vort.at(I, J) > 0.0 &&
                 local_extremum(pooled_vort, I, J, false)) {
        seeds.emplace_back(I, J);
      }
    }

  Detection det;
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  const bool periodic = g.periodic_lon();
  for (auto [I, J] : seeds) {
    // Native minimum over the seed block and its neighbouring blocks.
    const long r0 = static_cast<long>(I * f) - static_cast<long>(f);
    const long r1 = static_cast<long>((I + 2) * f);
    const long c0 = static_cast<long>(J * f) - static_cast<long>(f);
    const long c1 = static_cast<long>((J + 2) * f);
    bool found = false;
    std::size_t bi = 0, bj = 0;
    double best = 0.0;
    for (long i = std::max(0L, r0); i < std::min(static_cast<long>(g.nlat), r1); ++i)
      for (long jj = c0; jj < c1; ++jj) {
        if (!periodic && (jj < 0 || jj >= static_cast<long>(g.nlon))) continue;
        const std::size_t j = wrap_col(jj, g.nlon);
        const double v = fields.msl.at(static_cast<std::size_t>(i), j);
        if (!found || v < best) {
          found = true;
          best = v;
          bi = static_cast<std::size_t>(i);
          bj = j;
        }
      }
    if (!found || !local_extremum(fields.msl, bi, bj, true)) continue;
    if (std::find(seen.begin(), seen.end(), std::make_pair(bi, bj)) != seen.end()) continue;
    seen.emplace_back(bi, bj);

    const double oi = parabolic_offset(fields.msl.at(bi - 1, bj), best, fields.msl.at(bi + 1, bj));
    const double oj = parabolic_offset(fields.msl.at(bi, wrap_col(static_cast<long>(bj) - 1, g.nlon)), best,
                                       fields.msl.at(bi, wrap_col(static_cast<long>(bj) + 1, g.nlon)));
    Candidate cand;
    cand.pos = {g.lat(bi) + oi * g.lat_step, wrap_lon(g.lon(bj) + oj * g.lon_step)};
    cand.msl = best;
    if (great_circle_km(prior, cand.pos) > cfg.radius_km) continue;

    if (cfg.require_msl_minimum) {
      const long ci = static_cast<long>(bi / f), cj = static_cast<long>(bj / f);
      bool ok = false;
      for (auto [mi, mj] : msl_minima) {
        long dj = std::abs(static_cast<long>(mj) - cj);
        if (pg.periodic_lon()) dj = std::min(dj, static_cast<long>(pg.nlon) - dj);
        ok = ok || (std::abs(static_cast<long>(mi) - ci) <= 1 && dj <= 1);
      }
      if (!ok) continue;
    }

    double vmax = -1e300;
    for_each_within(g, cand.pos, cfg.vorticity_radius_km, [&](std::size_t i, std::size_t j) {
      vmax = std::max(vmax, vort.at(i, j));
    });
    cand.vorticity = vmax;
    if (cfg.require_vorticity && !(vmax >= cfg.vorticity_threshold)) continue;

    if (cfg.require_z850) {
      bool zmin = false;
      for_each_within(g, cand.pos, cfg.z850_radius_km, [&](std::size_t i, std::size_t j) {
        zmin = zmin || local_extremum(fields.z850, i, j, true);
      });
      if (!zmin) continue;
    }

    if (fields.elevation.at(bi, bj) > cfg.elevation_max_m) {
      ++det.rejected_elevation;
      continue;
    }
    det.candidates.push_back(cand);
  }
  std::stable_sort(det.candidates.begin(), det.candidates.end(), [&](const Candidate& a, const Candidate& b) {
    return great_circle_km(prior, a.pos) < great_circle_km(prior, b.pos);
  });
  return det;
}

PlaneOffset advection_wind(const TrackFields& fields, LatLon at, const TrackerConfig& cfg) {
  const auto& g = fields.msl.grid();
  const bool levels = !fields.u_levels.empty();
  double su = 0.0, sv = 0.0;
  std::size_t n = 0;
  for_each_within(g, at, cfg.advection_radius_km, [&](std::size_t i, std::size_t j) {
    if (levels) {
      for (std::size_t l = 0; l < fields.u_levels.size(); ++l) {
        su += fields.u_levels[l].at(i, j);
        sv += fields.v_levels[l].at(i, j);
        ++n;
      }
    } else {
      su += fields.u10.at(i, j);
      sv += fields.v10.at(i, j);
      ++n;
    }
  });
  if (n == 0) return {};
  return {su / static_cast<double>(n), sv / static_cast<double>(n)};
}

LatLon predict_displacement(std::span<const LatLon> history, const TrackFields& fields, const TrackerConfig& cfg) {
  require(!history.empty(), "displacement prediction needs at least one position");
  const LatLon cur = history.back();
  const PlaneOffset wind = advection_wind(fields, cur, cfg);
  const double secs = cfg.step_hours * 3600.0;
  PlaneOffset step{wind.east_km * secs / 1000.0, wind.north_km * secs / 1000.0};
  if (history.size() >= 2) {
    const LatLon prev = history[history.size() - 2];
    const PlaneOffset lin = tangent_offset(prev, cur);
    step = {0.5 * (step.east_km + lin.east_km), 0.5 * (step.north_km + lin.north_km)};
    const double cap = cfg.cap_factor * great_circle_km(prev, cur);
    const double len = std::hypot(step.east_km, step.north_km);
    if (len > cap) {
      const double s = len > 0.0 ? cap / len : 0.0;
      step = {step.east_km * s, step.north_km * s};
    }
  }
  return displace(cur, step);
}

std::string to_string(TrackEnd e) {
  switch (e) {
    case TrackEnd::Lost: return "lost";
    case TrackEnd::Elevation: return "elevation";
    case TrackEnd::Horizon: return "horizon";
  }
  return "lost";
}

TrackEnd parse_track_end(const std::string& s) {
  if (s == "lost") return TrackEnd::Lost;
  if (s == "elevation") return TrackEnd::Elevation;
  if (s == "horizon") return TrackEnd::Horizon;
  fail(ErrorKind::Data, "unknown track termination reason '" + s + "'");
}

const TrackPoint* Track::at_lead(double lead_hours) const {
  for (const auto& p : points)
    if (std::abs(p.lead_hours - lead_hours) < 1e-6) return &p;
  return nullptr;
}

Track track_storm(std::span<const TrackFields> leads, LatLon init_obs, const TrackerConfig& cfg, int member) {
  require(!leads.empty(), "tracking needs at least the analysis fields");
  Track t;
  t.member = member;
  auto end_reason = [](const Detection& d) { return d.rejected_elevation > 0 ? TrackEnd::Elevation : TrackEnd::Lost; };

  const auto det0 = detect_candidates(leads[0], init_obs, cfg);
  if (det0.candidates.empty()) {
    t.terminated = end_reason(det0);
    return t;
  }
  t.points.push_back({0.0, det0.candidates[0].pos.lat, det0.candidates[0].pos.lon, det0.candidates[0].msl});

  for (std::size_t k = 1; k < leads.size(); ++k) {
    std::vector<LatLon> hist;
    if (t.points.size() >= 2) hist.push_back(t.points[t.points.size() - 2].pos());
    hist.push_back(t.points.back().pos());
    const LatLon pred = predict_displacement(hist, leads[k - 1], cfg);
    auto det = detect_candidates(leads[k], pred, cfg);
    if (t.points.size() >= 2) {
      const double cap = cfg.cap_factor * great_circle_km(hist[0], hist[1]);
      std::erase_if(det.candidates,
                    [&](const Candidate& c) { return great_circle_km(hist[1], c.pos) > cap; });
    }
    if (det.candidates.empty()) {
      t.terminated = end_reason(det);
      return t;
    }
    const auto& c = det.candidates[0];
    t.points.push_back({static_cast<double>(k) * cfg.step_hours, c.pos.lat, c.pos.lon, c.msl});
  }
  t.terminated = TrackEnd::Horizon;
  return t;
}

namespace {

LatLon interpolate(LatLon a, LatLon b, double frac) {
  const PlaneOffset o = tangent_offset(a, b);
  return displace(a, {o.east_km * frac, o.north_km * frac});
}

}  // namespace

std::optional<LatLon> BestTrack::position(TimePoint t) const {
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k].time == t) return points[k].pos;
    if (k + 1 < points.size() && points[k].time < t && t < points[k + 1].time) {
      const double span = static_cast<double>((points[k + 1].time - points[k].time).count());
      const double frac = static_cast<double>((t - points[k].time).count()) / span;
      return interpolate(points[k].pos, points[k + 1].pos, frac);
    }
  }
  return std::nullopt;
}

std::optional<PlaneOffset> BestTrack::motion(TimePoint t) const {
  const std::size_t n = points.size();
  if (n < 2) return std::nullopt;
  for (std::size_t k = 0; k < n; ++k) {
    if (points[k].time == t) {
      const std::size_t a = k == 0 ? 0 : k - 1;
      const std::size_t b = k + 1 < n ? k + 1 : k;
      if (a == b) return std::nullopt;
      return tangent_offset(points[a].pos, points[b].pos);
    }
    if (k + 1 < n && points[k].time < t && t < points[k + 1].time)
      return tangent_offset(points[k].pos, points[k + 1].pos);
  }
  return std::nullopt;
}

AtCt at_ct(LatLon forecast, LatLon observed, PlaneOffset motion) {
  const double m = std::hypot(motion.east_km, motion.north_km);
  if (!(m > 1e-9)) fail(ErrorKind::UndefinedDecomposition, "observed track has zero motion; AT/CT undefined");
  const double ue = motion.east_km / m, un = motion.north_km / m;
  // Equirectangular offset scaled at the mid latitude of the two points.
  PlaneOffset d = tangent_offset(observed, forecast);
  d.east_km *= std::cos(deg2rad(0.5 * (observed.lat + forecast.lat))) / std::cos(deg2rad(observed.lat));
  AtCt r{d.east_km * ue + d.north_km * un, d.east_km * un - d.north_km * ue};
  if (observed.lat < 0.0) r.ct_km = -r.ct_km;
  return r;
}

AtCt at_ct(LatLon forecast, const BestTrack& best, TimePoint valid) {
  const auto obs = best.position(valid);
  const auto mot = best.motion(valid);
  if (!obs || !mot)
    fail(ErrorKind::UndefinedDecomposition, "best track " + best.id + " does not bracket " + format_time(valid));
  return at_ct(forecast, *obs, *mot);
}

LatLon mean_position(std::span<const LatLon> points) {
  require(!points.empty(), "mean position of an empty set");
  const double ref = points[0].lon;
  double slat = 0.0, sdl = 0.0;
  for (const auto& p : points) {
    double dl = std::fmod(p.lon - ref, 360.0);
    if (dl > 180.0) dl -= 360.0;
    if (dl <= -180.0) dl += 360.0;
    slat += p.lat;
    sdl += dl;
  }
  const double n = static_cast<double>(points.size());
  return {slat / n, wrap_lon(ref + sdl / n)};
}

EnsembleTrackStats ensemble_track_stats(std::span<const TrackCase> cases, const TrackStatsOptions& opts) {
  require(opts.step_hours > 0.0 && opts.max_lead_hours >= opts.step_hours, "invalid track statistics lead range");
  require(opts.min_fraction >= 0.0 && opts.min_fraction <= 1.0, "min_fraction must lie in [0, 1]");
  const auto n_leads = static_cast<std::size_t>(std::floor(opts.max_lead_hours / opts.step_hours + 1e-9));
  EnsembleTrackStats out;
  std::vector<double> err_sq(n_leads, 0.0), spr_sq(n_leads, 0.0), at_sum(n_leads, 0.0), ct_sum(n_leads, 0.0);
  std::vector<std::size_t> count(n_leads, 0), atct_count(n_leads, 0);

  for (const auto& c : cases) {
    CaseTrackStats cs;
    cs.id = c.id;
    const std::size_t total = c.members.size();
    std::size_t max_used = 0;
    bool shrinks = false;
    for (std::size_t k = 0; k < n_leads; ++k) {
      const double lead = static_cast<double>(k + 1) * opts.step_hours;
      std::vector<LatLon> pos;
      for (const auto& m : c.members)
        if (const auto* p = m.at_lead(lead)) pos.push_back(p->pos());
      if (total == 0 || pos.size() < 2) continue;
      if (static_cast<double>(pos.size()) + 1e-12 < opts.min_fraction * static_cast<double>(total)) continue;
      const auto valid = c.init + std::chrono::hours{static_cast<long long>(std::llround(lead))};
      const auto obs = c.best.position(valid);
      if (!obs) continue;
      const LatLon mean = mean_position(pos);
      double s2 = 0.0;
      for (const auto& p : pos) s2 += great_circle_km(mean, p) * great_circle_km(mean, p);
      const double spread = std::sqrt(s2 / static_cast<double>(pos.size()));
      const double err = great_circle_km(mean, *obs);
      double at = std::nan(""), ct = std::nan("");
      if (const auto mot = c.best.motion(valid); mot && std::hypot(mot->east_km, mot->north_km) > 1e-9) {
        const auto d = at_ct(mean, *obs, *mot);
        at = d.at_km;
        ct = d.ct_km;
        at_sum[k] += at;
        ct_sum[k] += ct;
        ++atct_count[k];
      }
      if (max_used > 0 && pos.size() < max_used) shrinks = true;
      max_used = std::max(max_used, pos.size());
      cs.lead_hours.push_back(lead);
      cs.error_km.push_back(err);
      cs.spread_km.push_back(spread);
      cs.at_km.push_back(at);
      cs.ct_km.push_back(ct);
      cs.members_used.push_back(pos.size());
      cs.acc_error_km += err;
      cs.acc_spread_km += spread;
      err_sq[k] += err * err;
      spr_sq[k] += spread * spread;
      ++count[k];
    }
    cs.included = !cs.lead_hours.empty();
    if (!cs.included) {
      cs.note = "excluded: fewer than " + std::to_string(opts.min_fraction) + " of members detected the storm";
      ++out.excluded;
    } else if (shrinks) {
      cs.note = "ensemble membership shrinks with lead";
    }
    out.cases.push_back(std::move(cs));
  }

  for (std::size_t k = 0; k < n_leads; ++k) {
    LeadTrackStats ls;
    ls.lead_hours = static_cast<double>(k + 1) * opts.step_hours;
    ls.cases = count[k];
    if (count[k] > 0) {
      ls.error_km = std::sqrt(err_sq[k] / static_cast<double>(count[k]));
      ls.spread_km = std::sqrt(spr_sq[k] / static_cast<double>(count[k]));
      out.acc_error_km += ls.error_km;
      out.acc_spread_km += ls.spread_km;
    }
    if (atct_count[k] > 0) {
      ls.at_km = at_sum[k] / static_cast<double>(atct_count[k]);
      ls.ct_km = ct_sum[k] / static_cast<double>(atct_count[k]);
    }
    out.leads.push_back(ls);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    else if (ch == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') cur += ch;
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }
  return out;
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::optional<double> to_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::istringstream is(s);
  double v;
  is >> v;
  if (!is || !is.eof() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::map<std::string, BestTrack> read_best_tracks_csv(std::istream& is) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  if (header.empty()) fail(ErrorKind::Data, "best-track CSV has no header row");
  long c_sid = -1, c_time = -1, c_lat = -1, c_lon = -1;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const auto h = upper(header[k]);
    if (h == "SID" || h == "STORM_ID" || h == "ID") c_sid = static_cast<long>(k);
    else if (h == "ISO_TIME" || h == "TIME") c_time = static_cast<long>(k);
    else if (h == "LAT" || h == "USA_LAT") c_lat = c_lat < 0 ? static_cast<long>(k) : c_lat;
    else if (h == "LON" || h == "USA_LON") c_lon = c_lon < 0 ? static_cast<long>(k) : c_lon;
  }
  if (c_sid < 0 || c_time < 0 || c_lat < 0 || c_lon < 0)
    fail(ErrorKind::Data, "best-track CSV needs SID, ISO_TIME, LAT and LON columns");

  std::map<std::string, BestTrack> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_csv(line);
    const auto need = static_cast<std::size_t>(std::max({c_sid, c_time, c_lat, c_lon}));
    if (f.size() <= need) fail(ErrorKind::Data, "best-track CSV row " + std::to_string(row) + " has too few columns");
    const auto lat = to_number(f[static_cast<std::size_t>(c_lat)]);
    const auto lon = to_number(f[static_cast<std::size_t>(c_lon)]);
    if (!lat || !lon) continue;  // units row or missing position
    TimePoint t;
    try {
      t = parse_time(f[static_cast<std::size_t>(c_time)]);
    } catch (const Error&) {
      continue;
    }
    auto& bt = out[f[static_cast<std::size_t>(c_sid)]];
    bt.id = f[static_cast<std::size_t>(c_sid)];
    bt.points.push_back({t, {*lat, wrap_lon(*lon)}});
  }
  for (auto& [id, bt] : out) {
    std::stable_sort(bt.points.begin(), bt.points.end(),
                     [](const BestTrackPoint& a, const BestTrackPoint& b) { return a.time < b.time; });
    bt.points.erase(std::unique(bt.points.begin(), bt.points.end(),
                                [](const BestTrackPoint& a, const BestTrackPoint& b) { return a.time == b.time; }),
                    bt.points.end());
  }
  return out;
}

void write_best_track_csv(std::ostream& os, const BestTrack& bt) {
  os << "SID,ISO_TIME,LAT,LON\n";
  os.precision(10);
  for (const auto& p : bt.points) os << bt.id << ',' << format_time(p.time) << ',' << p.pos.lat << ',' << p.pos.lon << '\n';
}

void write_tracks_csv(std::ostream& os, std::span<const Track> tracks, const std::string& meta) {
  if (!meta.empty()) os << "# " << meta << '\n';
  os << "member,lead_hours,lat,lon,msl_min,terminated\n";
  os.precision(10);
  for (const auto& t : tracks)
    for (const auto& p : t.points)
      os << t.member << ',' << p.lead_hours << ',' << p.lat << ',' << p.lon << ',' << p.msl_min << ','
         << to_string(t.terminated) << '\n';
}

void write_tracks_csv(std::ostream& os, std::span<const TrackCase> cases, const std::string& meta) {
  if (!meta.empty()) os << "# " << meta << '\n';
  os << "case,init,member,lead_hours,lat,lon,msl_min,terminated\n";
  os.precision(10);
  for (const auto& c : cases)
    for (const auto& t : c.members)
      for (const auto& p : t.points)
        os << c.id << ',' << format_time(c.init) << ',' << t.member << ',' << p.lead_hours << ',' << p.lat << ','
           << p.lon << ',' << p.msl_min << ',' << to_string(t.terminated) << '\n';
}

nlohmann::json tracks_to_json(std::span<const Track> tracks) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tracks) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : t.points)
      pts.push_back({{"lead_hours", p.lead_hours}, {"lat", p.lat}, {"lon", p.lon}, {"msl_min", p.msl_min}});
    arr.push_back({{"member", t.member}, {"terminated", to_string(t.terminated)}, {"points", pts}});
  }
  return arr;
}

std::vector<Track> tracks_from_json(const nlohmann::json& j) {
  std::vector<Track> out;
  try {
    for (const auto& tj : j) {
      Track t;
      t.member = tj.at("member").get<int>();
      t.terminated = parse_track_end(tj.at("terminated").get<std::string>());
      for (const auto& p : tj.at("points"))
        t.points.push_back({p.at("lead_hours").get<double>(), p.at("lat").get<double>(), p.at("lon").get<double>(),
                            p.at("msl_min").get<double>()});
      out.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, std::string("malformed track JSON: ") + e.what());
  }
  return out;
}

nlohmann::json track_stats_to_json(const EnsembleTrackStats& s) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json leads = nlohmann::json::array();
  for (const auto& l : s.leads)
    leads.push_back({{"lead_hours", l.lead_hours}, {"cases", l.cases}, {"error_km", l.error_km},
                     {"spread_km", l.spread_km}, {"at_km", l.at_km}, {"ct_km", l.ct_km}});
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : s.cases) {
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t k = 0; k < c.lead_hours.size(); ++k)
      per.push_back({{"lead_hours", c.lead_hours[k]}, {"error_km", c.error_km[k]}, {"spread_km", c.spread_km[k]},
                     {"at_km", num(c.at_km[k])}, {"ct_km", num(c.ct_km[k])}, {"members", c.members_used[k]}});
    cases.push_back({{"id", c.id}, {"included", c.included}, {"note", c.note}, {"acc_error_km", c.acc_error_km},
                     {"acc_spread_km", c.acc_spread_km}, {"leads", per}});
  }
  return {{"leads", leads},         {"acc_error_km", s.acc_error_km}, {"acc_spread_km", s.acc_spread_km},
          {"excluded", s.excluded}, {"cases", cases}};
}

void write_track_stats_csv(std::ostream& os, const EnsembleTrackStats& s, const std::string& meta) {
  if (!meta.empty()) os << "# " << meta << '\n';
  os << "lead_hours,cases,error_km,spread_km,at_km,ct_km\n";
  os.precision(10);
  for (const auto& l : s.leads)
    os << l.lead_hours << ',' << l.cases << ',' << l.error_km << ',' << l.spread_km << ',' << l.at_km << ','
       << l.ct_km << '\n';
  os << "acc,," << s.acc_error_km << ',' << s.acc_spread_km << ",,\n";
}

}  // namespace ensbench
