#include "ensbench/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ensbench/error.hpp"

namespace ensbench {

namespace {

void check_slice(std::span<const double> s, const GridSpec& grid, const char* what) {
  require(s.size() == grid.size(), std::string(what) + " size does not match grid " + grid.describe());
}

void check_weights(const GridSpec& grid, const LatWeights& w) {
  require(w.weights.size() == grid.nlat, "latitude weights length does not match grid rows");
}

void check_members(const MemberSlices& members, const GridSpec& grid) {
  require(!members.empty(), "ensemble needs at least one member");
  for (const auto& m : members) check_slice(m, grid, "member slice");
}

// Sum over ordered pairs |x_i - x_j| using the sorted-rank identity.
double pairwise_abs_sum(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += (2.0 * static_cast<double>(i) - n + 1.0) * s[i];
  return 2.0 * acc;
}

}  // namespace

double weighted_mean(std::span<const double> values, const GridSpec& grid, const LatWeights& w) {
  check_slice(values, grid, "slice");
  check_weights(grid, w);
  double total = 0.0;
  for (std::size_t i = 0; i < grid.nlat; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < grid.nlon; ++j) row += values[i * grid.nlon + j];
    total += w.weights[i] * row;
  }
  return total / static_cast<double>(grid.size());
}

double rmse(std::span<const double> ens_mean, std::span<const double> truth, const GridSpec& grid,
            const LatWeights& w) {
  check_slice(ens_mean, grid, "forecast");
  check_slice(truth, grid, "truth");
  std::vector<double> sq(grid.size());
  for (std::size_t k = 0; k < sq.size(); ++k) {
    const double d = ens_mean[k] - truth[k];
    sq[k] = d * d;
  }
  return std::sqrt(weighted_mean(sq, grid, w));
}

double acc(std::span<const double> forecast, std::span<const double> truth, std::span<const double> clim,
           const GridSpec& grid, const LatWeights& w) {
  check_slice(forecast, grid, "forecast");
  check_slice(truth, grid, "truth");
  check_slice(clim, grid, "climatology");
  check_weights(grid, w);
  double cross = 0.0, ff = 0.0, tt = 0.0;
  for (std::size_t i = 0; i < grid.nlat; ++i) {
    for (std::size_t j = 0; j < grid.nlon; ++j) {
      const std::size_t k = i * grid.nlon + j;
      const double fa = forecast[k] - clim[k];
      const double ta = truth[k] - clim[k];
      cross += w.weights[i] * fa * ta;
      ff += w.weights[i] * fa * fa;
      tt += w.weights[i] * ta * ta;
    }
  }
  if (!(ff > 0.0) || !(tt > 0.0))
    fail(ErrorKind::UndefinedMetric, "ACC undefined: zero anomaly variance in forecast or truth");
  return std::clamp(cross / std::sqrt(ff * tt), -1.0, 1.0);
}

double crps_ensemble(std::span<const double> members, double truth, CrpsEstimator estimator) {
  const std::size_t n = members.size();
  require(n >= 1, "CRPS needs at least one member");
  if (estimator == CrpsEstimator::Fair) require(n >= 2, "fair CRPS needs at least two members");
  const double nd = static_cast<double>(n);
  double abs_err = 0.0;
  for (double x : members) abs_err += std::abs(x - truth);
  abs_err /= nd;
  if (n == 1) return abs_err;
  const double denom = estimator == CrpsEstimator::Fair ? 2.0 * nd * (nd - 1.0) : 2.0 * nd * nd;
  return abs_err - pairwise_abs_sum(members) / denom;
}

double crps_field(const MemberSlices& members, std::span<const double> truth, const GridSpec& grid,
                  const LatWeights& w, CrpsEstimator estimator) {
  check_members(members, grid);
  check_slice(truth, grid, "truth");
  std::vector<double> point(grid.size());
  std::vector<double> buf(members.size());
  for (std::size_t k = 0; k < point.size(); ++k) {
    for (std::size_t m = 0; m < members.size(); ++m) buf[m] = members[m][k];
    point[k] = crps_ensemble(buf, truth[k], estimator);
  }
  return weighted_mean(point, grid, w);
}

double spread(const MemberSlices& members, const GridSpec& grid, const LatWeights& w) {
  check_members(members, grid);
  const std::size_t n = members.size();
  require(n >= 2, "spread needs at least two members");
  std::vector<double> var(grid.size());
  for (std::size_t k = 0; k < var.size(); ++k) {
    double mean = 0.0;
    for (const auto& m : members) mean += m[k];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& m : members) ss += (m[k] - mean) * (m[k] - mean);
    var[k] = ss / static_cast<double>(n - 1);
  }
  return std::sqrt(weighted_mean(var, grid, w));
}

double ssr(double spread_value, double rmse_value) {
  if (!(rmse_value > 0.0)) fail(ErrorKind::UndefinedMetric, "SSR undefined: RMSE is zero");
  return spread_value / rmse_value;
}

double event_probability(std::span<const double> members, double threshold, Exceedance dir) {
  require(!members.empty(), "event probability needs at least one member");
  std::size_t hits = 0;
  for (double x : members) hits += dir == Exceedance::Above ? (x > threshold) : (x < threshold);
  return static_cast<double>(hits) / static_cast<double>(members.size());
}

double brier(const MemberSlices& members, std::span<const double> truth, std::span<const double> threshold,
             Exceedance dir, const GridSpec& grid, const LatWeights& w) {
  check_members(members, grid);
  check_slice(truth, grid, "truth");
  check_slice(threshold, grid, "threshold");
  std::vector<double> sq(grid.size());
  std::vector<double> buf(members.size());
  for (std::size_t k = 0; k < sq.size(); ++k) {
    for (std::size_t m = 0; m < members.size(); ++m) buf[m] = members[m][k];
    const double p = event_probability(buf, threshold[k], dir);
    const double o = (dir == Exceedance::Above ? truth[k] > threshold[k] : truth[k] < threshold[k]) ? 1.0 : 0.0;
    sq[k] = (p - o) * (p - o);
  }
  return weighted_mean(sq, grid, w);
}

double normalized_diff(double metric_a, double metric_b, DiffKind kind) {
  if (kind == DiffKind::AccLike) {
    if (metric_b == 1.0) fail(ErrorKind::UndefinedMetric, "normalized ACC difference undefined for baseline ACC = 1");
    return (metric_a - metric_b) / (1.0 - metric_b);
  }
  if (!(metric_b > 0.0)) fail(ErrorKind::UndefinedMetric, "normalized difference undefined for non-positive baseline");
  return (metric_a - metric_b) / metric_b;
}

double percentile_linear(std::span<const double> sorted, double level) {
  require(!sorted.empty(), "percentile of empty sample");
  require(level >= 0.0 && level <= 100.0, "percentile level outside [0, 100]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * level / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace ensbench
