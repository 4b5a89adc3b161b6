#pragma once

// Verification scores for gridded ensemble forecasts. Slice-level functions
// take one H x W slice per argument; spatial means are latitude-weighted
// (1/(H*W)) * sum_i sum_j w_i * v_ij with unit-mean weights.

#include <span>
#include <vector>

#include "ensbench/grid.hpp"

namespace ensbench {

enum class CrpsEstimator { Empirical, Fair };
enum class Exceedance { Above, Below };
enum class DiffKind { RmseLike, AccLike, CrpsLike };

using MemberSlices = std::vector<std::span<const double>>;

/// Latitude-weighted spatial mean of a slice.
double weighted_mean(std::span<const double> values, const GridSpec& grid, const LatWeights& w);

double rmse(std::span<const double> ens_mean, std::span<const double> truth, const GridSpec& grid,
            const LatWeights& w);

/// Uncentred anomaly correlation against climatological mean `clim`.
/// Throws UndefinedMetric when either anomaly field has zero weighted variance.
double acc(std::span<const double> forecast, std::span<const double> truth, std::span<const double> clim,
           const GridSpec& grid, const LatWeights& w);

/// Pointwise CRPS of an ensemble against a scalar observation.
double crps_ensemble(std::span<const double> members, double truth, CrpsEstimator estimator);

/// Latitude-weighted mean of pointwise CRPS.
double crps_field(const MemberSlices& members, std::span<const double> truth, const GridSpec& grid,
                  const LatWeights& w, CrpsEstimator estimator);

/// sqrt of the latitude-weighted mean of the unbiased (N-1) ensemble variance.
double spread(const MemberSlices& members, const GridSpec& grid, const LatWeights& w);

double ssr(double spread_value, double rmse_value);

/// Event probability from strict threshold comparisons.
double event_probability(std::span<const double> members, double threshold, Exceedance dir);

/// Latitude-weighted Brier score with a per-gridpoint threshold field.
double brier(const MemberSlices& members, std::span<const double> truth, std::span<const double> threshold,
             Exceedance dir, const GridSpec& grid, const LatWeights& w);

double normalized_diff(double metric_a, double metric_b, DiffKind kind);

/// Linear interpolation between closest order statistics (level in percent).
/// `sorted` must be ascending and non-empty.
double percentile_linear(std::span<const double> sorted, double level);

}  // namespace ensbench
