#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "ensbench/config.hpp"
#include "ensbench/report.hpp"
#include "ensbench/tracker.hpp"

namespace ensbench {

/// Shared state of one CLI invocation. Inputs and outputs live in `workdir`.
struct RunContext {
  ExperimentConfig config;
  std::filesystem::path workdir;
  std::size_t threads = 1;
  std::ostream* log = nullptr;
};

// Fixed file names inside the working directory.
namespace files {
inline constexpr const char* kFrames = "frames";            // .ensf + .json
inline constexpr const char* kClimatology = "climatology";  // .ensf + .json
inline constexpr const char* kCheckpoint = "checkpoint.ensc";
inline constexpr const char* kForecast = "forecast.ense";
inline constexpr const char* kTruth = "truth.ense";
inline constexpr const char* kMetrics = "metrics";  // .csv + .json
inline constexpr const char* kVortexEnsemble = "vortex_ensemble.ense";
inline constexpr const char* kBestTrack = "best_track.csv";
inline constexpr const char* kTracks = "tracks";            // .csv + .json
inline constexpr const char* kTrackStats = "track_stats";  // .csv + .json
inline constexpr const char* kReport = "report";            // .csv + .json
}  // namespace files

/// Integrates the Lorenz-96 series, builds the training climatology and,
/// when enabled, a synthetic vortex ensemble with its best track.
void run_gen_data(const RunContext& ctx);

/// Trains on the training split and writes the checkpoint plus
/// <checkpoint stem>_loss_curve.csv. Divergence saves the last good
/// parameters and then throws NumericFault.
void run_train(const RunContext& ctx, const std::filesystem::path& checkpoint);

struct ForecastOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path output;
  bool perturbations = true;
};

/// Ensemble forecasts from evenly spaced initial conditions of the
/// verification split; also writes the matching truth.
void run_forecast(const RunContext& ctx, const ForecastOptions& opts);

/// Scores every forecast case against the truth case with the same index.
MetricReport verify_sets(const RunContext& ctx, const std::filesystem::path& forecast,
                         const std::filesystem::path& truth);
void run_verify(const RunContext& ctx, const std::filesystem::path& forecast, const std::filesystem::path& truth,
                const std::string& stem);

/// Tracks every member of every ensemble case. Lead index k of a vortex
/// ensemble holds valid time init + k steps; index 0 is the analysis.
EnsembleTrackStats run_track(const RunContext& ctx, const std::filesystem::path& ensemble,
                             const std::filesystem::path& best_track);

/// Verifies sets A and B and writes A with normalized differences against B.
MetricReport run_report(const RunContext& ctx, const std::filesystem::path& a, const std::filesystem::path& b,
                        const std::filesystem::path& truth);

/// Converts one member and lead of a vortex ensemble into tracker inputs.
TrackFields track_fields_at(const EnsembleForecast& fc, std::size_t member, std::size_t lead,
                            const std::vector<std::string>& levels);

/// Variable names of a vortex ensemble for the given advection levels.
std::vector<std::string> vortex_variables(const std::vector<std::string>& levels);

}  // namespace ensbench
