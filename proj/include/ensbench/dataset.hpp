#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ensbench/climatology.hpp"
#include "ensbench/ensemble.hpp"
#include "ensbench/grid.hpp"
#include "ensbench/lorenz96.hpp"
#include "ensbench/train.hpp"

namespace ensbench {

/// Equally spaced physical frames; frames[t] is C x H x W.
struct FrameSeries {
  GridSpec grid;
  std::vector<std::string> variables;
  double step_hours = 6.0;
  std::vector<TimePoint> times;
  std::vector<std::vector<double>> frames;

  std::size_t size() const { return frames.size(); }
  std::size_t channels() const { return variables.size(); }
  void validate() const;
};

/// Lorenz-96 ring mapped onto a 1 x K periodic grid, one frame per step.
FrameSeries l96_series(const L96Config& cfg, TimePoint start, std::size_t n_frames, double step_hours,
                       std::uint64_t seed);

/// Writes <stem>.ensf (C fields per frame, frame-major) and <stem>.json.
void save_series(const std::filesystem::path& stem, const FrameSeries& series, const std::string& config_hash,
                 std::uint64_t seed);
FrameSeries load_series(const std::filesystem::path& stem);

/// Number of (X^{t-1}, X^t | X^{t+1..t+K}) samples in n frames; throws
/// InvalidArgument when n < window + K.
std::size_t count_samples(std::size_t n_frames, std::size_t window, std::size_t K);

struct SplitSpec {
  enum class Mode { Years, Fractions };
  Mode mode = Mode::Years;
  // Inclusive calendar-year ranges.
  int train_first = 2002, train_last = 2016;
  int validation_first = 2017, validation_last = 2017;
  int test_first = 2018, test_last = 2018;
  // Contiguous chronological blocks in these proportions.
  double train_fraction = 15, validation_fraction = 1, test_fraction = 1;
};

/// Sample indices (index of X^{t-1}) per split. A sample belongs to a split
/// only when every frame it touches does, so no target leaks across splits.
struct DatasetSplit {
  std::vector<std::size_t> train, validation, test;
};

DatasetSplit build_dataset(const FrameSeries& series, std::size_t window, std::size_t K, const SplitSpec& spec);

/// Per-channel mean and standard deviation over the frames used by `samples`.
Standardization fit_standardization(const FrameSeries& series, std::span<const std::size_t> samples,
                                    std::size_t window, std::size_t K);

/// Standardized cube whose latest slice is frame `latest`.
StateCube make_cube(const FrameSeries& series, std::size_t latest, const Standardization& stats);

/// Standardized training window starting at sample index `start`.
TrainWindow make_window(const FrameSeries& series, std::size_t start, std::size_t K, const Standardization& stats);

/// Truth as a one-member forecast for frames latest+1 .. latest+leads.
EnsembleForecast truth_forecast(const FrameSeries& series, std::size_t latest, std::size_t leads);

/// Climatology samples from frames [first, last].
std::vector<ClimatologySample> climatology_history(const FrameSeries& series, std::size_t first, std::size_t last);

/// Evenly spaced initial conditions (latest-frame indices) among `samples`
/// whose truth through `leads` steps ends at or before `last_frame`.
std::vector<std::size_t> pick_initial_conditions(std::span<const std::size_t> samples, std::size_t count,
                                                 std::size_t leads, std::size_t last_frame);

}  // namespace ensbench
