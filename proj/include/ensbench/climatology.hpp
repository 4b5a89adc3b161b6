#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ensbench/grid.hpp"
#include "ensbench/timeutil.hpp"

namespace ensbench {

/// Climatology is stratified by calendar month and hour of day.
struct StratumKey {
  unsigned month = 1;
  int hour = 0;
  auto operator<=>(const StratumKey&) const = default;
  static StratumKey of(TimePoint t);
  std::string describe() const;
};

/// One historical state: values[channel][gridpoint].
struct ClimatologySample {
  TimePoint time;
  std::vector<std::vector<double>> values;
};

class Climatology {
 public:
  struct Stratum {
    std::size_t samples = 0;
    std::vector<std::vector<double>> mean;                     // [channel][point]
    std::vector<std::vector<std::vector<double>>> percentiles;  // [channel][level][point]
  };

  std::vector<std::string> variables;
  GridSpec grid;
  std::vector<double> levels;  // ascending, percent
  std::map<StratumKey, Stratum> strata;

  /// Throws MissingClimatology naming the stratum.
  const Stratum& stratum(TimePoint t) const;
  std::span<const double> mean(std::size_t channel, TimePoint t) const;
  std::span<const double> percentile(std::size_t channel, double level, TimePoint t) const;
};

inline const std::vector<double> kDefaultPercentileLevels = {2, 5, 10, 90, 95, 98};

/// Per-stratum means and linear-interpolation percentiles. Each stratum needs
/// at least two samples.
Climatology build_climatology(std::span<const ClimatologySample> history, std::vector<std::string> variables,
                              const GridSpec& grid, std::vector<double> levels = kDefaultPercentileLevels);

/// Writes <stem>.ensf (field stack) and <stem>.json (index).
void save_climatology(const std::filesystem::path& stem, const Climatology& clim, const std::string& config_hash);
Climatology load_climatology(const std::filesystem::path& stem);

}  // namespace ensbench
