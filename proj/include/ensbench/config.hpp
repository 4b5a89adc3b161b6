#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensbench/dataset.hpp"
#include "ensbench/network.hpp"
#include "ensbench/report.hpp"
#include "ensbench/tracker.hpp"
#include "ensbench/train.hpp"
#include "ensbench/vortex.hpp"

namespace ensbench {

/// Every tunable with its default. User documents may only override keys
/// present here; arrays are replaced wholesale.
nlohmann::json default_config();

struct VortexEnsembleSpec {
  bool enabled = false;
  VortexScenario scenario;
  GridSpec grid;
  std::size_t members = 10;
  std::size_t leads = 20;
  double heading_sd_deg = 4.0;
  double speed_sd = 0.1;  // relative
  std::string storm_id = "SYN001";
};

struct VerifySetup {
  std::size_t members = 8;
  std::size_t leads = 15;
  std::size_t cases = 20;
  std::string split = "test";
  VerifyOptions options;
};

class ExperimentConfig {
 public:
  ExperimentConfig();
  explicit ExperimentConfig(nlohmann::json doc);

  const nlohmann::json& doc() const { return doc_; }
  std::uint64_t seed() const;
  /// FNV-1a (64-bit, hex) of the canonical dump of the merged document.
  std::string hash() const;

  std::string data_kind() const;
  TimePoint data_start() const;
  std::size_t data_frames() const;
  double step_hours() const;
  L96Config l96() const;
  SplitSpec split() const;
  std::vector<double> climatology_levels() const;
  VortexEnsembleSpec vortex() const;
  ArchDescriptor arch(const GridSpec& grid, std::size_t channels) const;
  TrainConfig train() const;
  VerifySetup verify() const;
  TrackerConfig tracker() const;
  TrackStatsOptions track_stats() const;
  std::vector<std::string> advection_levels() const;

 private:
  nlohmann::json doc_;
};

/// Merge `user` into the defaults; unknown keys and type mismatches throw
/// Config naming the dotted key path.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& user);

/// Applies "a.b.c=value" overrides; value is parsed as JSON when possible.
void apply_override(nlohmann::json& doc, const std::string& assignment);

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed);

std::string fnv1a_hex(const std::string& bytes);

}  // namespace ensbench
