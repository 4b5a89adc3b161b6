#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ensbench/grid.hpp"
#include "ensbench/timeutil.hpp"

namespace ensbench {

/// members x leads x channels x H x W, row-major in that order. Lead index 0
/// is the first forecast step (init_time + step_hours).
struct EnsembleForecast {
  std::size_t members = 0;
  std::size_t leads = 0;
  std::vector<std::string> variables;  // one name per channel
  GridSpec grid;
  TimePoint init_time{};
  double step_hours = 6.0;
  std::vector<double> values;

  // Provenance carried into every file written from this forecast.
  std::string config_hash;
  std::uint64_t seed = 0;

  EnsembleForecast() = default;
  EnsembleForecast(std::size_t n_members, std::size_t n_leads, std::vector<std::string> vars,
                   GridSpec g, TimePoint init, double step_h = 6.0);

  std::size_t channels() const { return variables.size(); }
  std::size_t slice_size() const { return grid.size(); }

  std::span<double> slice(std::size_t m, std::size_t lead, std::size_t c);
  std::span<const double> slice(std::size_t m, std::size_t lead, std::size_t c) const;

  /// All members' slices at (lead, channel).
  std::vector<std::span<const double>> member_slices(std::size_t lead, std::size_t c) const;

  /// Ensemble mean at (lead, channel).
  std::vector<double> mean_slice(std::size_t lead, std::size_t c) const;

  TimePoint valid_time(std::size_t lead) const;

  /// Index of a named variable; throws InvalidArgument when absent.
  std::size_t channel_index(const std::string& name) const;

  /// Throws InvalidArgument on inconsistent sizes or non-finite entries.
  void validate() const;
};

// File layout: "ENSE" | u16 version=1 | u32 header_len | JSON header |
// f32 values (members*leads*channels*H*W). Records may be concatenated.
void write_ensemble(std::ostream& os, const EnsembleForecast& fc);
std::optional<EnsembleForecast> read_ensemble(std::istream& is);
void save_ensembles(const std::filesystem::path& path, const std::vector<EnsembleForecast>& cases);
std::vector<EnsembleForecast> load_ensembles(const std::filesystem::path& path);

}  // namespace ensbench
