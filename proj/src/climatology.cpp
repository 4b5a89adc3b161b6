#include "ensbench/climatology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "ensbench/error.hpp"
#include "ensbench/field_io.hpp"
#include "ensbench/metrics.hpp"

namespace ensbench {

StratumKey StratumKey::of(TimePoint t) {
  const auto cal = calendar(t);
  return {cal.month, cal.hour};
}

std::string StratumKey::describe() const {
  return "month=" + std::to_string(month) + " hour=" + std::to_string(hour);
}

const Climatology::Stratum& Climatology::stratum(TimePoint t) const {
  const auto key = StratumKey::of(t);
  auto it = strata.find(key);
  if (it == strata.end())
    fail(ErrorKind::MissingClimatology, "no climatology for stratum " + key.describe() + " (valid " +
                                            format_time(t) + ")");
  return it->second;
}

std::span<const double> Climatology::mean(std::size_t channel, TimePoint t) const {
  require(channel < variables.size(), "climatology channel out of range");
  return stratum(t).mean[channel];
}

std::span<const double> Climatology::percentile(std::size_t channel, double level, TimePoint t) const {
  require(channel < variables.size(), "climatology channel out of range");
  for (std::size_t l = 0; l < levels.size(); ++l)
    if (std::abs(levels[l] - level) < 1e-9) return stratum(t).percentiles[channel][l];
  fail(ErrorKind::MissingClimatology, "percentile level " + std::to_string(level) + " not in climatology");
}

Climatology build_climatology(std::span<const ClimatologySample> history, std::vector<std::string> variables,
                              const GridSpec& grid, std::vector<double> levels) {
  grid.validate();
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  for (double l : levels) require(l >= 0.0 && l <= 100.0, "percentile level outside [0, 100]");

  const std::size_t nc = variables.size();
  const std::size_t np = grid.size();
  std::map<StratumKey, std::vector<const ClimatologySample*>> groups;
  for (const auto& s : history) {
    require(s.values.size() == nc, "climatology sample channel count mismatch");
    for (const auto& v : s.values) require(v.size() == np, "climatology sample size mismatch");
    groups[StratumKey::of(s.time)].push_back(&s);
  }

  Climatology clim;
  clim.variables = std::move(variables);
  clim.grid = grid;
  clim.levels = levels;
  std::vector<double> buf;
  for (const auto& [key, members] : groups) {
    if (members.size() < 2)
      fail(ErrorKind::MissingClimatology,
           "climatology stratum " + key.describe() + " has fewer than two samples");
    Climatology::Stratum st;
    st.samples = members.size();
    st.mean.assign(nc, std::vector<double>(np, 0.0));
    st.percentiles.assign(nc, std::vector<std::vector<double>>(levels.size(), std::vector<double>(np)));
    buf.resize(members.size());
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t p = 0; p < np; ++p) {
        double sum = 0.0;
        for (std::size_t k = 0; k < members.size(); ++k) {
          buf[k] = members[k]->values[c][p];
          sum += buf[k];
        }
        st.mean[c][p] = sum / static_cast<double>(members.size());
        std::sort(buf.begin(), buf.end());
        for (std::size_t l = 0; l < levels.size(); ++l) st.percentiles[c][l][p] = percentile_linear(buf, levels[l]);
      }
    }
    clim.strata.emplace(key, std::move(st));
  }
  return clim;
}

namespace {
std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}
}  // namespace

void save_climatology(const std::filesystem::path& stem, const Climatology& clim, const std::string& config_hash) {
  nlohmann::json index;
  index["variables"] = clim.variables;
  index["levels"] = clim.levels;
  index["config_hash"] = config_hash;
  index["records"] = nlohmann::json::array();
  std::vector<Field> fields;
  for (const auto& [key, st] : clim.strata) {
    for (std::size_t c = 0; c < clim.variables.size(); ++c) {
      index["records"].push_back({{"month", key.month}, {"hour", key.hour}, {"channel", c},
                                  {"kind", "mean"}, {"samples", st.samples}});
      fields.emplace_back(clim.grid, st.mean[c]);
      for (std::size_t l = 0; l < clim.levels.size(); ++l) {
        index["records"].push_back({{"month", key.month}, {"hour", key.hour}, {"channel", c},
                                    {"kind", "percentile"}, {"level", clim.levels[l]}, {"samples", st.samples}});
        fields.emplace_back(clim.grid, st.percentiles[c][l]);
      }
    }
  }
  save_fields(with_suffix(stem, ".ensf"), fields);
  std::ofstream os(with_suffix(stem, ".json"));
  if (!os) fail(ErrorKind::Data, "cannot write climatology index " + with_suffix(stem, ".json").string());
  os << index.dump(2) << '\n';
}

Climatology load_climatology(const std::filesystem::path& stem) {
  std::ifstream is(with_suffix(stem, ".json"));
  if (!is) fail(ErrorKind::Data, "cannot open climatology index " + with_suffix(stem, ".json").string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, std::string("malformed climatology index: ") + e.what());
  }
  const auto fields = load_fields(with_suffix(stem, ".ensf"));
  Climatology clim;
  clim.variables = index.at("variables").get<std::vector<std::string>>();
  clim.levels = index.at("levels").get<std::vector<double>>();
  const auto& records = index.at("records");
  if (records.size() != fields.size()) fail(ErrorKind::Data, "climatology index and field stack disagree");
  if (!fields.empty()) clim.grid = fields.front().grid();
  const std::size_t nc = clim.variables.size();
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    StratumKey key{rec.at("month").get<unsigned>(), rec.at("hour").get<int>()};
    auto& st = clim.strata[key];
    if (st.mean.empty()) {
      st.mean.assign(nc, {});
      st.percentiles.assign(nc, std::vector<std::vector<double>>(clim.levels.size()));
    }
    st.samples = rec.at("samples").get<std::size_t>();
    const auto c = rec.at("channel").get<std::size_t>();
    if (c >= nc || !(fields[r].grid() == clim.grid)) fail(ErrorKind::Data, "inconsistent climatology record");
    std::vector<double> v(fields[r].values().begin(), fields[r].values().end());
    if (rec.at("kind") == "mean") {
      st.mean[c] = std::move(v);
    } else {
      const double level = rec.at("level").get<double>();
      auto it = std::find_if(clim.levels.begin(), clim.levels.end(),
                             [&](double l) { return std::abs(l - level) < 1e-9; });
      if (it == clim.levels.end()) fail(ErrorKind::Data, "climatology record has unknown level");
      st.percentiles[c][static_cast<std::size_t>(it - clim.levels.begin())] = std::move(v);
    }
  }
  return clim;
}

}  // namespace ensbench
