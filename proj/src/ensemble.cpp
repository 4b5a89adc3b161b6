#include "ensbench/ensemble.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "ensbench/binary_io.hpp"
#include "ensbench/error.hpp"

namespace ensbench {

EnsembleForecast::EnsembleForecast(std::size_t n_members, std::size_t n_leads, std::vector<std::string> vars,
                                   GridSpec g, TimePoint init, double step_h)
    : members(n_members),
      leads(n_leads),
      variables(std::move(vars)),
      grid(g),
      init_time(init),
      step_hours(step_h),
      values(n_members * n_leads * variables.size() * g.size(), 0.0) {
  require(members >= 1, "ensemble needs at least one member");
  grid.validate();
}

std::span<double> EnsembleForecast::slice(std::size_t m, std::size_t lead, std::size_t c) {
  const std::size_t n = slice_size();
  return {values.data() + ((m * leads + lead) * channels() + c) * n, n};
}

std::span<const double> EnsembleForecast::slice(std::size_t m, std::size_t lead, std::size_t c) const {
  const std::size_t n = slice_size();
  return {values.data() + ((m * leads + lead) * channels() + c) * n, n};
}

std::vector<std::span<const double>> EnsembleForecast::member_slices(std::size_t lead, std::size_t c) const {
  std::vector<std::span<const double>> out;
  out.reserve(members);
  for (std::size_t m = 0; m < members; ++m) out.push_back(slice(m, lead, c));
  return out;
}

std::vector<double> EnsembleForecast::mean_slice(std::size_t lead, std::size_t c) const {
  std::vector<double> mean(slice_size(), 0.0);
  for (std::size_t m = 0; m < members; ++m) {
    auto s = slice(m, lead, c);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += s[k];
  }
  for (double& v : mean) v /= static_cast<double>(members);
  return mean;
}

TimePoint EnsembleForecast::valid_time(std::size_t lead) const {
  const auto h = static_cast<long long>(std::llround(step_hours * static_cast<double>(lead + 1)));
  return init_time + std::chrono::hours{h};
}

std::size_t EnsembleForecast::channel_index(const std::string& name) const {
  for (std::size_t c = 0; c < variables.size(); ++c)
    if (variables[c] == name) return c;
  fail(ErrorKind::InvalidArgument, "variable '" + name + "' not present in forecast");
}

void EnsembleForecast::validate() const {
  require(members >= 1, "ensemble needs at least one member");
  grid.validate();
  require(values.size() == members * leads * channels() * grid.size(), "ensemble value count mismatch");
  for (double v : values) require(std::isfinite(v), "ensemble contains non-finite values");
}

namespace {

nlohmann::json grid_json(const GridSpec& g) {
  return {{"nlat", g.nlat}, {"nlon", g.nlon}, {"lat_start", g.lat_start},
          {"lat_step", g.lat_step}, {"lon_start", g.lon_start}, {"lon_step", g.lon_step}};
}

GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec g;
  g.nlat = j.at("nlat").get<std::size_t>();
  g.nlon = j.at("nlon").get<std::size_t>();
  g.lat_start = j.at("lat_start").get<double>();
  g.lat_step = j.at("lat_step").get<double>();
  g.lon_start = j.at("lon_start").get<double>();
  g.lon_step = j.at("lon_step").get<double>();
  return g;
}

}  // namespace

void write_ensemble(std::ostream& os, const EnsembleForecast& fc) {
  nlohmann::json h = {{"members", fc.members},        {"leads", fc.leads},
                      {"variables", fc.variables},    {"grid", grid_json(fc.grid)},
                      {"init_time", format_time(fc.init_time)}, {"step_hours", fc.step_hours},
                      {"config_hash", fc.config_hash}, {"seed", fc.seed}};
  const std::string header = h.dump();
  bin::put_magic(os, "ENSE");
  bin::put<std::uint16_t>(os, 1);
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (double v : fc.values) bin::put<float>(os, static_cast<float>(v));
}

std::optional<EnsembleForecast> read_ensemble(std::istream& is) {
  if (is.peek() == std::char_traits<char>::eof()) return std::nullopt;
  if (!bin::check_magic(is, "ENSE")) fail(ErrorKind::Data, "not an ensemble record (bad magic)");
  const auto version = bin::get<std::uint16_t>(is, "ensemble version");
  if (version != 1) fail(ErrorKind::Data, "unsupported ensemble format version " + std::to_string(version));
  const auto len = bin::get<std::uint32_t>(is, "ensemble header length");
  std::string header(len, '\0');
  is.read(header.data(), len);
  if (!is) fail(ErrorKind::Data, "truncated ensemble header");
  EnsembleForecast fc;
  try {
    const auto h = nlohmann::json::parse(header);
    fc = EnsembleForecast(h.at("members").get<std::size_t>(), h.at("leads").get<std::size_t>(),
                          h.at("variables").get<std::vector<std::string>>(), grid_from_json(h.at("grid")),
                          parse_time(h.at("init_time").get<std::string>()), h.at("step_hours").get<double>());
    fc.config_hash = h.value("config_hash", "");
    fc.seed = h.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, std::string("malformed ensemble header: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::Data, std::string("invalid ensemble header: ") + e.what());
  }
  for (double& v : fc.values) v = bin::get<float>(is, "ensemble values");
  return fc;
}

void save_ensembles(const std::filesystem::path& path, const std::vector<EnsembleForecast>& cases) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Data, "cannot open for writing: " + path.string());
  for (const auto& c : cases) write_ensemble(os, c);
  if (!os) fail(ErrorKind::Data, "write failed: " + path.string());
}

std::vector<EnsembleForecast> load_ensembles(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Data, "cannot open ensemble file: " + path.string());
  std::vector<EnsembleForecast> out;
  while (auto fc = read_ensemble(is)) out.push_back(std::move(*fc));
  return out;
}

}  // namespace ensbench
