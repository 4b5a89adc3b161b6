#include "ensbench/dataset.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ensbench/error.hpp"
#include "ensbench/field_io.hpp"

namespace ensbench {

void FrameSeries::validate() const {
  grid.validate();
  require(!variables.empty(), "frame series needs at least one variable");
  require(times.size() == frames.size(), "frame series times and frames differ in length");
  for (const auto& f : frames) require(f.size() == channels() * grid.size(), "frame size does not match the grid");
}

FrameSeries l96_series(const L96Config& cfg, TimePoint start, std::size_t n_frames, double step_hours,
                       std::uint64_t seed) {
  require(n_frames >= 1, "need at least one frame");
  const auto init = l96_spun_up_state(cfg, seed);
  auto traj = l96_integrate(init, cfg, n_frames - 1);
  FrameSeries s;
  s.grid = GridSpec{1, cfg.K, 0.0, 1.0, 0.0, 360.0 / static_cast<double>(cfg.K)};
  s.variables = {"x"};
  s.step_hours = step_hours;
  const auto step = std::chrono::hours{static_cast<long long>(std::llround(step_hours))};
  for (std::size_t t = 0; t < n_frames; ++t) s.times.push_back(start + step * static_cast<long long>(t));
  s.frames = std::move(traj);
  return s;
}

namespace {

nlohmann::json grid_to_json(const GridSpec& g) {
  return {{"nlat", g.nlat},           {"nlon", g.nlon},         {"lat_start", g.lat_start},
          {"lat_step", g.lat_step},   {"lon_start", g.lon_start}, {"lon_step", g.lon_step}};
}

GridSpec grid_of_json(const nlohmann::json& j) {
  return {j.at("nlat").get<std::size_t>(),  j.at("nlon").get<std::size_t>(),  j.at("lat_start").get<double>(),
          j.at("lat_step").get<double>(),   j.at("lon_start").get<double>(), j.at("lon_step").get<double>()};
}

}  // namespace

void save_series(const std::filesystem::path& stem, const FrameSeries& series, const std::string& config_hash,
                 std::uint64_t seed) {
  series.validate();
  auto bin_path = stem;
  bin_path += ".ensf";
  std::ofstream os(bin_path, std::ios::binary);
  if (!os) fail(ErrorKind::Data, "cannot open for writing: " + bin_path.string());
  const std::size_t plane = series.grid.size();
  for (const auto& f : series.frames)
    for (std::size_t c = 0; c < series.channels(); ++c)
      write_field(os, Field(series.grid, std::vector<double>(f.begin() + static_cast<long>(c * plane),
                                                             f.begin() + static_cast<long>((c + 1) * plane))));
  if (!os) fail(ErrorKind::Data, "write failed: " + bin_path.string());

  nlohmann::json times = nlohmann::json::array();
  for (auto t : series.times) times.push_back(format_time(t));
  const nlohmann::json idx = {{"variables", series.variables}, {"grid", grid_to_json(series.grid)},
                              {"step_hours", series.step_hours}, {"frames", series.size()},
                              {"times", times}, {"config_hash", config_hash}, {"seed", seed}};
  auto json_path = stem;
  json_path += ".json";
  std::ofstream js(json_path);
  if (!js) fail(ErrorKind::Data, "cannot open for writing: " + json_path.string());
  js << idx.dump(1) << '\n';
}

FrameSeries load_series(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) fail(ErrorKind::Data, "cannot open frame index: " + json_path.string());
  FrameSeries s;
  std::size_t n = 0;
  try {
    const auto idx = nlohmann::json::parse(js);
    s.variables = idx.at("variables").get<std::vector<std::string>>();
    s.grid = grid_of_json(idx.at("grid"));
    s.step_hours = idx.at("step_hours").get<double>();
    n = idx.at("frames").get<std::size_t>();
    for (const auto& t : idx.at("times")) s.times.push_back(parse_time(t.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, "malformed frame index " + json_path.string() + ": " + e.what());
  }
  auto bin_path = stem;
  bin_path += ".ensf";
  const auto fields = load_fields(bin_path);
  if (fields.size() != n * s.channels())
    fail(ErrorKind::Data, bin_path.string() + " holds " + std::to_string(fields.size()) + " fields, index expects " +
                              std::to_string(n * s.channels()));
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<double> frame;
    for (std::size_t c = 0; c < s.channels(); ++c) {
      const auto& f = fields[t * s.channels() + c];
      if (!(f.grid() == s.grid)) fail(ErrorKind::Data, "frame grid differs from the index grid in " + bin_path.string());
      frame.insert(frame.end(), f.values().begin(), f.values().end());
    }
    s.frames.push_back(std::move(frame));
  }
  if (s.times.size() != n) fail(ErrorKind::Data, "frame index lists the wrong number of times");
  return s;
}

std::size_t count_samples(std::size_t n_frames, std::size_t window, std::size_t K) {
  require(window >= 1 && K >= 1, "window and K must be positive");
  require(n_frames >= window + K, "need at least window + K = " + std::to_string(window + K) + " frames, got " +
                                      std::to_string(n_frames));
  return n_frames - window - K + 1;
}

DatasetSplit build_dataset(const FrameSeries& series, std::size_t window, std::size_t K, const SplitSpec& spec) {
  const std::size_t n = series.size();
  const std::size_t count = count_samples(n, window, K);
  // Label each frame 0 = train, 1 = validation, 2 = test, 3 = unused.
  std::vector<int> label(n, 3);
  if (spec.mode == SplitSpec::Mode::Years) {
    for (std::size_t t = 0; t < n; ++t) {
      const int y = calendar(series.times[t]).year;
      if (y >= spec.train_first && y <= spec.train_last) label[t] = 0;
      else if (y >= spec.validation_first && y <= spec.validation_last) label[t] = 1;
      else if (y >= spec.test_first && y <= spec.test_last) label[t] = 2;
    }
  } else {
    const double total = spec.train_fraction + spec.validation_fraction + spec.test_fraction;
    require(spec.train_fraction >= 0 && spec.validation_fraction >= 0 && spec.test_fraction >= 0 && total > 0,
            "split fractions must be non-negative with a positive sum");
    const auto b1 = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.train_fraction / total));
    const auto b2 = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * (spec.train_fraction + spec.validation_fraction) / total));
    for (std::size_t t = 0; t < n; ++t) label[t] = t < b1 ? 0 : (t < b2 ? 1 : 2);
  }
  DatasetSplit split;
  std::vector<std::size_t>* dst[3] = {&split.train, &split.validation, &split.test};
  for (std::size_t s = 0; s < count; ++s) {
    const int l = label[s];
    if (l == 3) continue;
    bool same = true;
    for (std::size_t t = s; t < s + window + K; ++t) same = same && label[t] == l;
    if (same) dst[l]->push_back(s);
  }
  return split;
}

Standardization fit_standardization(const FrameSeries& series, std::span<const std::size_t> samples,
                                    std::size_t window, std::size_t K) {
  require(!samples.empty(), "standardization needs at least one sample");
  std::vector<char> used(series.size(), 0);
  for (auto s : samples)
    for (std::size_t t = s; t < s + window + K && t < series.size(); ++t) used[t] = 1;
  const std::size_t C = series.channels(), plane = series.grid.size();
  Standardization st{std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < series.size(); ++t) {
      if (!used[t]) continue;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = series.frames[t][c * plane + k];
        sum += v;
        sq += v * v;
        ++n;
      }
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
    st.mean[c] = mean;
    st.stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return st;
}

StateCube make_cube(const FrameSeries& series, std::size_t latest, const Standardization& stats) {
  require(latest >= 1 && latest < series.size(), "cube needs frames latest-1 and latest");
  StateCube cube;
  cube.channels = series.channels();
  cube.height = series.grid.nlat;
  cube.width = series.grid.nlon;
  cube.time = series.times[latest];
  const std::size_t plane = series.grid.size();
  for (std::size_t t : {latest - 1, latest}) {
    std::vector<double> slice = series.frames[t];
    stats.apply(slice, plane);
    cube.values.insert(cube.values.end(), slice.begin(), slice.end());
  }
  return cube;
}

TrainWindow make_window(const FrameSeries& series, std::size_t start, std::size_t K, const Standardization& stats) {
  require(start + 2 + K <= series.size(), "window runs past the end of the series");
  TrainWindow w;
  w.cube = make_cube(series, start + 1, stats);
  const std::size_t plane = series.grid.size();
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> slice = series.frames[start + 2 + k];
    stats.apply(slice, plane);
    w.targets.push_back(std::move(slice));
  }
  return w;
}

EnsembleForecast truth_forecast(const FrameSeries& series, std::size_t latest, std::size_t leads) {
  require(latest + leads < series.size(), "truth runs past the end of the series");
  EnsembleForecast fc(1, leads, series.variables, series.grid, series.times[latest], series.step_hours);
  const std::size_t plane = series.grid.size();
  for (std::size_t l = 0; l < leads; ++l)
    for (std::size_t c = 0; c < series.channels(); ++c) {
      const auto& f = series.frames[latest + 1 + l];
      std::copy(f.begin() + static_cast<long>(c * plane), f.begin() + static_cast<long>((c + 1) * plane),
                fc.slice(0, l, c).begin());
    }
  return fc;
}

std::vector<ClimatologySample> climatology_history(const FrameSeries& series, std::size_t first, std::size_t last) {
  require(first <= last && last < series.size(), "climatology frame range out of bounds");
  const std::size_t plane = series.grid.size();
  std::vector<ClimatologySample> out;
  for (std::size_t t = first; t <= last; ++t) {
    ClimatologySample s{series.times[t], {}};
    for (std::size_t c = 0; c < series.channels(); ++c)
      s.values.emplace_back(series.frames[t].begin() + static_cast<long>(c * plane),
                            series.frames[t].begin() + static_cast<long>((c + 1) * plane));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::size_t> pick_initial_conditions(std::span<const std::size_t> samples, std::size_t count,
                                                 std::size_t leads, std::size_t last_frame) {
  // Sample s supplies frames s and s+1; its truth runs to s+1+leads.
  std::vector<std::size_t> usable;
  for (auto s : samples)
    if (s + 1 + leads <= last_frame) usable.push_back(s + 1);
  require(!usable.empty() && count >= 1, "no usable initial conditions for the requested lead count");
  std::vector<std::size_t> out;
  const std::size_t n = std::min(count, usable.size());
  for (std::size_t k = 0; k < n; ++k) out.push_back(usable[k * usable.size() / n]);
  return out;
}

}  // namespace ensbench
