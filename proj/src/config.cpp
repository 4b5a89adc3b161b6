#include "ensbench/config.hpp"

#include <cstdio>
#include <fstream>

#include "ensbench/error.hpp"

namespace ensbench {

nlohmann::json default_config() {
  VortexScenario sc;
  VortexSpec v;
  v.start = {15.0, 165.0};
  v.heading_deg = 290.0;
  v.speed_kmh = 20.0;
  sc.vortices.push_back(v);
  const GridSpec vg = vortex_grid();
  return {
      {"seed", 42},
      {"data",
       {{"kind", "l96"},
        {"start", "2002-01-01"},
        {"frames", 24836},
        {"step_hours", 6.0},
        {"l96", {{"K", 40}, {"F", 8.0}, {"dt", 0.05}, {"spinup", 1000}}},
        {"split",
         {{"mode", "years"},
          {"train", {2002, 2016}},
          {"validation", {2017, 2017}},
          {"test", {2018, 2018}},
          {"fractions", {15.0, 1.0, 1.0}}}},
        {"climatology_levels", {2.0, 5.0, 10.0, 90.0, 95.0, 98.0}},
        {"vortex",
         {{"enabled", false},
          {"scenario", scenario_to_json(sc)},
          {"grid",
           {{"nlat", vg.nlat},
            {"nlon", vg.nlon},
            {"lat_start", vg.lat_start},
            {"lat_step", vg.lat_step},
            {"lon_start", vg.lon_start},
            {"lon_step", vg.lon_step}}},
          {"members", 10},
          {"leads", 20},
          {"heading_sd_deg", 4.0},
          {"speed_sd", 0.1},
          {"storm_id", "SYN001"}}}}},
      {"model",
       {{"patch", {1, 2}},
        {"kernel", {1, 5}},
        {"activation", "tanh"},
        {"aux_channels", 3},
        {"perturb_width", 16},
        {"perturb_blocks", 2},
        {"forecast_width", 32},
        {"forecast_blocks", 3}}},
      {"train",
       {{"lambda", kDefaultKlWeight},
        {"stages", 3},
        {"iterations", 300},
        {"lr", 2.5e-4},
        {"beta1", 0.9},
        {"beta2", 0.95},
        {"adam_eps", 1e-8},
        {"weight_decay", 0.1},
        {"members", 8},
        {"batch", 1},
        {"loss", "crps"},
        {"estimator", "fair"},
        {"kl_direction", "q_to_p"}}},
      {"verify",
       {{"members", 8},
        {"leads", 15},
        {"cases", 20},
        {"split", "test"},
        {"estimator", "empirical"},
        {"uniform_weights", false},
        {"brier_above", {90.0, 95.0, 98.0}},
        {"brier_below", {10.0, 5.0, 2.0}}}},
      {"track",
       {{"radius_km", 445.0},
        {"pool_factor", 5},
        {"vorticity_threshold", 5e-5},
        {"vorticity_radius_km", 278.0},
        {"z850_radius_km", 278.0},
        {"elevation_max_m", 1000.0},
        {"cap_factor", 3.0},
        {"advection_radius_km", 445.0},
        {"advection_levels", {"850", "700", "500"}},
        {"vorticity_seeds", true},
        {"require_msl_minimum", true},
        {"require_vorticity", true},
        {"require_z850", true},
        {"min_fraction", 2.0 / 3.0},
        {"max_lead_hours", 120.0}}}};
}

namespace {

bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) {
    // Integers may not silently become fractions.
    if ((a.is_number_integer() || a.is_number_unsigned()) && b.is_number_float())
      return std::floor(b.get<double>()) == b.get<double>();
    return true;
  }
  return a.type() == b.type();
}

void merge_into(nlohmann::json& dst, const nlohmann::json& src, const std::string& path) {
  if (!src.is_object()) fail(ErrorKind::Config, "config section '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!dst.contains(it.key())) fail(ErrorKind::Config, "unknown config key '" + key + "'");
    auto& d = dst[it.key()];
    if (d.is_object() && !(path == "data.vortex" && it.key() == "scenario")) {
      merge_into(d, it.value(), key);
    } else {
      if (!same_kind(d, it.value())) fail(ErrorKind::Config, "config key '" + key + "' has the wrong type");
      if ((d.is_number_integer() || d.is_number_unsigned()) && it.value().is_number_float())
        d = static_cast<long long>(it.value().get<double>());
      else
        d = it.value();
    }
  }
}

template <typename T>
T get_at(const nlohmann::json& doc, const std::string& dotted) {
  const nlohmann::json* cur = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = dotted.find('.', pos);
    const std::string key = dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (!cur->contains(key)) fail(ErrorKind::Config, "missing config key '" + dotted + "'");
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  try {
    return cur->get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Config, "config key '" + dotted + "' has the wrong type");
  }
}

/// Re-raises validation failures as configuration errors.
template <typename Fn>
auto as_config(Fn fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) fail(ErrorKind::Config, e.what());
    throw;
  }
}

}  // namespace

nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& user) {
  nlohmann::json out = defaults;
  merge_into(out, user, "");
  return out;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::Config, "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  // Build a nested patch and merge it with the usual checks.
  nlohmann::json patch = value;
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    parts.push_back(key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos));
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = nlohmann::json{{*it, patch}};
  merge_into(doc, patch, "");
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig::ExperimentConfig() : doc_(default_config()) {}

ExperimentConfig::ExperimentConfig(nlohmann::json doc) : doc_(std::move(doc)) {
  // Touch every typed accessor once so bad values fail early.
  (void)seed();
  (void)data_start();
  (void)l96();
  (void)split();
  (void)train();
  (void)verify();
  (void)tracker();
  (void)track_stats();
  (void)vortex();
  (void)climatology_levels();
  const auto kind = data_kind();
  if (kind != "l96") fail(ErrorKind::Config, "data.kind '" + kind + "' is not supported (expected l96)");
}

std::uint64_t ExperimentConfig::seed() const { return get_at<std::uint64_t>(doc_, "seed"); }

std::string ExperimentConfig::hash() const { return fnv1a_hex(doc_.dump()); }

std::string ExperimentConfig::data_kind() const { return get_at<std::string>(doc_, "data.kind"); }

TimePoint ExperimentConfig::data_start() const {
  return as_config([&] {
    try {
      return parse_time(get_at<std::string>(doc_, "data.start"));
    } catch (const Error& e) {
      fail(ErrorKind::Config, std::string("data.start: ") + e.what());
    }
  });
}

std::size_t ExperimentConfig::data_frames() const { return get_at<std::size_t>(doc_, "data.frames"); }

double ExperimentConfig::step_hours() const {
  const double h = get_at<double>(doc_, "data.step_hours");
  if (!(h > 0.0) || std::floor(h) != h) fail(ErrorKind::Config, "data.step_hours must be a positive whole number");
  return h;
}

L96Config ExperimentConfig::l96() const {
  L96Config c{get_at<std::size_t>(doc_, "data.l96.K"), get_at<double>(doc_, "data.l96.F"),
              get_at<double>(doc_, "data.l96.dt"), get_at<std::size_t>(doc_, "data.l96.spinup")};
  as_config([&] { c.validate(); });
  return c;
}

SplitSpec ExperimentConfig::split() const {
  SplitSpec s;
  const auto mode = get_at<std::string>(doc_, "data.split.mode");
  if (mode == "years") s.mode = SplitSpec::Mode::Years;
  else if (mode == "fractions") s.mode = SplitSpec::Mode::Fractions;
  else fail(ErrorKind::Config, "data.split.mode must be 'years' or 'fractions'");
  auto range = [&](const char* key, int& a, int& b) {
    const auto v = get_at<std::vector<int>>(doc_, std::string("data.split.") + key);
    if (v.size() != 2 || v[0] > v[1]) fail(ErrorKind::Config, std::string("data.split.") + key + " must be [first, last]");
    a = v[0];
    b = v[1];
  };
  range("train", s.train_first, s.train_last);
  range("validation", s.validation_first, s.validation_last);
  range("test", s.test_first, s.test_last);
  const auto f = get_at<std::vector<double>>(doc_, "data.split.fractions");
  if (f.size() != 3) fail(ErrorKind::Config, "data.split.fractions must hold three values");
  s.train_fraction = f[0];
  s.validation_fraction = f[1];
  s.test_fraction = f[2];
  return s;
}

std::vector<double> ExperimentConfig::climatology_levels() const {
  auto v = get_at<std::vector<double>>(doc_, "data.climatology_levels");
  for (double l : v)
    if (!(l >= 0.0 && l <= 100.0)) fail(ErrorKind::Config, "data.climatology_levels must lie in [0, 100]");
  std::sort(v.begin(), v.end());
  return v;
}

VortexEnsembleSpec ExperimentConfig::vortex() const {
  VortexEnsembleSpec v;
  v.enabled = get_at<bool>(doc_, "data.vortex.enabled");
  v.scenario = as_config([&] { return scenario_from_json(doc_.at("data").at("vortex").at("scenario")); });
  v.grid = {get_at<std::size_t>(doc_, "data.vortex.grid.nlat"),    get_at<std::size_t>(doc_, "data.vortex.grid.nlon"),
            get_at<double>(doc_, "data.vortex.grid.lat_start"), get_at<double>(doc_, "data.vortex.grid.lat_step"),
            get_at<double>(doc_, "data.vortex.grid.lon_start"), get_at<double>(doc_, "data.vortex.grid.lon_step")};
  as_config([&] { v.grid.validate(); });
  v.members = get_at<std::size_t>(doc_, "data.vortex.members");
  v.leads = get_at<std::size_t>(doc_, "data.vortex.leads");
  v.heading_sd_deg = get_at<double>(doc_, "data.vortex.heading_sd_deg");
  v.speed_sd = get_at<double>(doc_, "data.vortex.speed_sd");
  v.storm_id = get_at<std::string>(doc_, "data.vortex.storm_id");
  if (v.members < 1 || v.leads < 1) fail(ErrorKind::Config, "data.vortex.members and leads must be positive");
  if (v.scenario.vortices.empty()) fail(ErrorKind::Config, "data.vortex.scenario needs at least one vortex");
  return v;
}

ArchDescriptor ExperimentConfig::arch(const GridSpec& grid, std::size_t channels) const {
  ArchDescriptor a;
  a.channels = channels;
  a.height = grid.nlat;
  a.width = grid.nlon;
  a.periodic_lon = grid.periodic_lon();
  a.aux_channels = get_at<std::size_t>(doc_, "model.aux_channels");
  const auto patch = get_at<std::vector<std::size_t>>(doc_, "model.patch");
  const auto kernel = get_at<std::vector<std::size_t>>(doc_, "model.kernel");
  if (patch.size() != 2 || kernel.size() != 2) fail(ErrorKind::Config, "model.patch and model.kernel need two entries");
  a.patch_h = patch[0];
  a.patch_w = patch[1];
  a.kernel_h = kernel[0];
  a.kernel_w = kernel[1];
  a.activation = as_config([&] { return ad::parse_activation(get_at<std::string>(doc_, "model.activation")); });
  a.perturb_width = get_at<std::size_t>(doc_, "model.perturb_width");
  a.perturb_blocks = get_at<std::size_t>(doc_, "model.perturb_blocks");
  a.forecast_width = get_at<std::size_t>(doc_, "model.forecast_width");
  a.forecast_blocks = get_at<std::size_t>(doc_, "model.forecast_blocks");
  as_config([&] { a.validate(); });
  return a;
}

TrainConfig ExperimentConfig::train() const {
  TrainConfig t;
  t.lambda = get_at<double>(doc_, "train.lambda");
  t.stages = get_at<std::size_t>(doc_, "train.stages");
  t.iterations = get_at<std::size_t>(doc_, "train.iterations");
  t.optimizer = {get_at<double>(doc_, "train.lr"), get_at<double>(doc_, "train.beta1"),
                 get_at<double>(doc_, "train.beta2"), get_at<double>(doc_, "train.adam_eps"),
                 get_at<double>(doc_, "train.weight_decay")};
  t.members = get_at<std::size_t>(doc_, "train.members");
  t.batch = get_at<std::size_t>(doc_, "train.batch");
  t.loss = parse_loss_kind(get_at<std::string>(doc_, "train.loss"));
  t.estimator = parse_estimator(get_at<std::string>(doc_, "train.estimator"));
  t.kl_direction = parse_kl_direction(get_at<std::string>(doc_, "train.kl_direction"));
  t.seed = seed();
  as_config([&] { t.validate(); });
  return t;
}

VerifySetup ExperimentConfig::verify() const {
  VerifySetup v;
  v.members = get_at<std::size_t>(doc_, "verify.members");
  v.leads = get_at<std::size_t>(doc_, "verify.leads");
  v.cases = get_at<std::size_t>(doc_, "verify.cases");
  v.split = get_at<std::string>(doc_, "verify.split");
  if (v.split != "test" && v.split != "validation")
    fail(ErrorKind::Config, "verify.split must be 'test' or 'validation'");
  if (v.members < 1 || v.leads < 1 || v.cases < 1)
    fail(ErrorKind::Config, "verify.members, verify.leads and verify.cases must be positive");
  v.options.estimator = parse_estimator(get_at<std::string>(doc_, "verify.estimator"));
  v.options.uniform_weights = get_at<bool>(doc_, "verify.uniform_weights");
  v.options.events.clear();
  for (double l : get_at<std::vector<double>>(doc_, "verify.brier_above")) v.options.events.push_back({l, Exceedance::Above});
  for (double l : get_at<std::vector<double>>(doc_, "verify.brier_below")) v.options.events.push_back({l, Exceedance::Below});
  return v;
}

TrackerConfig ExperimentConfig::tracker() const {
  TrackerConfig t;
  t.radius_km = get_at<double>(doc_, "track.radius_km");
  t.pool_factor = get_at<std::size_t>(doc_, "track.pool_factor");
  t.vorticity_threshold = get_at<double>(doc_, "track.vorticity_threshold");
  t.vorticity_radius_km = get_at<double>(doc_, "track.vorticity_radius_km");
  t.z850_radius_km = get_at<double>(doc_, "track.z850_radius_km");
  t.elevation_max_m = get_at<double>(doc_, "track.elevation_max_m");
  t.cap_factor = get_at<double>(doc_, "track.cap_factor");
  t.advection_radius_km = get_at<double>(doc_, "track.advection_radius_km");
  t.vorticity_seeds = get_at<bool>(doc_, "track.vorticity_seeds");
  t.require_msl_minimum = get_at<bool>(doc_, "track.require_msl_minimum");
  t.require_vorticity = get_at<bool>(doc_, "track.require_vorticity");
  t.require_z850 = get_at<bool>(doc_, "track.require_z850");
  t.step_hours = step_hours();
  as_config([&] { t.validate(); });
  return t;
}

TrackStatsOptions ExperimentConfig::track_stats() const {
  TrackStatsOptions o;
  o.min_fraction = get_at<double>(doc_, "track.min_fraction");
  o.max_lead_hours = get_at<double>(doc_, "track.max_lead_hours");
  o.step_hours = step_hours();
  if (!(o.min_fraction >= 0.0 && o.min_fraction <= 1.0)) fail(ErrorKind::Config, "track.min_fraction must lie in [0, 1]");
  if (!(o.max_lead_hours >= o.step_hours)) fail(ErrorKind::Config, "track.max_lead_hours must be >= one step");
  return o;
}

std::vector<std::string> ExperimentConfig::advection_levels() const {
  return get_at<std::vector<std::string>>(doc_, "track.advection_levels");
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed) {
  nlohmann::json doc = default_config();
  if (path) {
    std::ifstream is(*path);
    if (!is) fail(ErrorKind::Config, "cannot open config file " + path->string());
    nlohmann::json user;
    try {
      user = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::Config, "config file " + path->string() + " is not valid JSON: " + e.what());
    }
    doc = merge_config(doc, user);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  return ExperimentConfig(std::move(doc));
}

}  // namespace ensbench
