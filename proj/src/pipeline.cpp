#include "ensbench/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "ensbench/checkpoint.hpp"
#include "ensbench/error.hpp"

namespace ensbench {

namespace fs = std::filesystem;

namespace {

void note(const RunContext& ctx, const std::string& msg) {
  if (ctx.log) *ctx.log << msg << '\n';
}

std::string meta_line(const RunContext& ctx) {
  return "config_hash=" + ctx.config.hash() + " seed=" + std::to_string(ctx.config.seed());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Data, "cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Data, "cannot open " + path.string());
  return is;
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) { return make_stream(seed, stream)(); }

VortexScenario perturb_scenario(const VortexScenario& base, const VortexEnsembleSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  VortexScenario s = base;
  for (auto& v : s.vortices) {
    v.heading_deg += spec.heading_sd_deg * n01(rng);
    v.speed_kmh = std::max(0.0, v.speed_kmh * (1.0 + spec.speed_sd * n01(rng)));
  }
  return s;
}

void write_vortex_data(const RunContext& ctx) {
  const auto spec = ctx.config.vortex();
  const auto levels = ctx.config.advection_levels();
  require(spec.scenario.level_factors.size() == levels.size(),
          "vortex scenario level_factors must match track.advection_levels");
  const double step = ctx.config.step_hours();
  const TimePoint t0 = ctx.config.data_start();
  const auto step_h = std::chrono::hours{static_cast<long long>(step)};

  // Lead index k is valid at t0 + k steps, so the file's nominal init is one step earlier.
  EnsembleForecast fc(spec.members, spec.leads + 1, vortex_variables(levels), spec.grid, t0 - step_h, step);
  fc.config_hash = ctx.config.hash();
  fc.seed = ctx.config.seed();
  for (std::size_t m = 0; m < spec.members; ++m) {
    auto rng = make_stream(ctx.config.seed() ^ 0x766f7274ull, m);
    const auto scen = perturb_scenario(spec.scenario, spec, rng);
    for (std::size_t k = 0; k <= spec.leads; ++k) {
      const auto f = vortex_fields(scen, static_cast<double>(k) * step, spec.grid);
      std::vector<const Field*> planes = {&f.msl, &f.u10, &f.v10, &f.z850, &f.elevation};
      for (std::size_t l = 0; l < levels.size(); ++l) {
        planes.push_back(&f.u_levels[l]);
        planes.push_back(&f.v_levels[l]);
      }
      for (std::size_t c = 0; c < planes.size(); ++c) {
        const auto src = planes[c]->values();
        std::copy(src.begin(), src.end(), fc.slice(m, k, c).begin());
      }
    }
  }
  save_ensembles(ctx.workdir / files::kVortexEnsemble, {fc});

  BestTrack bt;
  bt.id = spec.storm_id;
  const auto& v0 = spec.scenario.vortices.front();
  for (double t = 0.0; t <= spec.scenario.horizon_h + 1e-9; t += step) {
    if (!v0.active(t)) continue;
    bt.points.push_back({t0 + std::chrono::hours{static_cast<long long>(t)}, v0.center(t)});
  }
  auto os = open_out(ctx.workdir / files::kBestTrack);
  os << "# " << meta_line(ctx) << '\n';
  write_best_track_csv(os, bt);
  note(ctx, "vortex ensemble: " + std::to_string(spec.members) + " members, " + std::to_string(spec.leads) +
                " leads on " + spec.grid.describe());
}

/// Samples whose frames all fall in one split, with `K` target steps.
DatasetSplit split_for(const RunContext& ctx, const FrameSeries& series, std::size_t K) {
  return build_dataset(series, 2, K, ctx.config.split());
}

const std::vector<std::size_t>& pick_split(const DatasetSplit& split, const std::string& name) {
  return name == "validation" ? split.validation : split.test;
}

}  // namespace

std::vector<std::string> vortex_variables(const std::vector<std::string>& levels) {
  std::vector<std::string> vars = {"msl", "u10", "v10", "z850", "elevation"};
  for (const auto& l : levels) {
    vars.push_back("u" + l);
    vars.push_back("v" + l);
  }
  return vars;
}

TrackFields track_fields_at(const EnsembleForecast& fc, std::size_t member, std::size_t lead,
                            const std::vector<std::string>& levels) {
  auto field = [&](const std::string& name) {
    const auto s = fc.slice(member, lead, fc.channel_index(name));
    return Field(fc.grid, std::vector<double>(s.begin(), s.end()));
  };
  TrackFields tf;
  tf.msl = field("msl");
  tf.u10 = field("u10");
  tf.v10 = field("v10");
  tf.z850 = field("z850");
  tf.elevation = field("elevation");
  for (const auto& l : levels) {
    tf.u_levels.push_back(field("u" + l));
    tf.v_levels.push_back(field("v" + l));
  }
  return tf;
}

void run_gen_data(const RunContext& ctx) {
  const auto& cfg = ctx.config;
  const auto series = l96_series(cfg.l96(), cfg.data_start(), cfg.data_frames(), cfg.step_hours(), cfg.seed());
  save_series(ctx.workdir / files::kFrames, series, cfg.hash(), cfg.seed());
  note(ctx, "frames: " + std::to_string(series.size()) + " on " + series.grid.describe());

  const auto split = split_for(ctx, series, cfg.train().stages);
  if (split.train.empty()) fail(ErrorKind::Data, "training split is empty");
  const std::size_t first = split.train.front();
  const std::size_t last = split.train.back() + 1 + cfg.train().stages;
  const auto history = climatology_history(series, first, last);
  const auto clim = build_climatology(history, series.variables, series.grid, cfg.climatology_levels());
  save_climatology(ctx.workdir / files::kClimatology, clim, cfg.hash());
  note(ctx, "samples: train " + std::to_string(split.train.size()) + ", validation " +
                std::to_string(split.validation.size()) + ", test " + std::to_string(split.test.size()));

  if (cfg.vortex().enabled) write_vortex_data(ctx);
}

void run_train(const RunContext& ctx, const fs::path& checkpoint) {
  const auto& cfg = ctx.config;
  const auto tcfg = cfg.train();
  const auto series = load_series(ctx.workdir / files::kFrames);
  const auto split = split_for(ctx, series, tcfg.stages);
  if (split.train.empty()) fail(ErrorKind::Data, "training split is empty");
  const auto stats = fit_standardization(series, split.train, 2, tcfg.stages);

  std::vector<TrainWindow> windows;
  windows.reserve(split.train.size());
  for (auto s : split.train) windows.push_back(make_window(series, s, tcfg.stages, stats));

  const auto arch = cfg.arch(series.grid, series.channels());
  const std::size_t every = std::max<std::size_t>(1, tcfg.iterations / 4);
  auto progress = [&](const LossRecord& r) {
    if (r.iteration % every == 0)
      note(ctx, "iteration " + std::to_string(r.iteration) + " stage " + std::to_string(r.stage) + " loss " +
                    std::to_string(r.total));
  };
  auto result = train(tcfg, init_params(arch, cfg.seed()), windows, progress);

  Checkpoint ckpt{result.params, stats, cfg.doc(), cfg.seed(), cfg.hash()};
  save_checkpoint(checkpoint, ckpt);
  fs::path curve = checkpoint;
  curve.replace_filename(checkpoint.stem().string() + "_loss_curve.csv");
  write_loss_curve_csv(curve.string(), result.curve, meta_line(ctx));
  if (result.diverged)
    fail(ErrorKind::NumericFault, "training diverged: " + result.message + " (last good parameters saved to " +
                                      checkpoint.string() + ")");
}

void run_forecast(const RunContext& ctx, const ForecastOptions& opts) {
  const auto& cfg = ctx.config;
  const auto vs = cfg.verify();
  const auto ckpt = load_checkpoint(opts.checkpoint);
  const auto series = load_series(ctx.workdir / files::kFrames);
  const auto& arch = ckpt.params.arch;
  if (arch.channels != series.channels() || arch.height != series.grid.nlat || arch.width != series.grid.nlon)
    fail(ErrorKind::Data, "checkpoint architecture does not match the frame grid " + series.grid.describe());

  const auto split = split_for(ctx, series, vs.leads);
  const auto ics = pick_initial_conditions(pick_split(split, vs.split), vs.cases, vs.leads, series.size() - 1);
  if (ics.size() < vs.cases)
    fail(ErrorKind::Data, "only " + std::to_string(ics.size()) + " initial conditions available in the " + vs.split +
                              " split");

  ModelParams params = ckpt.params;
  RolloutOptions ro;
  ro.threads = ctx.threads;
  std::size_t members = vs.members;
  if (!opts.perturbations) {
    // Zero P's output layer so mu = 0, and drop the noise.
    for (const char* name : {"p.dec.w", "p.dec.b"}) {
      auto& a = params.at(name);
      std::fill(a.data.begin(), a.data.end(), 0.0);
    }
    ro.sigma_scale = 0.0;
    members = 1;
  }

  std::vector<EnsembleForecast> forecasts, truths;
  for (std::size_t i = 0; i < ics.size(); ++i) {
    const auto cube = make_cube(series, ics[i], ckpt.stats);
    auto fc = rollout(params, ckpt.stats, cube, series.variables, series.grid, members, vs.leads,
                      derived_seed(cfg.seed(), i), ro, series.step_hours);
    fc.config_hash = cfg.hash();
    fc.seed = cfg.seed();
    forecasts.push_back(std::move(fc));
    auto truth = truth_forecast(series, ics[i], vs.leads);
    truth.config_hash = cfg.hash();
    truth.seed = cfg.seed();
    truths.push_back(std::move(truth));
  }
  save_ensembles(opts.output, forecasts);
  save_ensembles(ctx.workdir / files::kTruth, truths);
  note(ctx, std::to_string(forecasts.size()) + " cases x " + std::to_string(members) + " members x " +
                std::to_string(vs.leads) + " leads -> " + opts.output.string());
}

MetricReport verify_sets(const RunContext& ctx, const fs::path& forecast, const fs::path& truth) {
  const auto vs = ctx.config.verify();
  const auto fcs = load_ensembles(forecast);
  const auto truths = load_ensembles(truth);
  if (!fcs.empty() && !truths.empty() && !(fcs[0].grid == truths[0].grid))
    fail(ErrorKind::Data, "grid mismatch: forecast grid " + fcs[0].grid.describe() + " vs truth grid " +
                              truths[0].grid.describe());
  if (fcs.size() != truths.size())
    fail(ErrorKind::Data, forecast.string() + " holds " + std::to_string(fcs.size()) + " cases but " + truth.string() +
                              " holds " + std::to_string(truths.size()));
  std::optional<Climatology> clim;
  const fs::path stem = ctx.workdir / files::kClimatology;
  if (fs::exists(fs::path(stem).concat(".json"))) clim = load_climatology(stem);
  else note(ctx, "no climatology in " + ctx.workdir.string() + ": ACC and Brier scores are skipped");

  MetricAccumulator acc;
  for (std::size_t i = 0; i < fcs.size(); ++i) {
    if (fcs[i].init_time != truths[i].init_time)
      fail(ErrorKind::Data, "case " + std::to_string(i) + ": forecast init " + format_time(fcs[i].init_time) +
                                " differs from truth init " + format_time(truths[i].init_time));
    acc.add(score_case(fcs[i], truths[i], clim ? &*clim : nullptr, vs.options));
  }
  auto rep = acc.finalize();
  rep.config_hash = ctx.config.hash();
  rep.seed = ctx.config.seed();
  rep.estimator = estimator_name(vs.options.estimator);
  return rep;
}

void run_verify(const RunContext& ctx, const fs::path& forecast, const fs::path& truth, const std::string& stem) {
  const auto rep = verify_sets(ctx, forecast, truth);
  auto csv = open_out(ctx.workdir / (stem + ".csv"));
  write_report_csv(csv, rep);
  auto js = open_out(ctx.workdir / (stem + ".json"));
  write_report_json(js, rep);
  note(ctx, "verified " + std::to_string(rep.cases) + " cases -> " + (ctx.workdir / stem).string() + ".{csv,json}");
}

EnsembleTrackStats run_track(const RunContext& ctx, const fs::path& ensemble, const fs::path& best_track) {
  const auto& cfg = ctx.config;
  const auto tcfg = cfg.tracker();
  const auto levels = cfg.advection_levels();
  const auto fcs = load_ensembles(ensemble);
  auto bis = open_in(best_track);
  const auto best = read_best_tracks_csv(bis);

  std::vector<TrackCase> cases;
  for (const auto& fc : fcs) {
    if (std::abs(fc.step_hours - tcfg.step_hours) > 1e-9)
      fail(ErrorKind::Data, "ensemble step of " + std::to_string(fc.step_hours) + " h differs from track step_hours");
    const TimePoint t0 = fc.valid_time(0);
    std::vector<std::vector<TrackFields>> member_fields(fc.members);
    for (std::size_t m = 0; m < fc.members; ++m)
      for (std::size_t k = 0; k < fc.leads; ++k) member_fields[m].push_back(track_fields_at(fc, m, k, levels));
    // Every observed storm present at the analysis time is tracked.
    for (const auto& [id, bt] : best) {
      const auto obs = bt.position(t0);
      if (!obs) continue;
      TrackCase tc{id, t0, {}, bt};
      for (std::size_t m = 0; m < fc.members; ++m)
        tc.members.push_back(track_storm(member_fields[m], *obs, tcfg, static_cast<int>(m)));
      cases.push_back(std::move(tc));
    }
  }
  if (cases.empty()) fail(ErrorKind::Data, "no best track is active at any ensemble analysis time");

  const auto stats = ensemble_track_stats(cases, cfg.track_stats());
  {
    auto os = open_out(ctx.workdir / (std::string(files::kTracks) + ".csv"));
    write_tracks_csv(os, std::span<const TrackCase>(cases), meta_line(ctx));
  }
  {
    nlohmann::json j = {{"meta", {{"config_hash", cfg.hash()}, {"seed", cfg.seed()}, {"tracker", tcfg.to_json()}}}};
    j["cases"] = nlohmann::json::array();
    for (const auto& c : cases)
      j["cases"].push_back({{"id", c.id}, {"init", format_time(c.init)}, {"tracks", tracks_to_json(c.members)}});
    auto os = open_out(ctx.workdir / (std::string(files::kTracks) + ".json"));
    os << j.dump(2) << '\n';
  }
  {
    auto os = open_out(ctx.workdir / (std::string(files::kTrackStats) + ".csv"));
    write_track_stats_csv(os, stats, meta_line(ctx));
  }
  {
    auto j = track_stats_to_json(stats);
    j["meta"] = {{"config_hash", cfg.hash()}, {"seed", cfg.seed()}};
    auto os = open_out(ctx.workdir / (std::string(files::kTrackStats) + ".json"));
    os << j.dump(2) << '\n';
  }
  note(ctx, "tracked " + std::to_string(cases.size()) + " cases, " + std::to_string(stats.excluded) + " excluded");
  return stats;
}

MetricReport run_report(const RunContext& ctx, const fs::path& a, const fs::path& b, const fs::path& truth) {
  const auto ra = verify_sets(ctx, a, truth);
  const auto rb = verify_sets(ctx, b, truth);
  auto rep = compare_reports(ra, rb, b.stem().string());
  auto csv = open_out(ctx.workdir / (std::string(files::kReport) + ".csv"));
  write_report_csv(csv, rep);
  auto js = open_out(ctx.workdir / (std::string(files::kReport) + ".json"));
  write_report_json(js, rep);
  note(ctx, "report: " + a.string() + " against baseline " + b.string());
  return rep;
}

}  // namespace ensbench
