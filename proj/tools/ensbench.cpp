// Command-line front end: gen-data, train, forecast, verify, track, report.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ensbench/error.hpp"
#include "ensbench/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ensbench;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kNumericFault = 4 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return kConfigError;
    case ErrorKind::NumericFault:
    case ErrorKind::IntegrationFault:
      return kNumericFault;
    default:
      return kDataError;
  }
}

fs::path default_workdir() {
  if (const char* env = std::getenv("ENSBENCH_DATA_DIR"); env && *env) return env;
  return "ensbench_out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ensbench: learned-perturbation ensemble forecasting benchmark"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "working directory (default $ENSBENCH_DATA_DIR or ./ensbench_out)");
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--threads", threads, "worker threads for ensemble rollouts")->check(CLI::PositiveNumber);
  app.add_option("--set", overrides, "config override key=value, repeatable");

  auto* gen = app.add_subcommand("gen-data", "generate frames, climatology and synthetic vortex data");

  std::string train_ckpt;
  auto* trn = app.add_subcommand("train", "train the perturbation and forecast networks");
  trn->add_option("--checkpoint", train_ckpt, "checkpoint path (default <out>/checkpoint.ensc)");

  std::string fc_ckpt, fc_output;
  bool fc_plain = false;
  auto* fcs = app.add_subcommand("forecast", "run ensemble forecasts from held-out initial conditions");
  fcs->add_option("--checkpoint", fc_ckpt, "checkpoint path (default <out>/checkpoint.ensc)");
  fcs->add_option("--output", fc_output, "forecast file (default <out>/forecast.ense)");
  fcs->add_flag("--no-perturbation", fc_plain, "single deterministic member without learned perturbations");

  std::string v_forecast, v_truth, v_stem = files::kMetrics;
  auto* ver = app.add_subcommand("verify", "score forecasts against truth");
  ver->add_option("--forecast", v_forecast, "forecast file (default <out>/forecast.ense)");
  ver->add_option("--truth", v_truth, "truth file (default <out>/truth.ense)");
  ver->add_option("--name", v_stem, "output file stem inside <out>");

  std::string t_ensemble, t_best;
  auto* trk = app.add_subcommand("track", "track storms in a vortex ensemble");
  trk->add_option("--ensemble", t_ensemble, "vortex ensemble (default <out>/vortex_ensemble.ense)");
  trk->add_option("--best-track", t_best, "best-track CSV (default <out>/best_track.csv)");

  std::string r_a, r_b, r_truth;
  auto* rep = app.add_subcommand("report", "compare forecast set A against baseline B");
  rep->add_option("--a", r_a, "forecast set A")->required();
  rep->add_option("--b", r_b, "baseline forecast set B")->required();
  rep->add_option("--truth", r_truth, "truth file (default <out>/truth.ense)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    const fs::path workdir = out_dir.empty() ? default_workdir() : fs::path(out_dir);
    std::optional<fs::path> cfg_file;
    if (!config_path.empty()) cfg_file = config_path;
    RunContext ctx{load_config(cfg_file, overrides, seed), workdir, threads, &std::cerr};
    fs::create_directories(workdir);
    auto in_work = [&](const std::string& given, const char* fallback) {
      if (given.empty()) return workdir / fallback;
      const fs::path p(given);
      return p.is_absolute() ? p : workdir / p;
    };

    if (*gen) {
      run_gen_data(ctx);
    } else if (*trn) {
      run_train(ctx, in_work(train_ckpt, files::kCheckpoint));
    } else if (*fcs) {
      run_forecast(ctx, {in_work(fc_ckpt, files::kCheckpoint), in_work(fc_output, files::kForecast), !fc_plain});
    } else if (*ver) {
      run_verify(ctx, in_work(v_forecast, files::kForecast), in_work(v_truth, files::kTruth), v_stem);
    } else if (*trk) {
      run_track(ctx, in_work(t_ensemble, files::kVortexEnsemble), in_work(t_best, files::kBestTrack));
    } else if (*rep) {
      run_report(ctx, in_work(r_a, files::kForecast), in_work(r_b, files::kForecast), in_work(r_truth, files::kTruth));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}
