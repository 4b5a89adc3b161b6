#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ensbench/checkpoint.hpp"
#include "ensbench/climatology.hpp"
#include "ensbench/config.hpp"
#include "ensbench/dataset.hpp"
#include "ensbench/error.hpp"
#include "ensbench/losses.hpp"
#include "ensbench/metrics.hpp"
#include "ensbench/model.hpp"
#include "ensbench/pipeline.hpp"
#include "ensbench/tracker.hpp"
#include "ensbench/train.hpp"
#include "ensbench/vortex.hpp"
#include "oracles.hpp"

using namespace ensbench;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kSource = ENSBENCH_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

void randomize(ModelParams& p, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, scale);
  for (auto& arr : p.arrays)
    for (auto& v : arr.data) v += d(rng);
}

std::vector<double> randn(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// 1 ----------------------------------------------------------------------

Outcome crps_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> nd(1, 16);
  std::normal_distribution<double> n(0, 1);
  double worst = 0.0;
  bool mae_exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> m(static_cast<std::size_t>(nd(rng)));
    for (auto& x : m) x = n(rng) * 2.0;
    const double y = n(rng) * 2.0;
    const double got = crps_ensemble(m, y, CrpsEstimator::Empirical);
    worst = std::max(worst, std::abs(got - oracle::crps_integral(m, y)));
    if (m.size() == 1 && got != std::abs(m[0] - y)) mae_exact = false;
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const double x = n(rng), y = n(rng);
    const double one[] = {x};
    if (crps_ensemble(one, y, CrpsEstimator::Empirical) != std::abs(x - y)) mae_exact = false;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && mae_exact && secs < 10.0,
          fmt("max |CRPS - integral| = %.2e, ", worst) + (mae_exact ? "N=1 equals MAE exactly" : "N=1 differs from MAE") +
              fmt(", %.2f s", secs)};
}

// 2 ----------------------------------------------------------------------

ArchDescriptor small_arch(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 2);
  ArchDescriptor a;
  a.channels = 1 + static_cast<std::size_t>(pick(rng) == 0);
  a.height = pick(rng) == 0 ? 2 : 1;
  a.width = 8;
  a.patch_h = a.height;
  a.patch_w = 2;
  a.kernel_h = 1;
  a.kernel_w = 3;
  const ad::Activation acts[] = {ad::Activation::Tanh, ad::Activation::Silu, ad::Activation::Identity};
  a.activation = acts[pick(rng)];
  a.perturb_width = 2 + static_cast<std::size_t>(pick(rng));
  a.perturb_blocks = 1;
  a.forecast_width = 3 + static_cast<std::size_t>(pick(rng));
  a.forecast_blocks = 1 + static_cast<std::size_t>(pick(rng) == 0);
  return a;
}

TrainWindow random_window(const ArchDescriptor& a, std::size_t K, std::mt19937_64& rng) {
  const std::size_t n = a.channels * a.height * a.width;
  TrainWindow w;
  w.cube = {a.channels, a.height, a.width, randn(rng, 2 * n), parse_time("2010-03-01T06:00:00Z")};
  for (std::size_t k = 0; k < K; ++k) w.targets.push_back(randn(rng, n));
  return w;
}

/// Worst relative error of an analytic gradient against central differences,
/// skipping coordinates whose +-eps move crosses a kink.
double fd_worst(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
                const std::vector<double>& grad, const std::function<bool(const std::vector<double>&, std::size_t)>& near_kink,
                double eps = 1e-5) {
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (near_kink(x, k)) continue;
    auto p = x, m = x;
    p[k] += eps;
    m[k] -= eps;
    worst = std::max(worst, rel_err(grad[k], (f(p) - f(m)) / (2 * eps)));
  }
  return worst;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2002);
  double w_crps = 0.0, w_l1 = 0.0, w_kl = 0.0, w_obj = 0.0;
  std::size_t checked = 0;
  const double eps = 1e-5;
  for (int model = 0; model < 100; ++model) {
    // Pointwise losses on a random small ensemble.
    const std::size_t N = 2 + static_cast<std::size_t>(model % 5), E = 6;
    const auto members = randn(rng, N * E);
    const auto target = randn(rng, E);
    auto near = [&](const std::vector<double>& x, std::size_t k) {
      const std::size_t e = k % E;
      if (std::abs(x[k] - target[e]) < 10 * eps) return true;
      for (std::size_t j = 0; j < N; ++j)
        if (j * E + e != k && std::abs(x[k] - x[j * E + e]) < 10 * eps) return true;
      return false;
    };
    const auto est = model % 2 ? CrpsEstimator::Fair : CrpsEstimator::Empirical;
    const auto cg = crps_loss_grad(members, N, target, est);
    w_crps = std::max(w_crps, fd_worst([&](const std::vector<double>& x) { return crps_loss_grad(x, N, target, est).loss; },
                                       members, cg.grad, near));
    const auto lg = l1_loss_grad(members, N, target);
    w_l1 = std::max(w_l1, fd_worst([&](const std::vector<double>& x) { return l1_loss_grad(x, N, target).loss; },
                                   members, lg.grad, near));

    GaussianLatent q{randn(rng, E), randn(rng, E)}, p{randn(rng, E), randn(rng, E)};
    const auto dir = model % 3 ? KlDirection::TeacherToStudent : KlDirection::StudentToTeacher;
    const auto kg = gaussian_kl_grad(q, p, dir);
    auto none = [](const std::vector<double>&, std::size_t) { return false; };
    auto kl_of = [&](int which) {
      return [&, which](const std::vector<double>& x) {
        GaussianLatent qq = q, pp = p;
        (which == 0 ? qq.mu : which == 1 ? qq.log_var : which == 2 ? pp.mu : pp.log_var) = x;
        return gaussian_kl_grad(qq, pp, dir).loss;
      };
    };
    w_kl = std::max({w_kl, fd_worst(kl_of(0), q.mu, kg.d_mu_q, none), fd_worst(kl_of(1), q.log_var, kg.d_log_var_q, none),
                     fd_worst(kl_of(2), p.mu, kg.d_mu_p, none), fd_worst(kl_of(3), p.log_var, kg.d_log_var_p, none)});

    // Full objective through a random small model.
    const auto arch = small_arch(rng);
    auto params = init_params(arch, 3000 + model);
    randomize(params, 4000 + model, 0.2);
    TrainConfig cfg;
    cfg.members = 3;
    cfg.lambda = 0.3;
    cfg.estimator = est;
    cfg.kl_direction = dir;
    const std::size_t steps = 1 + static_cast<std::size_t>(model % 3);
    const auto r = grad_check(params, random_window(arch, steps, rng), steps, cfg, 1e-5, 200, model);
    w_obj = std::max(w_obj, r.max_rel_error);
    checked += r.checked;
  }
  const double secs = seconds_since(t0);
  const bool ok = w_crps < 1e-4 && w_l1 < 1e-4 && w_kl < 1e-4 && w_obj < 1e-4 && checked >= 100 * 150 && secs < 120.0;
  std::ostringstream os;
  os << "max rel err crps " << fmt("%.1e", w_crps) << ", l1 " << fmt("%.1e", w_l1) << ", kl " << fmt("%.1e", w_kl)
     << ", objective " << fmt("%.1e", w_obj) << " (" << checked << " coords), " << fmt("%.1f s", secs);
  return {ok, os.str()};
}

// 3 ----------------------------------------------------------------------

Outcome kl_closed_form() {
  const auto a = gaussian_kl_grad({{1.0}, {0.0}}, {{0.0}, {0.0}}).loss;
  const auto b = gaussian_kl_grad({{0.0}, {std::log(4.0)}}, {{0.0}, {0.0}}).loss;
  const double want_b = 1.5 - std::log(2.0);
  return {std::abs(a - 0.5) < 1e-10 && std::abs(b - want_b) < 1e-10 && std::abs(b - 0.80685) < 1e-5,
          fmt("KL(N(1,1)||N(0,1)) = %.12f, KL(N(0,4)||N(0,1)) = %.12f", a, b)};
}

// 4 ----------------------------------------------------------------------

Outcome perturbation_free_limit() {
  ArchDescriptor arch;
  arch.channels = 1;
  arch.height = 1;
  arch.width = 40;
  arch.patch_h = 1;
  arch.patch_w = 2;
  arch.kernel_h = 1;
  arch.kernel_w = 5;
  auto params = init_params(arch, 77);
  randomize(params, 78, 0.1);
  const GridSpec g{1, 40, 0.0, 1.0, 0.0, 9.0};
  std::mt19937_64 rng(79);
  StateCube init{1, 1, 40, randn(rng, 80), parse_time("2018-01-01T00:00:00Z")};
  const Standardization stats{{2.0}, {3.5}};
  const std::size_t steps = 15;

  auto quiet = params;
  for (const char* n : {"p.dec.w", "p.dec.b"}) std::fill(quiet.at(n).data.begin(), quiet.at(n).data.end(), 0.0);
  RolloutOptions ro;
  ro.sigma_scale = 0.0;
  const auto fc = rollout(quiet, stats, init, {"x"}, g, 4, steps, 1, ro);
  double worst = 0.0;
  StateCube cube = init;
  for (std::size_t s = 0; s < steps; ++s) {
    auto next = forecast_step(quiet, cube);
    auto phys = next;
    stats.invert(phys, g.size());
    for (std::size_t m = 0; m < 4; ++m) {
      const auto got = fc.slice(m, s, 0);
      for (std::size_t k = 0; k < phys.size(); ++k) worst = std::max(worst, std::abs(got[k] - phys[k]));
    }
    cube.values.assign(cube.latest().begin(), cube.latest().end());
    cube.values.insert(cube.values.end(), next.begin(), next.end());
    cube.time += std::chrono::hours{6};
  }

  const auto ens = rollout(params, stats, init, {"x"}, g, 8, steps, 2);
  const auto w = latitude_weights(g);
  double min_spread = 1e300, first = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double sp = spread(ens.member_slices(s, 0), g, w);
    if (s == 0) first = sp;
    min_spread = std::min(min_spread, sp);
  }
  return {worst < 1e-4 && first > 0.0 && min_spread > 0.0,
          fmt("max deviation from deterministic %.2e; ", worst) + fmt("spread step 1 %.4f, min over 15 steps %.4f", first, min_spread)};
}

// 5, 6 -------------------------------------------------------------------

struct LossDesignRun {
  MetricReport crps, l1;
  double train_reduction = 0.0;
  double seconds = 0.0;
};

double held_out_crps_term(const ModelParams& params, const std::vector<TrainWindow>& windows, TrainConfig cfg) {
  cfg.loss = LossKind::Crps;
  cfg.estimator = CrpsEstimator::Fair;
  double total = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i)
    total += evaluate_objective(params, windows[i], cfg.stages, cfg, 9000 + i, false).value.crps_term;
  return total / static_cast<double>(windows.size());
}

LossDesignRun loss_design() {
  const auto t0 = Clock::now();
  const fs::path work = fs::temp_directory_path() / "ensbench_accept_l96";
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path cfg_path = kSource / "configs" / "l96_accept.json";
  RunContext crps_ctx{load_config(cfg_path, {"train.loss=crps"}, std::nullopt), work, 1, &std::cerr};
  RunContext l1_ctx{load_config(cfg_path, {"train.loss=l1"}, std::nullopt), work, 1, &std::cerr};

  run_gen_data(crps_ctx);
  run_train(crps_ctx, work / "crps.ensc");
  run_train(l1_ctx, work / "l1.ensc");
  run_forecast(crps_ctx, {work / "crps.ensc", work / "crps_fc.ense", true});
  run_forecast(l1_ctx, {work / "l1.ensc", work / "l1_fc.ense", true});

  LossDesignRun out;
  out.crps = verify_sets(crps_ctx, work / "crps_fc.ense", work / files::kTruth);
  out.l1 = verify_sets(l1_ctx, work / "l1_fc.ense", work / files::kTruth);

  // Held-out K-step fair-CRPS term before and after training.
  const auto tcfg = crps_ctx.config.train();
  const auto ckpt = load_checkpoint(work / "crps.ensc");
  const auto series = load_series(work / files::kFrames);
  const auto split = build_dataset(series, 2, tcfg.stages, crps_ctx.config.split());
  std::vector<TrainWindow> val;
  const std::size_t stride = std::max<std::size_t>(1, split.validation.size() / 64);
  for (std::size_t i = 0; i < split.validation.size(); i += stride)
    val.push_back(make_window(series, split.validation[i], tcfg.stages, ckpt.stats));
  const double before = held_out_crps_term(init_params(ckpt.params.arch, crps_ctx.config.seed()), val, tcfg);
  const double after = held_out_crps_term(ckpt.params, val, tcfg);
  out.train_reduction = 1.0 - after / before;
  out.seconds = seconds_since(t0);
  return out;
}

Outcome loss_design_verdict(const LossDesignRun& r) {
  std::ostringstream os;
  bool ok = r.seconds <= 1800.0;
  std::size_t wins = 0, leads = 0;
  os << "fair CRPS over " << r.crps.cases << " ICs, CRPS+KL vs L1+KL:";
  for (const auto& row : r.crps.rows) {
    const double other = r.l1.row(row.variable, row.lead).crps;
    const bool win = row.crps <= other;
    os << "\n      lead " << row.lead << ": " << fmt("%.4f vs %.4f", row.crps, other) << (win ? "" : "  <-- worse");
    if (row.lead >= 3) {
      ++leads;
      wins += win;
      ok = ok && win;
    }
  }
  os << "\n      leads >= 3 won " << wins << "/" << leads << fmt(", %.0f s total", r.seconds);
  return {ok, os.str()};
}

Outcome spread_skill(const LossDesignRun& r) {
  std::ostringstream os;
  bool ok = true;
  os << "SSR per lead:";
  for (const auto& row : r.crps.rows) {
    const double s = row.ssr.value_or(std::nan(""));
    os << ' ' << row.lead << '=' << fmt("%.2f", s);
    if (row.lead >= 5 && row.lead <= 10) ok = ok && s >= 0.5 && s <= 1.5;
  }
  return {ok, os.str()};
}

// 7 ----------------------------------------------------------------------

bool cap_holds(const Track& t, double cap) {
  for (std::size_t k = 2; k < t.points.size(); ++k) {
    const double prev = great_circle_km(t.points[k - 2].pos(), t.points[k - 1].pos());
    const double cur = great_circle_km(t.points[k - 1].pos(), t.points[k].pos());
    if (prev > 0.0 && cur > cap * prev + 1e-6) return false;
  }
  return true;
}

Outcome tracker_oracle() {
  const auto t0 = Clock::now();
  // Wide enough that a 40 km/h storm stays inside for 120 h.
  const GridSpec g{141, 201, 0.0, 0.5, 80.0, 0.5};
  const TrackerConfig cfg;
  const double cell_km = static_cast<double>(cfg.pool_factor) * g.lat_step * kEarthRadiusKm * kPi / 180.0;
  const std::size_t leads = 20;
  std::vector<double> err(leads + 1, 0.0);
  std::vector<std::size_t> count(leads + 1, 0);
  bool complete = true, capped = true;
  for (int s = 0; s < 20; ++s) {
    const auto sc = random_scenario(7000 + s, 10.0, 40.0);
    std::vector<TrackFields> fields;
    for (std::size_t k = 0; k <= leads; ++k) fields.push_back(TrackFields::from(vortex_fields(sc, 6.0 * k, g)));
    const auto tr = track_storm(fields, sc.vortices[0].start, cfg);
    complete = complete && tr.points.size() == leads + 1;
    capped = capped && cap_holds(tr, cfg.cap_factor);
    for (std::size_t k = 0; k < tr.points.size(); ++k) {
      err[k] += great_circle_km(tr.points[k].pos(), sc.vortices[0].center(tr.points[k].lead_hours));
      ++count[k];
    }
  }
  double worst = 0.0;
  for (std::size_t k = 0; k <= leads; ++k) worst = std::max(worst, count[k] ? err[k] / count[k] : 1e300);

  const auto ridge = load_scenario(kSource / "configs" / "ridge_scenario.json");
  std::vector<TrackFields> rf;
  for (std::size_t k = 0; k <= leads; ++k) rf.push_back(TrackFields::from(vortex_fields(ridge, 6.0 * k, vortex_grid())));
  const auto rt = track_storm(rf, ridge.vortices[0].start, cfg);
  capped = capped && cap_holds(rt, cfg.cap_factor);
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << fmt("worst per-lead mean error %.1f km (cell %.1f km)", worst, cell_km) << (complete ? "" : ", some tracks lost")
     << ", ridge track ends '" << to_string(rt.terminated) << "' after " << rt.points.size() << " points"
     << (capped ? ", cap holds" : ", cap violated") << fmt(", %.1f s", secs);
  return {worst <= cell_km && complete && rt.terminated == TrackEnd::Elevation && capped && secs < 60.0, os.str()};
}

// 8 ----------------------------------------------------------------------

Outcome track_statistics() {
  const TimePoint t0 = parse_time("2018-09-10T00:00:00Z");
  BestTrack best{"S1", {}};
  for (int h = 0; h <= 120; h += 6) best.points.push_back({t0 + std::chrono::hours{h}, {15.0 + 0.1 * h, 140.0}});
  // Members displaced perpendicular to the northward track by +-dlon.
  const double dlon = 0.4;
  auto member = [&](int id, double off) {
    Track t{id, {}, TrackEnd::Horizon};
    for (int h = 0; h <= 120; h += 6) t.points.push_back({double(h), 15.0 + 0.1 * h, 140.0 + off, 1000.0});
    return t;
  };
  const TrackCase sym{"S1", t0, {member(0, dlon), member(1, -dlon)}, best};
  const auto s = ensemble_track_stats(std::span<const TrackCase>(&sym, 1));
  const auto& l = s.leads[3];
  const double d = great_circle_km({15.0 + 0.1 * l.lead_hours, 140.0 + dlon}, {15.0 + 0.1 * l.lead_hours, 140.0});
  const bool sym_ok = l.error_km < 1e-9 && std::abs(l.spread_km - d) < 1e-9 * d;

  Track lost{2, {{0.0, 15.0, 140.0, 1000.0}}, TrackEnd::Lost};
  const TrackCase uneven{"S2", t0, {member(0, 0.3), member(1, -0.1), member(2, 0.2)}, best};
  const TrackCase half{"S3", t0, {member(0, 0.2), member(1, 0.1), lost, lost}, best};
  const TrackCase cases[] = {uneven, half};
  const auto m = ensemble_track_stats(cases);
  double se = 0.0, ss = 0.0;
  for (const auto& x : m.leads) {
    se += x.error_km;
    ss += x.spread_km;
  }
  const bool sums = se == m.acc_error_km && ss == m.acc_spread_km;
  const bool gate = m.excluded == 1 && !m.cases[1].included && !m.cases[1].note.empty() && m.cases[0].included;
  std::ostringstream os;
  os << fmt("ERROR_TC %.2e km, Spread_TC %.3f km", l.error_km, l.spread_km) << fmt(" (d = %.3f km)", d)
     << (sums ? ", Acc sums exact" : ", Acc sums differ") << ", excluded " << m.excluded << " case ("
     << m.cases[1].note << ")";
  return {sym_ok && sums && gate, os.str()};
}

// 9 ----------------------------------------------------------------------

Outcome brier_and_percentiles() {
  std::mt19937_64 rng(9009);
  std::normal_distribution<double> n(0, 1);
  std::uniform_int_distribution<int> nm(1, 12);
  const GridSpec g{4, 6, -30.0, 20.0, 0.0, 60.0};
  const auto w = latitude_weights(g);
  bool bounded = true;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t N = static_cast<std::size_t>(nm(rng));
    std::vector<std::vector<double>> store(N, std::vector<double>(g.size()));
    for (auto& m : store)
      for (auto& v : m) v = n(rng);
    std::vector<double> truth(g.size()), thr(g.size());
    for (auto& v : truth) v = n(rng);
    for (auto& v : thr) v = n(rng);
    MemberSlices ms(store.begin(), store.end());
    for (auto dir : {Exceedance::Above, Exceedance::Below}) {
      const double b = brier(ms, truth, thr, dir, g, w);
      bounded = bounded && b >= 0.0 && b <= 1.0;
    }
  }
  const std::vector<double> thr(g.size(), 0.0), hot(g.size(), 1.0), cold(g.size(), -1.0);
  const MemberSlices all_hot = {hot, hot}, all_cold = {cold, cold};
  const double perfect = brier(all_hot, hot, thr, Exceedance::Above, g, w);
  const double worst = brier(all_cold, hot, thr, Exceedance::Above, g, w);

  std::vector<ClimatologySample> hist;
  const TimePoint t0 = parse_time("2002-01-01T00:00:00Z");
  for (int y = 0; y < 3; ++y)
    for (int d = 0; d < 365; d += 3)
      for (int h = 0; h < 24; h += 6) {
        ClimatologySample s{t0 + std::chrono::hours{24 * (365 * y + d) + h}, {std::vector<double>(g.size())}};
        for (auto& v : s.values[0]) v = n(rng) * (1.0 + 0.1 * d / 30.0);
        hist.push_back(std::move(s));
      }
  const auto clim = build_climatology(hist, {"x"}, g);
  bool monotone = true;
  std::size_t tables = 0;
  for (const auto& [key, st] : clim.strata)
    for (std::size_t p = 0; p < g.size(); ++p) {
      for (std::size_t lv = 1; lv < clim.levels.size(); ++lv)
        monotone = monotone && st.percentiles[0][lv - 1][p] <= st.percentiles[0][lv][p];
      ++tables;
    }
  std::ostringstream os;
  os << "BS in [0,1] on 4000 random sets: " << (bounded ? "yes" : "no") << ", perfect " << perfect << ", worst "
     << worst << ", percentile tables monotone: " << (monotone ? "yes" : "no") << " (" << tables << " point tables)";
  return {bounded && perfect == 0.0 && worst == 1.0 && monotone, os.str()};
}

// 10 ---------------------------------------------------------------------

int run_cli(const fs::path& out, const std::string& args) {
  const std::string cmd = std::string(ENSBENCH_CLI) + " --threads 1 --config " +
                          (kSource / "configs" / "l96_smoke.json").string() + " --out " + out.string() + " " + args +
                          " >> " + (out.parent_path() / (out.filename().string() + ".log")).string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "ensbench_accept_det";
  fs::remove_all(root);
  fs::create_directories(root);
  const char* steps[] = {"gen-data", "train", "forecast", "forecast --no-perturbation --output deterministic.ense",
                         "verify", "track", "report --a forecast.ense --b deterministic.ense"};
  for (const char* run : {"a", "b"})
    for (const char* step : steps)
      if (const int code = run_cli(root / run, step); code != 0)
        return {false, std::string("step '") + step + "' exited with " + std::to_string(code)};
  std::size_t files = 0, bytes = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    const auto other = root / "b" / e.path().filename();
    if (!fs::exists(other)) return {false, "missing in second run: " + e.path().filename().string()};
    const auto x = slurp(e.path());
    if (x != slurp(other)) return {false, "differs: " + e.path().filename().string()};
    ++files;
    bytes += x.size();
  }
  std::size_t second = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(root / "b")) ++second;
  return {second == files && files >= 15,
          std::to_string(files) + " files, " + std::to_string(bytes) + " bytes identical across two runs"};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number; default is all of them.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << o.detail << std::endl;
  };

  report(1, "CRPS oracle", crps_oracle);
  report(2, "gradient suite", gradient_suite);
  report(3, "KL closed form", kl_closed_form);
  report(4, "perturbation-free limit", perturbation_free_limit);

  std::optional<LossDesignRun> run;
  std::string run_error;
  try {
    if (wanted(5) || wanted(6)) run = loss_design();
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  report(5, "loss design on Lorenz-96", [&]() -> Outcome {
    if (!run) return {false, "exception: " + run_error};
    return loss_design_verdict(*run);
  });
  report(6, "spread-skill sanity", [&]() -> Outcome {
    if (!run) return {false, "exception: " + run_error};
    return spread_skill(*run);
  });
  if (run) {
    const bool ok = run->train_reduction >= 0.5;
    failures += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << "  [5b] training reduces held-out fair CRPS: "
              << fmt("%.1f%% lower than untrained", 100.0 * run->train_reduction) << std::endl;
  }

  report(7, "tracker oracle", tracker_oracle);
  report(8, "track statistics", track_statistics);
  report(9, "Brier bounds and percentile monotonicity", brier_and_percentiles);
  report(10, "determinism", determinism);
  std::cout << (failures ? std::to_string(failures) + " check(s) failed" : std::string("all checks passed")) << std::endl;
  return failures ? 1 : 0;
}
