#include "ensbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ensbench/error.hpp"

namespace ensbench {

LossKind parse_loss_kind(const std::string& s) {
  if (s == "crps") return LossKind::Crps;
  if (s == "l1") return LossKind::L1;
  fail(ErrorKind::Config, "unknown loss '" + s + "' (expected crps or l1)");
}

std::string to_string(LossKind k) { return k == LossKind::Crps ? "crps" : "l1"; }

void TrainConfig::validate() const {
  require(lambda >= 0.0, "train.lambda must be >= 0");
  require(stages >= 1, "train.stages must be >= 1");
  require(optimizer.lr > 0.0, "train.lr must be > 0");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0,
          "optimizer betas must lie in [0, 1)");
  require(optimizer.weight_decay >= 0.0, "train.weight_decay must be >= 0");
  require(members >= 1, "train.members must be >= 1");
  require(loss == LossKind::L1 || estimator == CrpsEstimator::Empirical || members >= 2,
          "fair CRPS training needs at least 2 members");
  require(batch >= 1, "train.batch must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lambda", lambda},
          {"stages", stages},
          {"iterations", iterations},
          {"lr", optimizer.lr},
          {"beta1", optimizer.beta1},
          {"beta2", optimizer.beta2},
          {"adam_eps", optimizer.eps},
          {"weight_decay", optimizer.weight_decay},
          {"members", members},
          {"batch", batch},
          {"loss", to_string(loss)},
          {"estimator", estimator_name(estimator)},
          {"kl_direction", direction_name(kl_direction)},
          {"seed", seed}};
}

ObjectiveEval evaluate_objective(const ModelParams& params, const TrainWindow& window, std::size_t steps,
                                 const TrainConfig& cfg, std::uint64_t noise_seed, bool with_grads) {
  const auto& arch = params.arch;
  require(steps >= 1 && steps <= window.targets.size(), "window does not hold enough targets for the rollout");
  const std::size_t C = arch.channels;
  const ad::Shape slice_shape{C, arch.height, arch.width};

  ad::Tape tape;
  auto mv = bind_params(tape, params, with_grads);
  const ad::Var init = tape.leaf(window.cube.values, window.cube.shape());
  std::vector<ad::Var> truths;
  for (std::size_t s = 0; s < steps; ++s) {
    require(window.targets[s].size() == slice_shape.size(), "target slice has the wrong size");
    truths.push_back(tape.leaf(window.targets[s], slice_shape));
  }
  std::vector<ad::Var> aux;
  for (std::size_t s = 0; s < steps; ++s)
    aux.push_back(tape.leaf(aux_features(arch, window.cube.time + std::chrono::hours(6 * s)),
                            ad::Shape{arch.aux_channels, arch.height, arch.width}));

  // preds[s][m], kls[s][m]
  std::vector<std::vector<ad::Var>> preds(steps), kls(steps);
  for (std::size_t m = 0; m < cfg.members; ++m) {
    auto rng = make_stream(noise_seed, m);
    ad::Var cube = init;
    for (std::size_t s = 0; s < steps; ++s) {
      const ad::Var q_in[] = {cube, truths[s], aux[s]};
      const ad::Var p_in[] = {cube, aux[s]};
      auto q = tape_perturb(tape, mv.q, arch, tape.concat(q_in));
      auto p = tape_perturb(tape, mv.p, arch, tape.concat(p_in));
      const auto eps = standard_normal(rng, tape.value(q.mu).size());
      ad::Var z = tape.reparam_sample(q.mu, q.log_var, eps);
      ad::Var perturbed = tape.add(cube, z);
      ad::Var next = tape_forecast(tape, mv.f, arch, perturbed, aux[s]);
      preds[s].push_back(next);
      kls[s].push_back(tape.kl(q.mu, q.log_var, p.mu, p.log_var, cfg.kl_direction));
      if (s + 1 < steps) cube = tape_shift(tape, perturbed, next, C);
    }
  }

  std::vector<ad::Var> main_terms, kl_terms;
  for (std::size_t s = 0; s < steps; ++s) {
    main_terms.push_back(cfg.loss == LossKind::Crps ? tape.crps(preds[s], truths[s], cfg.estimator)
                                                    : tape.l1(preds[s], truths[s]));
    for (auto v : kls[s]) kl_terms.push_back(v);
  }
  const double inv_steps = 1.0 / static_cast<double>(steps);
  const double inv_kl = 1.0 / static_cast<double>(kl_terms.size());
  const std::vector<double> main_coeffs(main_terms.size(), inv_steps);
  const std::vector<double> kl_coeffs(kl_terms.size(), inv_kl);
  const ad::Var main_loss = tape.linear_combination(main_terms, main_coeffs);
  const ad::Var kl_loss = tape.linear_combination(kl_terms, kl_coeffs);
  const ad::Var parts[] = {main_loss, kl_loss};
  const double coeffs[] = {1.0, cfg.lambda};
  const ad::Var total = tape.linear_combination(parts, coeffs);

  ObjectiveEval out;
  out.steps = steps;
  out.value = {tape.scalar(total), tape.scalar(main_loss), tape.scalar(kl_loss), cfg.lambda};
  out.kink_signature = tape.kink_signature();
  if (with_grads) {
    tape.backward(total);
    out.grads.resize(params.arrays.size());
    for (std::size_t k = 0; k < params.arrays.size(); ++k) {
      const auto& g = tape.grad(mv.leaves[k]);
      out.grads[k] = g.empty() ? std::vector<double>(params.arrays[k].data.size(), 0.0) : g;
    }
  }
  return out;
}

ObjectiveEval evaluate_batch(const ModelParams& params, std::span<const TrainWindow* const> windows,
                             std::size_t steps, const TrainConfig& cfg, std::span<const std::uint64_t> noise_seeds,
                             bool with_grads) {
  require(!windows.empty() && windows.size() == noise_seeds.size(), "batch needs one noise seed per window");
  ObjectiveEval acc;
  acc.steps = steps;
  acc.value.lambda = cfg.lambda;
  const double w = 1.0 / static_cast<double>(windows.size());
  for (std::size_t b = 0; b < windows.size(); ++b) {
    auto e = evaluate_objective(params, *windows[b], steps, cfg, noise_seeds[b], with_grads);
    acc.value.total += w * e.value.total;
    acc.value.crps_term += w * e.value.crps_term;
    acc.value.kl_term += w * e.value.kl_term;
    acc.kink_signature = acc.kink_signature * 0x100000001b3ull ^ e.kink_signature;
    if (with_grads) {
      if (acc.grads.empty()) {
        acc.grads.resize(e.grads.size());
        for (std::size_t k = 0; k < e.grads.size(); ++k) acc.grads[k].assign(e.grads[k].size(), 0.0);
      }
      for (std::size_t k = 0; k < e.grads.size(); ++k)
        for (std::size_t i = 0; i < e.grads[k].size(); ++i) acc.grads[k][i] += w * e.grads[k][i];
    }
  }
  return acc;
}

IterationDraw draw_iteration(const TrainConfig& cfg, std::size_t iteration, std::size_t n_windows) {
  require(n_windows >= 1, "training needs at least one window");
  auto rng = make_stream(cfg.seed ^ 0x5eedf00dull, iteration);
  std::uniform_int_distribution<std::size_t> pick(0, n_windows - 1);
  IterationDraw d;
  for (std::size_t b = 0; b < cfg.batch; ++b) {
    d.windows.push_back(pick(rng));
    d.noise_seeds.push_back(rng());
  }
  return d;
}

AdamW::AdamW(const ModelParams& params, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& a : params.arrays) {
    m_.emplace_back(a.data.size(), 0.0);
    v_.emplace_back(a.data.size(), 0.0);
  }
}

void AdamW::step(ModelParams& params, const std::vector<std::vector<double>>& grads) {
  require(grads.size() == params.arrays.size(), "gradient list does not match parameters");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.arrays.size(); ++k) {
    auto& p = params.arrays[k];
    const double wd = p.decay ? cfg_.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double g = grads[k][i];
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      p.data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + wd * p.data[i]);
    }
  }
}

TrainResult train(const TrainConfig& cfg, ModelParams params, std::span<const TrainWindow> windows,
                  const ProgressFn& progress) {
  cfg.validate();
  require(!windows.empty(), "training needs at least one window");
  for (const auto& w : windows)
    require(w.targets.size() >= cfg.stages, "every training window must hold at least K targets");

  TrainResult result;
  AdamW opt(params, cfg.optimizer);
  std::size_t iteration = 0;
  for (std::size_t stage = 1; stage <= cfg.stages; ++stage) {
    for (std::size_t i = 0; i < cfg.iterations; ++i, ++iteration) {
      const auto draw = draw_iteration(cfg, iteration, windows.size());
      std::vector<const TrainWindow*> batch;
      for (auto idx : draw.windows) batch.push_back(&windows[idx]);
      ObjectiveEval e;
      try {
        e = evaluate_batch(params, batch, stage, cfg, draw.noise_seeds, true);
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::NumericFault) throw;
        result.diverged = true;
        result.message = "iteration " + std::to_string(iteration) + ": " + err.what();
        result.params = std::move(params);
        return result;
      }
      bool finite = std::isfinite(e.value.total);
      for (const auto& g : e.grads)
        for (double v : g) finite = finite && std::isfinite(v);
      if (!finite) {
        result.diverged = true;
        result.message = "non-finite loss or gradient at iteration " + std::to_string(iteration);
        result.params = std::move(params);
        return result;
      }
      LossRecord rec{iteration, stage, e.steps, e.value.crps_term, e.value.kl_term, e.value.total};
      result.curve.push_back(rec);
      if (progress) progress(rec);

      ModelParams before = params;
      opt.step(params, e.grads);
      if (!params.all_finite()) {
        result.diverged = true;
        result.message = "non-finite parameters after iteration " + std::to_string(iteration);
        result.params = std::move(before);
        return result;
      }
    }
  }
  result.params = std::move(params);
  return result;
}

void write_loss_curve_csv(const std::string& path, const std::vector<LossRecord>& curve, const std::string& meta) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Data, "cannot write loss curve '" + path + "'");
  os.precision(17);
  if (!meta.empty()) os << "# " << meta << '\n';
  os << "iteration,stage,crps_term,kl_term,total\n";
  for (const auto& r : curve)
    os << r.iteration << ',' << r.stage << ',' << r.crps_term << ',' << r.kl_term << ',' << r.total << '\n';
}

GradCheckResult finite_difference_check(const Objective& objective, const ModelParams& params, double eps,
                                        std::size_t coords, std::uint64_t seed) {
  require(eps > 0.0, "finite-difference step must be positive");
  const auto base = objective(params, true);
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t k = 0; k < params.arrays.size(); ++k)
    for (std::size_t i = 0; i < params.arrays[k].data.size(); ++i) all.emplace_back(k, i);
  if (all.size() > coords) {
    auto rng = make_stream(seed, 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(coords);
  }

  GradCheckResult r;
  ModelParams probe = params;
  for (auto [k, i] : all) {
    const double orig = probe.arrays[k].data[i];
    probe.arrays[k].data[i] = orig + eps;
    const auto plus = objective(probe, false);
    probe.arrays[k].data[i] = orig - eps;
    const auto minus = objective(probe, false);
    probe.arrays[k].data[i] = orig;
    if (plus.kink_signature != base.kink_signature || minus.kink_signature != base.kink_signature) {
      ++r.skipped;
      continue;
    }
    const double fd = (plus.value.total - minus.value.total) / (2.0 * eps);
    const double ad = base.grads[k][i];
    const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-6});
    r.max_rel_error = std::max(r.max_rel_error, rel);
    ++r.checked;
  }
  return r;
}

GradCheckResult grad_check(const ModelParams& params, const TrainWindow& window, std::size_t steps,
                           const TrainConfig& cfg, double eps, std::size_t coords, std::uint64_t seed) {
  const std::uint64_t noise = make_stream(seed, 1)();
  Objective obj = [&](const ModelParams& p, bool g) { return evaluate_objective(p, window, steps, cfg, noise, g); };
  return finite_difference_check(obj, params, eps, coords, seed);
}

}  // namespace ensbench
