#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensbench/model.hpp"

namespace ensbench {

enum class LossKind { Crps, L1 };

LossKind parse_loss_kind(const std::string& s);
std::string to_string(LossKind k);

struct AdamWConfig {
  double lr = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

struct TrainConfig {
  double lambda = kDefaultKlWeight;
  std::size_t stages = 3;  // curriculum K: stage k rolls out k steps
  std::size_t iterations = 300;  // per stage
  AdamWConfig optimizer;
  std::size_t members = 8;
  std::size_t batch = 1;  // windows per iteration
  LossKind loss = LossKind::Crps;
  CrpsEstimator estimator = CrpsEstimator::Fair;
  KlDirection kl_direction = KlDirection::TeacherToStudent;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Standardized training sample: the input cube and targets X^{t+1..t+K}.
struct TrainWindow {
  StateCube cube;
  std::vector<std::vector<double>> targets;
};

struct LossRecord {
  std::size_t iteration = 0;
  std::size_t stage = 0;
  std::size_t steps = 0;  // autoregressive steps actually unrolled
  double crps_term = 0.0;
  double kl_term = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<LossRecord> curve;
  bool diverged = false;
  std::string message;
};

struct ObjectiveEval {
  LossValue value;
  std::uint64_t kink_signature = 0;
  std::vector<std::vector<double>> grads;  // parallel to ModelParams::arrays; empty unless requested
  std::size_t steps = 0;
};

/// Objective for one window: mean over `steps` unrolled steps of
/// [loss(members, truth) + lambda * mean_m KL], perturbing with samples from Q.
ObjectiveEval evaluate_objective(const ModelParams& params, const TrainWindow& window, std::size_t steps,
                                 const TrainConfig& cfg, std::uint64_t noise_seed, bool with_grads);

/// Mean of evaluate_objective over several windows, each with its own noise seed.
ObjectiveEval evaluate_batch(const ModelParams& params, std::span<const TrainWindow* const> windows,
                             std::size_t steps, const TrainConfig& cfg, std::span<const std::uint64_t> noise_seeds,
                             bool with_grads);

/// Window indices and noise seeds drawn for a global iteration.
struct IterationDraw {
  std::vector<std::size_t> windows;
  std::vector<std::uint64_t> noise_seeds;
};
IterationDraw draw_iteration(const TrainConfig& cfg, std::size_t iteration, std::size_t n_windows);

class AdamW {
 public:
  AdamW(const ModelParams& params, AdamWConfig cfg);
  void step(ModelParams& params, const std::vector<std::vector<double>>& grads);
  std::size_t steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

using ProgressFn = std::function<void(const LossRecord&)>;

/// Curriculum training. On a non-finite loss or numeric fault, stops and
/// returns the last finite parameters with `diverged` set.
TrainResult train(const TrainConfig& cfg, ModelParams params, std::span<const TrainWindow> windows,
                  const ProgressFn& progress = {});

void write_loss_curve_csv(const std::string& path, const std::vector<LossRecord>& curve, const std::string& meta);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose +-eps evaluations straddle a kink
};

using Objective = std::function<ObjectiveEval(const ModelParams&, bool with_grads)>;

/// Central differences on a random subset of parameter coordinates (all of
/// them when the model has fewer than `coords`). Relative error is
/// |ad - fd| / max(|ad|, |fd|, 1e-6).
GradCheckResult finite_difference_check(const Objective& objective, const ModelParams& params, double eps,
                                        std::size_t coords, std::uint64_t seed);

/// finite_difference_check on the full training objective.
GradCheckResult grad_check(const ModelParams& params, const TrainWindow& window, std::size_t steps,
                           const TrainConfig& cfg, double eps = 1e-5, std::size_t coords = 200,
                           std::uint64_t seed = 0);

}  // namespace ensbench
