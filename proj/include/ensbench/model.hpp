#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ensbench/ensemble.hpp"
#include "ensbench/losses.hpp"
#include "ensbench/network.hpp"
#include "ensbench/timeutil.hpp"

namespace ensbench {

/// Per-channel z-score statistics of the training data.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;

  /// In-place on a channels x plane array.
  void apply(std::span<double> values, std::size_t plane) const;
  void invert(std::span<double> values, std::size_t plane) const;

  nlohmann::json to_json() const;
  static Standardization from_json(const nlohmann::json& j);
};

/// Two consecutive standardized slices (t-1, t) of C channels on H x W.
/// `time` is the valid time of the latest slice.
struct StateCube {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> values;  // 2 * C * H * W; slice t-1 first
  TimePoint time{};

  std::size_t slice_size() const { return channels * height * width; }
  std::span<const double> previous() const { return {values.data(), slice_size()}; }
  std::span<const double> latest() const { return {values.data() + slice_size(), slice_size()}; }
  ad::Shape shape() const { return {2 * channels, height, width}; }
};

enum class PerturbationSource { P, Q };

struct Perturbation {
  std::vector<double> z;  // cube-shaped
  PerturbationSource source = PerturbationSource::P;
  std::uint64_t stream = 0;
};

/// Independent, reproducible noise stream for (seed, stream id).
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream);
std::vector<double> standard_normal(std::mt19937_64& rng, std::size_t n);

/// Auxiliary input planes: sin/cos of hour of day and a static mask.
std::vector<double> aux_features(const ArchDescriptor& arch, TimePoint time);

GaussianLatent perturb_p(const ModelParams& params, const StateCube& cube);
GaussianLatent perturb_q(const ModelParams& params, const StateCube& cube, std::span<const double> next_truth);

/// Reparameterized draw z = mu + sigma_scale * exp(log_var / 2) * eps.
Perturbation sample(const GaussianLatent& latent, std::mt19937_64& rng, PerturbationSource source = PerturbationSource::P,
                    std::uint64_t stream = 0, double sigma_scale = 1.0);

/// One forecaster step on an already perturbed cube; returns C x H x W.
std::vector<double> forecast_step(const ModelParams& params, const StateCube& perturbed);

// Tape-level building blocks shared by inference and training.
struct LatentVars {
  ad::Var mu, log_var;
};
LatentVars tape_perturb(ad::Tape& tape, const NetVars& net, const ArchDescriptor& arch, ad::Var input);
ad::Var tape_forecast(ad::Tape& tape, const NetVars& net, const ArchDescriptor& arch, ad::Var perturbed_cube,
                      ad::Var aux);
/// Shifts the two-slice window: (latest of `cube`, `next`).
ad::Var tape_shift(ad::Tape& tape, ad::Var cube, ad::Var next, std::size_t channels);

struct RolloutOptions {
  /// Multiplies the sampled standard deviation; 0 gives the noise-free limit.
  double sigma_scale = 1.0;
  /// Noise stream per member; defaults to 0..N-1.
  std::vector<std::uint64_t> member_streams;
  /// Worker threads over members; output is identical for any value.
  std::size_t threads = 1;
};

/// N-member autoregressive ensemble: per member and step, sample z from P at
/// the current cube, add it, forecast, shift the window. Output is
/// de-standardized; lead 0 is cube.time + step_hours.
EnsembleForecast rollout(const ModelParams& params, const Standardization& stats, const StateCube& init,
                         std::vector<std::string> variables, const GridSpec& grid, std::size_t members,
                         std::size_t steps, std::uint64_t seed, const RolloutOptions& opts = {},
                         double step_hours = 6.0);

}  // namespace ensbench
