#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ensbench/autodiff.hpp"

namespace ensbench {

/// Shape of one encode/process/decode convolutional network: a patchifying
/// strided convolution, residual grid-preserving blocks h += act(conv(h)),
/// and a transposed convolution back to the input resolution.
struct NetSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t width = 16;
  std::size_t blocks = 2;
};

struct ArchDescriptor {
  std::size_t channels = 2;  // C physical variables
  std::size_t height = 16;
  std::size_t width = 32;
  std::size_t aux_channels = 3;  // sin/cos hour of day, static mask
  bool periodic_lon = true;
  std::size_t patch_h = 2, patch_w = 2;
  std::size_t kernel_h = 3, kernel_w = 3;
  ad::Activation activation = ad::Activation::Tanh;
  std::size_t perturb_width = 16, perturb_blocks = 2;
  std::size_t forecast_width = 32, forecast_blocks = 3;

  std::size_t cube_channels() const { return 2 * channels; }
  /// Student P sees (X^{t-1}, X^t); outputs mean and log-variance over the cube.
  NetSpec perturb_p() const { return {cube_channels() + aux_channels, 2 * cube_channels(), perturb_width, perturb_blocks}; }
  /// Teacher Q additionally sees X^{t+1}.
  NetSpec perturb_q() const {
    return {cube_channels() + channels + aux_channels, 2 * cube_channels(), perturb_width, perturb_blocks};
  }
  NetSpec forecaster() const { return {cube_channels() + aux_channels, channels, forecast_width, forecast_blocks}; }

  void validate() const;
  nlohmann::json to_json() const;
  static ArchDescriptor from_json(const nlohmann::json& j);
};

struct ParamArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool decay = true;  // weights decay, biases do not
};

struct ModelParams {
  ArchDescriptor arch;
  std::vector<ParamArray> arrays;

  std::size_t count() const;
  ParamArray& at(const std::string& name);
  const ParamArray& at(const std::string& name) const;
  bool all_finite() const;
};

/// Hidden layers get scaled-uniform initialisation; the final layer of every
/// network starts at zero, so P and Q emit N(0, I) and the forecaster is the
/// identity on the latest slice.
ModelParams init_params(const ArchDescriptor& arch, std::uint64_t seed);

/// Parameter leaves of one network bound onto a tape.
struct NetVars {
  std::string name;
  NetSpec spec;
  ad::Var enc_w, enc_b;
  std::vector<std::pair<ad::Var, ad::Var>> blocks;
  ad::Var dec_w, dec_b;
};

struct ModelVars {
  NetVars p, q, f;
  // Parallel to ModelParams::arrays.
  std::vector<ad::Var> leaves;
};

ModelVars bind_params(ad::Tape& tape, const ModelParams& params, bool trainable);

/// Runs a network on a (in_channels, H, W) input. Throws NumericFault naming
/// the network and layer when an activation becomes non-finite.
ad::Var run_net(ad::Tape& tape, const NetVars& net, const ArchDescriptor& arch, ad::Var input);

}  // namespace ensbench
