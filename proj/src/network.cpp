#include "ensbench/network.hpp"

#include <cmath>
#include <random>

#include "ensbench/error.hpp"

namespace ensbench {

void ArchDescriptor::validate() const {
  require(channels >= 1 && height >= 1 && width >= 1, "architecture needs positive channel and grid sizes");
  require(patch_h >= 1 && patch_w >= 1, "patch size must be positive");
  require(height % patch_h == 0 && width % patch_w == 0,
          "grid " + std::to_string(height) + "x" + std::to_string(width) + " is not divisible by the patch size");
  require(kernel_h % 2 == 1 && kernel_w % 2 == 1, "block kernels must have odd size");
  require(kernel_h <= height / patch_h || kernel_h == 1, "block kernel taller than the encoded grid");
  require(perturb_width >= 1 && forecast_width >= 1, "network width must be positive");
}

nlohmann::json ArchDescriptor::to_json() const {
  return {{"channels", channels},
          {"height", height},
          {"width", width},
          {"aux_channels", aux_channels},
          {"periodic_lon", periodic_lon},
          {"patch", {patch_h, patch_w}},
          {"kernel", {kernel_h, kernel_w}},
          {"activation", ad::to_string(activation)},
          {"perturb_width", perturb_width},
          {"perturb_blocks", perturb_blocks},
          {"forecast_width", forecast_width},
          {"forecast_blocks", forecast_blocks}};
}

ArchDescriptor ArchDescriptor::from_json(const nlohmann::json& j) {
  ArchDescriptor a;
  a.channels = j.at("channels").get<std::size_t>();
  a.height = j.at("height").get<std::size_t>();
  a.width = j.at("width").get<std::size_t>();
  a.aux_channels = j.at("aux_channels").get<std::size_t>();
  a.periodic_lon = j.at("periodic_lon").get<bool>();
  a.patch_h = j.at("patch").at(0).get<std::size_t>();
  a.patch_w = j.at("patch").at(1).get<std::size_t>();
  a.kernel_h = j.at("kernel").at(0).get<std::size_t>();
  a.kernel_w = j.at("kernel").at(1).get<std::size_t>();
  a.activation = ad::parse_activation(j.at("activation").get<std::string>());
  a.perturb_width = j.at("perturb_width").get<std::size_t>();
  a.perturb_blocks = j.at("perturb_blocks").get<std::size_t>();
  a.forecast_width = j.at("forecast_width").get<std::size_t>();
  a.forecast_blocks = j.at("forecast_blocks").get<std::size_t>();
  a.validate();
  return a;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += a.data.size();
  return n;
}

ParamArray& ModelParams::at(const std::string& name) {
  for (auto& a : arrays)
    if (a.name == name) return a;
  fail(ErrorKind::InvalidArgument, "no parameter array named '" + name + "'");
}

const ParamArray& ModelParams::at(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  fail(ErrorKind::InvalidArgument, "no parameter array named '" + name + "'");
}

bool ModelParams::all_finite() const {
  for (const auto& a : arrays)
    for (double v : a.data)
      if (!std::isfinite(v)) return false;
  return true;
}

namespace {

std::size_t product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

void add_net(ModelParams& mp, const std::string& name, const NetSpec& spec, const ArchDescriptor& arch,
             std::mt19937_64& rng) {
  auto uniform_array = [&](std::string n, std::vector<std::size_t> shape, std::size_t fan_in, double gain) {
    ParamArray a{std::move(n), std::move(shape), {}, true};
    a.data.resize(product(a.shape));
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : a.data) v = dist(rng);
    mp.arrays.push_back(std::move(a));
  };
  auto zero_array = [&](std::string n, std::vector<std::size_t> shape, bool decay) {
    ParamArray a{std::move(n), std::move(shape), {}, decay};
    a.data.assign(product(a.shape), 0.0);
    mp.arrays.push_back(std::move(a));
  };

  const std::size_t w = spec.width;
  uniform_array(name + ".enc.w", {w, spec.in_channels, arch.patch_h, arch.patch_w},
                spec.in_channels * arch.patch_h * arch.patch_w, 1.0);
  zero_array(name + ".enc.b", {w}, false);
  for (std::size_t b = 0; b < spec.blocks; ++b) {
    const std::string prefix = name + ".block" + std::to_string(b);
    uniform_array(prefix + ".w", {w, w, arch.kernel_h, arch.kernel_w}, w * arch.kernel_h * arch.kernel_w, 0.5);
    zero_array(prefix + ".b", {w}, false);
  }
  zero_array(name + ".dec.w", {w, spec.out_channels, arch.patch_h, arch.patch_w}, true);
  zero_array(name + ".dec.b", {spec.out_channels}, false);
}

}  // namespace

ModelParams init_params(const ArchDescriptor& arch, std::uint64_t seed) {
  arch.validate();
  ModelParams mp;
  mp.arch = arch;
  std::mt19937_64 rng(seed);
  add_net(mp, "p", arch.perturb_p(), arch, rng);
  add_net(mp, "q", arch.perturb_q(), arch, rng);
  add_net(mp, "f", arch.forecaster(), arch, rng);
  return mp;
}

ModelVars bind_params(ad::Tape& tape, const ModelParams& params, bool trainable) {
  ModelVars mv;
  std::size_t idx = 0;
  auto next = [&](const ParamArray& a) {
    ad::Shape s{a.data.size(), 1, 1};
    return tape.leaf(a.data, s, trainable);
  };
  auto bind_net = [&](NetVars& nv, const std::string& name, const NetSpec& spec) {
    nv.name = name;
    nv.spec = spec;
    nv.enc_w = next(params.arrays[idx++]);
    nv.enc_b = next(params.arrays[idx++]);
    for (std::size_t b = 0; b < spec.blocks; ++b) {
      ad::Var w = next(params.arrays[idx++]);
      ad::Var bias = next(params.arrays[idx++]);
      nv.blocks.emplace_back(w, bias);
    }
    nv.dec_w = next(params.arrays[idx++]);
    nv.dec_b = next(params.arrays[idx++]);
  };
  const auto& arch = params.arch;
  bind_net(mv.p, "p", arch.perturb_p());
  bind_net(mv.q, "q", arch.perturb_q());
  bind_net(mv.f, "f", arch.forecaster());
  require(idx == params.arrays.size(), "parameter arrays do not match the architecture descriptor");
  // Leaves were pushed consecutively, one per array.
  const std::size_t first = mv.p.enc_w.id;
  for (std::size_t k = 0; k < idx; ++k) mv.leaves.push_back(ad::Var{first + k});
  return mv;
}

namespace {

void check_layer(const ad::Tape& tape, ad::Var v, const std::string& net, std::size_t layer) {
  for (double x : tape.value(v))
    if (!std::isfinite(x))
      fail(ErrorKind::NumericFault, "non-finite activation in network " + net + " layer " + std::to_string(layer));
}

}  // namespace

ad::Var run_net(ad::Tape& tape, const NetVars& net, const ArchDescriptor& arch, ad::Var input) {
  const ad::Shape in = tape.shape(input);
  require(in.c == net.spec.in_channels && in.h == arch.height && in.w == arch.width,
          "network " + net.name + " received an input of the wrong shape");
  ad::ConvSpec patchify{arch.patch_h, arch.patch_w, 0, 0, arch.periodic_lon};
  ad::Var h = tape.conv2d(input, net.enc_w, net.enc_b, arch.patch_h, arch.patch_w, patchify);
  std::size_t layer = 0;
  check_layer(tape, h, net.name, layer++);
  ad::ConvSpec same{1, 1, (arch.kernel_h - 1) / 2, (arch.kernel_w - 1) / 2, arch.periodic_lon};
  for (const auto& [w, b] : net.blocks) {
    ad::Var z = tape.conv2d(h, w, b, arch.kernel_h, arch.kernel_w, same);
    h = tape.add(h, tape.activation(z, arch.activation));
    check_layer(tape, h, net.name, layer++);
  }
  ad::Var out = tape.conv_transpose2d(h, net.dec_w, net.dec_b, arch.patch_h, arch.patch_w, arch.patch_h, arch.patch_w);
  check_layer(tape, out, net.name, layer);
  return out;
}

}  // namespace ensbench
