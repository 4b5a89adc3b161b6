#include "ensbench/model.hpp"

#include <cmath>
#include <thread>

#include "ensbench/error.hpp"

namespace ensbench {

void Standardization::apply(std::span<double> values, std::size_t plane) const {
  require(values.size() == mean.size() * plane, "standardization: array does not match channel count");
  for (std::size_t c = 0; c < mean.size(); ++c)
    for (std::size_t k = 0; k < plane; ++k) values[c * plane + k] = (values[c * plane + k] - mean[c]) / stddev[c];
}

void Standardization::invert(std::span<double> values, std::size_t plane) const {
  require(values.size() == mean.size() * plane, "standardization: array does not match channel count");
  for (std::size_t c = 0; c < mean.size(); ++c)
    for (std::size_t k = 0; k < plane; ++k) values[c * plane + k] = values[c * plane + k] * stddev[c] + mean[c];
}

nlohmann::json Standardization::to_json() const { return {{"mean", mean}, {"stddev", stddev}}; }

Standardization Standardization::from_json(const nlohmann::json& j) {
  Standardization s{j.at("mean").get<std::vector<double>>(), j.at("stddev").get<std::vector<double>>()};
  require(s.mean.size() == s.stddev.size(), "standardization mean/stddev length mismatch");
  for (double v : s.stddev) require(v > 0.0, "standardization stddev must be positive");
  return s;
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  z ^= z >> 31;
  return std::mt19937_64(z);
}

std::vector<double> standard_normal(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = dist(rng);
  return out;
}

std::vector<double> aux_features(const ArchDescriptor& arch, TimePoint time) {
  const std::size_t plane = arch.height * arch.width;
  std::vector<double> out(arch.aux_channels * plane, 1.0);
  const double phase = 2.0 * kPi * static_cast<double>(calendar(time).hour) / 24.0;
  const double vals[2] = {std::sin(phase), std::cos(phase)};
  for (std::size_t c = 0; c < std::min<std::size_t>(2, arch.aux_channels); ++c)
    std::fill(out.begin() + static_cast<long>(c * plane), out.begin() + static_cast<long>((c + 1) * plane), vals[c]);
  return out;
}

namespace {

void check_cube(const ModelParams& params, const StateCube& cube) {
  const auto& a = params.arch;
  require(cube.channels == a.channels && cube.height == a.height && cube.width == a.width,
          "state cube does not match the model architecture");
  require(cube.values.size() == 2 * cube.slice_size(), "state cube value count mismatch");
}

ad::Var aux_leaf(ad::Tape& tape, const ArchDescriptor& arch, TimePoint time) {
  return tape.leaf(aux_features(arch, time), ad::Shape{arch.aux_channels, arch.height, arch.width});
}

}  // namespace

LatentVars tape_perturb(ad::Tape& tape, const NetVars& net, const ArchDescriptor& arch, ad::Var input) {
  ad::Var out = run_net(tape, net, arch, input);
  const std::size_t cc = arch.cube_channels();
  ad::Var mu = tape.slice_channels(out, 0, cc);
  ad::Var lv = tape.clamp(tape.slice_channels(out, cc, cc), kLogVarMin, kLogVarMax);
  return {mu, lv};
}

ad::Var tape_forecast(ad::Tape& tape, const NetVars& net, const ArchDescriptor& arch, ad::Var perturbed_cube,
                      ad::Var aux) {
  const ad::Var parts[] = {perturbed_cube, aux};
  ad::Var delta = run_net(tape, net, arch, tape.concat(parts));
  ad::Var latest = tape.slice_channels(perturbed_cube, arch.channels, arch.channels);
  return tape.add(latest, delta);
}

ad::Var tape_shift(ad::Tape& tape, ad::Var cube, ad::Var next, std::size_t channels) {
  const ad::Var parts[] = {tape.slice_channels(cube, channels, channels), next};
  return tape.concat(parts);
}

GaussianLatent perturb_p(const ModelParams& params, const StateCube& cube) {
  check_cube(params, cube);
  ad::Tape tape;
  auto mv = bind_params(tape, params, false);
  ad::Var x = tape.leaf(cube.values, cube.shape());
  const ad::Var parts[] = {x, aux_leaf(tape, params.arch, cube.time)};
  auto lat = tape_perturb(tape, mv.p, params.arch, tape.concat(parts));
  return {tape.value(lat.mu), tape.value(lat.log_var)};
}

GaussianLatent perturb_q(const ModelParams& params, const StateCube& cube, std::span<const double> next_truth) {
  check_cube(params, cube);
  require(next_truth.size() == cube.slice_size(), "next-step truth does not match the cube slice size");
  ad::Tape tape;
  auto mv = bind_params(tape, params, false);
  ad::Var x = tape.leaf(cube.values, cube.shape());
  ad::Var y = tape.leaf({next_truth.begin(), next_truth.end()}, ad::Shape{cube.channels, cube.height, cube.width});
  const ad::Var parts[] = {x, y, aux_leaf(tape, params.arch, cube.time)};
  auto lat = tape_perturb(tape, mv.q, params.arch, tape.concat(parts));
  return {tape.value(lat.mu), tape.value(lat.log_var)};
}

Perturbation sample(const GaussianLatent& latent, std::mt19937_64& rng, PerturbationSource source,
                    std::uint64_t stream, double sigma_scale) {
  latent.validate();
  const auto eps = standard_normal(rng, latent.size());
  Perturbation p;
  p.source = source;
  p.stream = stream;
  p.z.resize(latent.size());
  for (std::size_t k = 0; k < p.z.size(); ++k)
    p.z[k] = latent.mu[k] + sigma_scale * std::exp(0.5 * latent.log_var[k]) * eps[k];
  return p;
}

std::vector<double> forecast_step(const ModelParams& params, const StateCube& perturbed) {
  check_cube(params, perturbed);
  ad::Tape tape;
  auto mv = bind_params(tape, params, false);
  ad::Var x = tape.leaf(perturbed.values, perturbed.shape());
  ad::Var y = tape_forecast(tape, mv.f, params.arch, x, aux_leaf(tape, params.arch, perturbed.time));
  return tape.value(y);
}

EnsembleForecast rollout(const ModelParams& params, const Standardization& stats, const StateCube& init,
                         std::vector<std::string> variables, const GridSpec& grid, std::size_t members,
                         std::size_t steps, std::uint64_t seed, const RolloutOptions& opts, double step_hours) {
  check_cube(params, init);
  require(members >= 1 && steps >= 1, "rollout needs at least one member and one step");
  require(variables.size() == init.channels, "variable names do not match channel count");
  require(grid.nlat == init.height && grid.nlon == init.width, "grid does not match the state cube");
  require(opts.member_streams.empty() || opts.member_streams.size() == members,
          "member_streams must list one stream per member");

  EnsembleForecast out(members, steps, std::move(variables), grid, init.time, step_hours);
  const std::size_t plane = grid.size();
  const auto hours = std::chrono::hours{static_cast<long long>(std::llround(step_hours))};

  auto run_member = [&](std::size_t m) {
    const std::uint64_t stream = opts.member_streams.empty() ? m : opts.member_streams[m];
    auto rng = make_stream(seed, stream);
    StateCube cube = init;
    for (std::size_t s = 0; s < steps; ++s) {
      try {
        const auto latent = perturb_p(params, cube);
        const auto z = sample(latent, rng, PerturbationSource::P, stream, opts.sigma_scale);
        StateCube perturbed = cube;
        for (std::size_t k = 0; k < perturbed.values.size(); ++k) perturbed.values[k] += z.z[k];
        auto next = forecast_step(params, perturbed);
        auto dst = out.slice(m, s, 0);
        std::vector<double> phys = next;
        stats.invert(phys, plane);
        std::copy(phys.begin(), phys.end(), dst.begin());
        cube.values.assign(perturbed.latest().begin(), perturbed.latest().end());
        cube.values.insert(cube.values.end(), next.begin(), next.end());
        cube.time += hours;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NumericFault) throw;
        fail(ErrorKind::NumericFault,
             std::string(e.what()) + " (member " + std::to_string(m) + ", step " + std::to_string(s + 1) + ")");
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, members));
  if (threads == 1) {
    for (std::size_t m = 0; m < members; ++m) run_member(m);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t m = t; m < members; m += threads) run_member(m);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace ensbench
