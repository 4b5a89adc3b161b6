#include "ensbench/lorenz96.hpp"

#include <cmath>
#include <random>
#include <string>

#include "ensbench/error.hpp"

namespace ensbench {

void L96Config::validate() const {
  require(K >= 4, "Lorenz-96 ring needs K >= 4");
  require(dt > 0.0 && std::isfinite(dt), "Lorenz-96 dt must be positive");
  require(std::isfinite(F), "Lorenz-96 forcing must be finite");
}

std::vector<double> l96_tendency(std::span<const double> x, double F) {
  const std::size_t K = x.size();
  require(K >= 4, "Lorenz-96 ring needs K >= 4");
  std::vector<double> d(K);
  for (std::size_t i = 0; i < K; ++i) {
    const double xp1 = x[(i + 1) % K];
    const double xm1 = x[(i + K - 1) % K];
    const double xm2 = x[(i + K - 2) % K];
    d[i] = (xp1 - xm2) * xm1 - x[i] + F;
  }
  return d;
}

void l96_rk4_step(std::vector<double>& x, double F, double dt) {
  const std::size_t K = x.size();
  std::vector<double> tmp(K);
  const auto k1 = l96_tendency(x, F);
  for (std::size_t i = 0; i < K; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  const auto k2 = l96_tendency(tmp, F);
  for (std::size_t i = 0; i < K; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  const auto k3 = l96_tendency(tmp, F);
  for (std::size_t i = 0; i < K; ++i) tmp[i] = x[i] + dt * k3[i];
  const auto k4 = l96_tendency(tmp, F);
  for (std::size_t i = 0; i < K; ++i) x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

namespace {

void check_state(std::span<const double> x, std::size_t step) {
  for (double v : x)
    if (!std::isfinite(v) || std::abs(v) > 1e6)
      fail(ErrorKind::IntegrationFault, "Lorenz-96 state blew up at step " + std::to_string(step));
}

}  // namespace

std::vector<std::vector<double>> l96_integrate(std::span<const double> init, const L96Config& cfg,
                                               std::size_t steps) {
  cfg.validate();
  require(init.size() == cfg.K, "initial state length does not match K");
  check_state(init, 0);
  std::vector<std::vector<double>> traj;
  traj.reserve(steps + 1);
  traj.emplace_back(init.begin(), init.end());
  std::vector<double> x(init.begin(), init.end());
  for (std::size_t s = 1; s <= steps; ++s) {
    l96_rk4_step(x, cfg.F, cfg.dt);
    check_state(x, s);
    traj.push_back(x);
  }
  return traj;
}

std::vector<double> l96_spun_up_state(const L96Config& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> x(cfg.K, cfg.F);
  for (double& v : x) v += noise(rng);
  for (std::size_t s = 0; s < cfg.spinup; ++s) l96_rk4_step(x, cfg.F, cfg.dt);
  check_state(x, cfg.spinup);
  return x;
}

}  // namespace ensbench
