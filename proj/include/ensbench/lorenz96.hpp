#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ensbench {

struct L96Config {
  std::size_t K = 40;
  double F = 8.0;
  double dt = 0.05;  // model time units per step (one step ~ 6 h)
  std::size_t spinup = 1000;

  void validate() const;
};

/// dX_i/dt = (X_{i+1} - X_{i-2}) X_{i-1} - X_i + F with periodic indexing.
std::vector<double> l96_tendency(std::span<const double> x, double F);

/// One classical fourth-order Runge-Kutta step of size dt.
void l96_rk4_step(std::vector<double>& x, double F, double dt);

/// Returns steps + 1 states starting with `init`. Throws IntegrationFault
/// when |X| exceeds 1e6 or a value turns non-finite.
std::vector<std::vector<double>> l96_integrate(std::span<const double> init, const L96Config& cfg,
                                               std::size_t steps);

/// X = F plus a small seeded perturbation, advanced through the spin-up.
std::vector<double> l96_spun_up_state(const L96Config& cfg, std::uint64_t seed);

}  // namespace ensbench
