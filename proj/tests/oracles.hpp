#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace oracle {

/// CRPS by integrating (F(z) - H(z - y))^2 piecewise exactly: between
/// consecutive breakpoints both F and H are constant.
inline double crps_integral(std::span<const double> members, double y) {
  std::vector<double> pts(members.begin(), members.end());
  pts.push_back(y);
  std::sort(pts.begin(), pts.end());
  const double n = static_cast<double>(members.size());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    const double a = pts[k], b = pts[k + 1];
    if (b <= a) continue;
    const double mid = 0.5 * (a + b);
    double f = 0.0;
    for (double x : members) f += x <= mid ? 1.0 : 0.0;
    f /= n;
    const double h = y <= mid ? 1.0 : 0.0;
    total += (f - h) * (f - h) * (b - a);
  }
  return total;
}

/// CRPS by midpoint quadrature on a uniform grid of `cells` cells.
inline double crps_quadrature(std::span<const double> members, double y, std::size_t cells) {
  double lo = y, hi = y;
  for (double x : members) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  lo -= 1.0;
  hi += 1.0;
  const double dz = (hi - lo) / static_cast<double>(cells);
  const double n = static_cast<double>(members.size());
  double total = 0.0;
  for (std::size_t k = 0; k < cells; ++k) {
    const double z = lo + (static_cast<double>(k) + 0.5) * dz;
    double f = 0.0;
    for (double x : members) f += x <= z ? 1.0 : 0.0;
    f /= n;
    const double h = y <= z ? 1.0 : 0.0;
    total += (f - h) * (f - h) * dz;
  }
  return total;
}

/// Diagonal-Gaussian KL(q || p) for one entry, from the textbook formula.
inline double kl_entry(double mu_q, double var_q, double mu_p, double var_p) {
  return 0.5 * std::log(var_p / var_q) + (var_q + (mu_q - mu_p) * (mu_q - mu_p)) / (2.0 * var_p) - 0.5;
}

}  // namespace oracle
