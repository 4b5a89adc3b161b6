#pragma once

// Training objectives with analytic (sub)gradients. Reductions are means over
// state entries (and members for L1) so the KL coefficient is independent of
// grid size. Kinks use the subgradient convention sign(0) = 0.

#include <span>
#include <string>
#include <vector>

#include "ensbench/metrics.hpp"

namespace ensbench {

inline constexpr double kLogVarMin = -12.0;
inline constexpr double kLogVarMax = 12.0;
inline constexpr double kDefaultKlWeight = 1e-4;

/// Diagonal Gaussian over a flattened state: mean and log-variance per entry.
struct GaussianLatent {
  std::vector<double> mu;
  std::vector<double> log_var;

  std::size_t size() const { return mu.size(); }
  /// Clamp log_var into [kLogVarMin, kLogVarMax].
  void clamp();
  void validate() const;
};

/// Which way the divergence between the teacher (q) and student (p) runs.
enum class KlDirection { TeacherToStudent /* KL(q||p) */, StudentToTeacher /* KL(p||q) */ };

KlDirection parse_kl_direction(const std::string& s);  // "q_to_p" | "p_to_q"
std::string direction_name(KlDirection d);
CrpsEstimator parse_estimator(const std::string& s);  // "fair" | "empirical"
std::string estimator_name(CrpsEstimator e);

struct LossValue {
  double total = 0.0;
  double crps_term = 0.0;  // or the L1 term for the L1 objective
  double kl_term = 0.0;
  double lambda = 0.0;
};

struct CrpsLossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // n_members x entries, row-major
};

/// Mean over entries of the pointwise ensemble CRPS. `members` is
/// n_members x target.size(), row-major.
CrpsLossGrad crps_loss_grad(std::span<const double> members, std::size_t n_members, std::span<const double> target,
                            CrpsEstimator estimator);

struct KlGrad {
  double loss = 0.0;
  std::vector<double> d_mu_q, d_log_var_q, d_mu_p, d_log_var_p;
};

/// Mean over entries of the elementwise diagonal-Gaussian divergence.
KlGrad gaussian_kl_grad(const GaussianLatent& q, const GaussianLatent& p,
                        KlDirection direction = KlDirection::TeacherToStudent);

/// Mean absolute error over members and entries.
CrpsLossGrad l1_loss_grad(std::span<const double> members, std::size_t n_members, std::span<const double> target);

struct ObjectiveGrad {
  LossValue value;
  std::vector<double> d_members;
  KlGrad kl;  // gradients already scaled by lambda
};

/// CRPS + lambda * KL.
ObjectiveGrad combined_loss(std::span<const double> members, std::size_t n_members, std::span<const double> target,
                            const GaussianLatent& q, const GaussianLatent& p, double lambda,
                            CrpsEstimator estimator = CrpsEstimator::Fair,
                            KlDirection direction = KlDirection::TeacherToStudent);

/// L1 + lambda * KL; the L1 term is reported in LossValue::crps_term.
ObjectiveGrad l1_kl_loss(std::span<const double> members, std::size_t n_members, std::span<const double> target,
                         const GaussianLatent& q, const GaussianLatent& p, double lambda,
                         KlDirection direction = KlDirection::TeacherToStudent);

}  // namespace ensbench
