#include "ensbench/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ensbench/error.hpp"

namespace ensbench {

namespace {

inline double sgn(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

void check_members(std::span<const double> members, std::size_t n, std::span<const double> target) {
  require(n >= 1, "loss needs at least one member");
  require(!target.empty(), "loss target is empty");
  require(members.size() == n * target.size(), "member array does not match n_members x target size");
}

}  // namespace

void GaussianLatent::clamp() {
  for (double& v : log_var) v = std::clamp(v, kLogVarMin, kLogVarMax);
}

void GaussianLatent::validate() const {
  require(mu.size() == log_var.size(), "latent mean and log-variance sizes differ");
  for (std::size_t k = 0; k < mu.size(); ++k)
    require(std::isfinite(mu[k]) && std::isfinite(log_var[k]), "latent contains non-finite entries");
}

CrpsLossGrad crps_loss_grad(std::span<const double> members, std::size_t n_members, std::span<const double> target,
                            CrpsEstimator estimator) {
  check_members(members, n_members, target);
  if (estimator == CrpsEstimator::Fair) require(n_members >= 2, "fair CRPS needs at least two members");
  const std::size_t m_size = target.size();
  const double n = static_cast<double>(n_members);
  const double kappa = estimator == CrpsEstimator::Fair ? 1.0 / (n * (n - 1.0)) : 1.0 / (n * n);
  const double inv_m = 1.0 / static_cast<double>(m_size);

  CrpsLossGrad out;
  out.grad.assign(members.size(), 0.0);
  double total = 0.0;
  for (std::size_t m = 0; m < m_size; ++m) {
    const double y = target[m];
    double abs_term = 0.0, pair_term = 0.0;
    for (std::size_t i = 0; i < n_members; ++i) {
      const double xi = members[i * m_size + m];
      abs_term += std::abs(xi - y);
      double pair_sign = 0.0;
      for (std::size_t j = 0; j < n_members; ++j) {
        const double xj = members[j * m_size + m];
        pair_term += std::abs(xi - xj);
        pair_sign += sgn(xi - xj);
      }
      out.grad[i * m_size + m] = (sgn(xi - y) / n - kappa * pair_sign) * inv_m;
    }
    total += abs_term / n - 0.5 * kappa * pair_term;
  }
  out.loss = total * inv_m;
  return out;
}

KlGrad gaussian_kl_grad(const GaussianLatent& q, const GaussianLatent& p, KlDirection direction) {
  require(q.mu.size() == q.log_var.size() && p.mu.size() == p.log_var.size(), "latent arrays have mismatched sizes");
  require(q.size() == p.size(), "latent shapes differ");
  require(q.size() > 0, "latent is empty");
  const std::size_t n = q.size();
  const double inv = 1.0 / static_cast<double>(n);

  // KL(a||b) for diagonal Gaussians; `a` is the first argument of the divergence.
  const bool q_first = direction == KlDirection::TeacherToStudent;
  const GaussianLatent& a = q_first ? q : p;
  const GaussianLatent& b = q_first ? p : q;

  std::vector<double> d_mu_a(n), d_lv_a(n), d_mu_b(n), d_lv_b(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double diff = a.mu[k] - b.mu[k];
    const double var_a = std::exp(a.log_var[k]);
    const double inv_var_b = std::exp(-b.log_var[k]);
    total += 0.5 * (b.log_var[k] - a.log_var[k]) + 0.5 * (var_a + diff * diff) * inv_var_b - 0.5;
    d_mu_a[k] = diff * inv_var_b * inv;
    d_mu_b[k] = -d_mu_a[k];
    d_lv_a[k] = (-0.5 + 0.5 * var_a * inv_var_b) * inv;
    d_lv_b[k] = (0.5 - 0.5 * (var_a + diff * diff) * inv_var_b) * inv;
  }

  KlGrad out;
  out.loss = total * inv;
  if (q_first) {
    out.d_mu_q = std::move(d_mu_a);
    out.d_log_var_q = std::move(d_lv_a);
    out.d_mu_p = std::move(d_mu_b);
    out.d_log_var_p = std::move(d_lv_b);
  } else {
    out.d_mu_p = std::move(d_mu_a);
    out.d_log_var_p = std::move(d_lv_a);
    out.d_mu_q = std::move(d_mu_b);
    out.d_log_var_q = std::move(d_lv_b);
  }
  return out;
}

CrpsLossGrad l1_loss_grad(std::span<const double> members, std::size_t n_members, std::span<const double> target) {
  check_members(members, n_members, target);
  const std::size_t m_size = target.size();
  const double inv = 1.0 / static_cast<double>(members.size());
  CrpsLossGrad out;
  out.grad.resize(members.size());
  double total = 0.0;
  for (std::size_t i = 0; i < n_members; ++i) {
    for (std::size_t m = 0; m < m_size; ++m) {
      const double d = members[i * m_size + m] - target[m];
      total += std::abs(d);
      out.grad[i * m_size + m] = sgn(d) * inv;
    }
  }
  out.loss = total * inv;
  return out;
}

namespace {

ObjectiveGrad compose(CrpsLossGrad data_term, const GaussianLatent& q, const GaussianLatent& p, double lambda,
                      KlDirection direction) {
  require(lambda >= 0.0 && std::isfinite(lambda), "KL coefficient must be a finite non-negative number");
  ObjectiveGrad out;
  out.kl = gaussian_kl_grad(q, p, direction);
  for (auto* g : {&out.kl.d_mu_q, &out.kl.d_log_var_q, &out.kl.d_mu_p, &out.kl.d_log_var_p})
    for (double& v : *g) v *= lambda;
  out.value.crps_term = data_term.loss;
  out.value.kl_term = out.kl.loss;
  out.value.lambda = lambda;
  out.value.total = data_term.loss + lambda * out.kl.loss;
  out.d_members = std::move(data_term.grad);
  return out;
}

}  // namespace

ObjectiveGrad combined_loss(std::span<const double> members, std::size_t n_members, std::span<const double> target,
                            const GaussianLatent& q, const GaussianLatent& p, double lambda, CrpsEstimator estimator,
                            KlDirection direction) {
  return compose(crps_loss_grad(members, n_members, target, estimator), q, p, lambda, direction);
}

ObjectiveGrad l1_kl_loss(std::span<const double> members, std::size_t n_members, std::span<const double> target,
                         const GaussianLatent& q, const GaussianLatent& p, double lambda, KlDirection direction) {
  return compose(l1_loss_grad(members, n_members, target), q, p, lambda, direction);
}

KlDirection parse_kl_direction(const std::string& s) {
  if (s == "q_to_p") return KlDirection::TeacherToStudent;
  if (s == "p_to_q") return KlDirection::StudentToTeacher;
  fail(ErrorKind::Config, "unknown KL direction '" + s + "' (expected q_to_p or p_to_q)");
}

std::string direction_name(KlDirection d) { return d == KlDirection::TeacherToStudent ? "q_to_p" : "p_to_q"; }

CrpsEstimator parse_estimator(const std::string& s) {
  if (s == "fair") return CrpsEstimator::Fair;
  if (s == "empirical") return CrpsEstimator::Empirical;
  fail(ErrorKind::Config, "unknown CRPS estimator '" + s + "' (expected fair or empirical)");
}

std::string estimator_name(CrpsEstimator e) { return e == CrpsEstimator::Fair ? "fair" : "empirical"; }

}  // namespace ensbench
