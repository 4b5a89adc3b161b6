#pragma once

// Minimal reverse-mode differentiation over a fixed operation set. Values
// live in a Tape; Var is a lightweight handle. Nodes are recorded in
// topological order, so backward() is a single reverse sweep.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ensbench/losses.hpp"
#include "ensbench/metrics.hpp"

namespace ensbench::ad {

struct Shape {
  std::size_t c = 1, h = 1, w = 1;
  std::size_t size() const { return c * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

enum class Activation { Identity, Tanh, Silu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct ConvSpec {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  bool periodic_w = true;  // longitude wraps; latitude is zero-padded
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node. Gradients accumulate into leaves marked trainable.
  Var leaf(std::vector<double> value, Shape shape, bool trainable = false);

  const std::vector<double>& value(Var v) const { return nodes_[v.id].value; }
  /// Zeros for nodes the backward pass did not reach.
  std::vector<double> grad(Var v) const;
  Shape shape(Var v) const { return nodes_[v.id].shape; }
  double scalar(Var v) const { return nodes_[v.id].value.at(0); }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded node.
  void backward(Var loss);

  /// Hash of the sign pattern of every kink argument (|.|, sign, clamp
  /// boundaries) evaluated so far. Two evaluations with equal signatures lie
  /// on the same smooth piece of the objective.
  std::uint64_t kink_signature() const { return kink_hash_; }

  // weight: (cout, cin, kh, kw); bias: (cout)
  Var conv2d(Var x, Var weight, Var bias, std::size_t kh, std::size_t kw, const ConvSpec& spec);
  // weight: (cin, cout, kh, kw); bias: (cout); no padding
  Var conv_transpose2d(Var x, Var weight, Var bias, std::size_t kh, std::size_t kw, std::size_t stride_h,
                       std::size_t stride_w);
  Var activation(Var x, Activation act);
  Var add(Var a, Var b);
  Var scale(Var a, double s);
  Var concat(std::span<const Var> parts);
  Var slice_channels(Var x, std::size_t begin, std::size_t count);
  Var clamp(Var x, double lo, double hi);
  /// z = mu + sigma_scale * exp(log_var / 2) * eps
  Var reparam_sample(Var mu, Var log_var, std::span<const double> eps, double sigma_scale = 1.0);

  // Scalar-valued losses; members share one shape.
  Var crps(std::span<const Var> members, Var target, CrpsEstimator estimator);
  Var l1(std::span<const Var> members, Var target);
  Var kl(Var mu_q, Var log_var_q, Var mu_p, Var log_var_p, KlDirection direction);
  /// sum_k coeffs[k] * scalars[k]
  Var linear_combination(std::span<const Var> scalars, std::span<const double> coeffs);

 private:
  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    Shape shape;
    bool needs_grad = false;
    std::function<void(Tape&, std::size_t)> backward;
  };

  Var push(std::vector<double> value, Shape shape, bool needs_grad, std::function<void(Tape&, std::size_t)> bw);
  std::vector<double>& grad_buf(std::size_t id);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  void mix_kink(std::uint64_t bits);

  std::vector<Node> nodes_;
  std::uint64_t kink_hash_ = 0xcbf29ce484222325ull;
};

}  // namespace ensbench::ad
