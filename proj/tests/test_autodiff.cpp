#include <doctest.h>

#include <cmath>
#include <random>

#include "ensbench/autodiff.hpp"
#include "ensbench/error.hpp"

using namespace ensbench;
using ad::Shape;
using ad::Tape;
using ad::Var;

namespace {

std::vector<double> randn(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

/// Builds a scalar from the leaves; `values` holds one vector per leaf.
using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct Leaf {
  std::vector<double> value;
  Shape shape;
  bool trainable = true;
};

/// Max relative error between tape gradients and central differences,
/// skipping coordinates whose +-eps evaluations change the kink signature.
double check_grads(const Builder& build, std::vector<Leaf> leaves, double eps = 1e-5) {
  auto eval = [&](const std::vector<Leaf>& ls, bool grads, std::vector<std::vector<double>>* out,
                  std::uint64_t* sig) {
    Tape t;
    std::vector<Var> vs;
    for (const auto& l : ls) vs.push_back(t.leaf(l.value, l.shape, l.trainable));
    Var y = build(t, vs);
    if (sig) *sig = t.kink_signature();
    if (grads) {
      t.backward(y);
      for (auto v : vs) out->push_back(t.grad(v));
    }
    return t.scalar(y);
  };
  std::vector<std::vector<double>> g;
  std::uint64_t base_sig = 0;
  eval(leaves, true, &g, &base_sig);
  double worst = 0.0;
  for (std::size_t a = 0; a < leaves.size(); ++a)
    for (std::size_t k = 0; leaves[a].trainable && k < leaves[a].value.size(); ++k) {
      auto plus = leaves, minus = leaves;
      plus[a].value[k] += eps;
      minus[a].value[k] -= eps;
      std::uint64_t sp = 0, sm = 0;
      const double fp = eval(plus, false, nullptr, &sp), fm = eval(minus, false, nullptr, &sm);
      if (sp != base_sig || sm != base_sig) continue;
      const double fd = (fp - fm) / (2 * eps);
      const double ad = g[a][k];
      worst = std::max(worst, std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-6}));
    }
  return worst;
}

Var sum_sq(Tape& t, Var x) {
  // Mean of x^2 / 2, written as KL(N(x, 1) || N(0, 1)).
  const auto n = t.shape(x);
  Var zero = t.leaf(std::vector<double>(n.size(), 0.0), n);
  return t.kl(x, zero, zero, zero, KlDirection::TeacherToStudent);
}

}  // namespace

TEST_CASE("tape ops: gradients match finite differences") {
  std::mt19937_64 rng(21);
  const Shape s{2, 3, 4};
  const int trials = 20;
  SUBCASE("activations, add, scale") {
    for (int trial = 0; trial < trials; ++trial)
      for (auto act : {ad::Activation::Identity, ad::Activation::Tanh, ad::Activation::Silu}) {
        auto b = [&](Tape& t, const std::vector<Var>& v) {
          return sum_sq(t, t.scale(t.add(t.activation(v[0], act), v[1]), 0.7));
        };
        CHECK(check_grads(b, {{randn(rng, s.size()), s}, {randn(rng, s.size()), s}}) < 1e-6);
      }
  }
  SUBCASE("conv2d, periodic and zero padded") {
    for (int trial = 0; trial < trials; ++trial)
      for (bool periodic : {true, false}) {
        ad::ConvSpec spec{1, 1, 1, 1, periodic};
        auto b = [&](Tape& t, const std::vector<Var>& v) { return sum_sq(t, t.conv2d(v[0], v[1], v[2], 3, 3, spec)); };
        CHECK(check_grads(b, {{randn(rng, 2 * 4 * 6), {2, 4, 6}},
                              {randn(rng, 3 * 2 * 9, 0.3), {3 * 2 * 9, 1, 1}},
                              {randn(rng, 3), {3, 1, 1}}}) < 1e-6);
      }
  }
  SUBCASE("strided conv and transposed conv") {
    ad::ConvSpec patch{2, 2, 0, 0, true};
    auto b = [&](Tape& t, const std::vector<Var>& v) {
      Var h = t.conv2d(v[0], v[1], v[2], 2, 2, patch);
      return sum_sq(t, t.conv_transpose2d(h, v[3], v[4], 2, 2, 2, 2));
    };
    for (int trial = 0; trial < trials; ++trial)
      CHECK(check_grads(b, {{randn(rng, 2 * 4 * 6), {2, 4, 6}},
                            {randn(rng, 3 * 2 * 4, 0.4), {24, 1, 1}},
                            {randn(rng, 3), {3, 1, 1}},
                            {randn(rng, 3 * 2 * 4, 0.4), {24, 1, 1}},
                            {randn(rng, 2), {2, 1, 1}}}) < 1e-6);
  }
  SUBCASE("concat, slice, clamp, reparameterized sample") {
    for (int trial = 0; trial < trials; ++trial) {
      const auto eps = randn(rng, s.size());
      auto b = [&](Tape& t, const std::vector<Var>& v) {
        const Var parts[] = {v[0], v[1]};
        Var c = t.concat(parts);
        Var mu = t.slice_channels(c, 1, 2);
        Var lv = t.clamp(t.slice_channels(c, 0, 2), -0.5, 0.5);
        return sum_sq(t, t.reparam_sample(mu, lv, eps, 0.8));
      };
      CHECK(check_grads(b, {{randn(rng, s.size()), s}, {randn(rng, s.size()), s}}) < 1e-6);
    }
  }
  SUBCASE("crps, l1, kl and linear combination") {
    auto crps = [](Tape& t, const std::vector<Var>& v) {
      const Var members[] = {v[0], v[1], v[2]};
      return t.crps(members, v[3], CrpsEstimator::Fair);
    };
    auto l1 = [](Tape& t, const std::vector<Var>& v) {
      const Var members[] = {v[0], v[1], v[2]};
      return t.l1(members, v[3]);
    };
    auto kl = [](Tape& t, const std::vector<Var>& v) {
      return t.kl(v[0], v[1], v[2], v[3], KlDirection::TeacherToStudent);
    };
    auto all = [&](Tape& t, const std::vector<Var>& v) {
      const Var terms[] = {crps(t, v), l1(t, v), kl(t, v)};
      const double coeffs[] = {1.0, 0.5, 0.1};
      return t.linear_combination(terms, coeffs);
    };
    for (int trial = 0; trial < trials; ++trial) {
      // The target of crps and l1 is data; it carries no gradient.
      std::vector<Leaf> leaves = {
          {randn(rng, s.size()), s}, {randn(rng, s.size()), s}, {randn(rng, s.size()), s}, {randn(rng, s.size()), s}};
      CHECK(check_grads(kl, leaves) < 1e-4);
      leaves[3].trainable = false;
      CHECK(check_grads(crps, leaves) < 1e-4);
      CHECK(check_grads(l1, leaves) < 1e-4);
      CHECK(check_grads(all, leaves) < 1e-4);
    }
  }
}

TEST_CASE("linear model with quadratic loss has exact gradients") {
  std::mt19937_64 rng(22);
  ad::ConvSpec one{1, 1, 0, 0, false};
  auto b = [&](Tape& t, const std::vector<Var>& v) { return sum_sq(t, t.conv2d(v[0], v[1], v[2], 1, 1, one)); };
  CHECK(check_grads(b, {{randn(rng, 3 * 2 * 2), {3, 2, 2}}, {randn(rng, 6), {6, 1, 1}}, {randn(rng, 2), {2, 1, 1}}},
                    1e-4) < 1e-8);
}

TEST_CASE("tape shape errors") {
  Tape t;
  Var a = t.leaf({1, 2}, {2, 1, 1});
  Var b = t.leaf({1, 2, 3}, {3, 1, 1});
  CHECK_THROWS_AS(t.add(a, b), Error);
  CHECK_THROWS_AS(t.slice_channels(a, 1, 2), Error);
  CHECK_THROWS_AS(ad::parse_activation("relu6"), Error);
}

TEST_CASE("kink signature separates smooth pieces") {
  auto sig = [](double x) {
    Tape t;
    Var m0 = t.leaf({x}, {1, 1, 1});
    Var m1 = t.leaf({1.0}, {1, 1, 1});
    Var y = t.leaf({0.0}, {1, 1, 1});
    const Var members[] = {m0, m1};
    t.crps(members, y, CrpsEstimator::Empirical);
    return t.kink_signature();
  };
  CHECK(sig(0.2) == sig(0.3));
  CHECK(sig(-0.2) != sig(0.2));
}
