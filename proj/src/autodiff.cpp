#include "ensbench/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "ensbench/error.hpp"

namespace ensbench::ad {

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "silu") return Activation::Silu;
  fail(ErrorKind::InvalidArgument, "unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Silu: return "silu";
  }
  return "identity";
}

Var Tape::push(std::vector<double> value, Shape shape, bool needs_grad,
               std::function<void(Tape&, std::size_t)> bw) {
  Node n;
  n.value = std::move(value);
  n.shape = shape;
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(std::vector<double> value, Shape shape, bool trainable) {
  require(value.size() == shape.size(), "leaf value does not match its shape");
  return push(std::move(value), shape, trainable, nullptr);
}

std::vector<double> Tape::grad(Var v) const {
  const auto& n = nodes_[v.id];
  return n.grad.empty() ? std::vector<double>(n.value.size(), 0.0) : n.grad;
}

std::vector<double>& Tape::grad_buf(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::mix_kink(std::uint64_t bits) {
  kink_hash_ ^= bits + 0x9e3779b97f4a7c15ull + (kink_hash_ << 6) + (kink_hash_ >> 2);
}

void Tape::backward(Var loss) {
  require(nodes_[loss.id].value.size() == 1, "backward() needs a scalar loss");
  for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  grad_buf(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.needs_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, id);
  }
}

Var Tape::conv2d(Var x, Var weight, Var bias, std::size_t kh, std::size_t kw, const ConvSpec& spec) {
  const Shape in = shape(x);
  const std::size_t cin = in.c;
  const std::size_t cout = shape(bias).size();
  require(value(weight).size() == cout * cin * kh * kw, "conv2d weight size mismatch");
  require(spec.stride_h >= 1 && spec.stride_w >= 1, "conv2d stride must be positive");
  require(in.h + 2 * spec.pad_h >= kh && in.w + 2 * spec.pad_w >= kw, "conv2d kernel larger than input");
  const std::size_t oh = (in.h + 2 * spec.pad_h - kh) / spec.stride_h + 1;
  const std::size_t ow = (in.w + 2 * spec.pad_w - kw) / spec.stride_w + 1;
  const Shape out{cout, oh, ow};

  // Column index table: input column for (output column, kernel column); -1 = zero pad.
  std::vector<long> col(ow * kw);
  for (std::size_t o = 0; o < ow; ++o) {
    for (std::size_t k = 0; k < kw; ++k) {
      long iw = static_cast<long>(o * spec.stride_w + k) - static_cast<long>(spec.pad_w);
      const long w = static_cast<long>(in.w);
      if (spec.periodic_w) iw = ((iw % w) + w) % w;
      else if (iw < 0 || iw >= w) iw = -1;
      col[o * kw + k] = iw;
    }
  }

  const auto& X = value(x);
  const auto& Wt = value(weight);
  const auto& B = value(bias);
  std::vector<double> y(out.size());
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        double s = B[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t a = 0; a < kh; ++a) {
            const long ih = static_cast<long>(r * spec.stride_h + a) - static_cast<long>(spec.pad_h);
            if (ih < 0 || ih >= static_cast<long>(in.h)) continue;
            const double* xrow = &X[(ci * in.h + static_cast<std::size_t>(ih)) * in.w];
            const double* wrow = &Wt[((co * cin + ci) * kh + a) * kw];
            for (std::size_t b = 0; b < kw; ++b) {
              const long iw = col[c * kw + b];
              if (iw >= 0) s += wrow[b] * xrow[iw];
            }
          }
        }
        y[(co * oh + r) * ow + c] = s;
      }
    }
  }

  const bool ng = needs_grad(x) || needs_grad(weight) || needs_grad(bias);
  return push(std::move(y), out, ng, [=, col = std::move(col)](Tape& t, std::size_t self) {
    const auto& dy = t.nodes_[self].grad;
    const auto& Xv = t.value(x);
    const auto& Wv = t.value(weight);
    std::vector<double>* dx = t.needs_grad(x) ? &t.grad_buf(x.id) : nullptr;
    std::vector<double>* dw = t.needs_grad(weight) ? &t.grad_buf(weight.id) : nullptr;
    std::vector<double>* db = t.needs_grad(bias) ? &t.grad_buf(bias.id) : nullptr;
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t c = 0; c < ow; ++c) {
          const double g = dy[(co * oh + r) * ow + c];
          if (g == 0.0) continue;
          if (db) (*db)[co] += g;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t a = 0; a < kh; ++a) {
              const long ih = static_cast<long>(r * spec.stride_h + a) - static_cast<long>(spec.pad_h);
              if (ih < 0 || ih >= static_cast<long>(in.h)) continue;
              const std::size_t xoff = (ci * in.h + static_cast<std::size_t>(ih)) * in.w;
              const std::size_t woff = ((co * cin + ci) * kh + a) * kw;
              for (std::size_t b = 0; b < kw; ++b) {
                const long iw = col[c * kw + b];
                if (iw < 0) continue;
                if (dw) (*dw)[woff + b] += g * Xv[xoff + static_cast<std::size_t>(iw)];
                if (dx) (*dx)[xoff + static_cast<std::size_t>(iw)] += g * Wv[woff + b];
              }
            }
          }
        }
      }
    }
  });
}

Var Tape::conv_transpose2d(Var x, Var weight, Var bias, std::size_t kh, std::size_t kw, std::size_t stride_h,
                           std::size_t stride_w) {
  const Shape in = shape(x);
  const std::size_t cin = in.c;
  const std::size_t cout = shape(bias).size();
  require(value(weight).size() == cin * cout * kh * kw, "conv_transpose2d weight size mismatch");
  require(stride_h >= 1 && stride_w >= 1, "conv_transpose2d stride must be positive");
  const std::size_t oh = (in.h - 1) * stride_h + kh;
  const std::size_t ow = (in.w - 1) * stride_w + kw;
  const Shape out{cout, oh, ow};

  const auto& X = value(x);
  const auto& Wt = value(weight);
  const auto& B = value(bias);
  std::vector<double> y(out.size());
  for (std::size_t co = 0; co < cout; ++co)
    std::fill(y.begin() + static_cast<long>(co * oh * ow), y.begin() + static_cast<long>((co + 1) * oh * ow), B[co]);
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t r = 0; r < in.h; ++r)
      for (std::size_t c = 0; c < in.w; ++c) {
        const double xv = X[(ci * in.h + r) * in.w + c];
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t b = 0; b < kw; ++b)
              y[(co * oh + r * stride_h + a) * ow + c * stride_w + b] += Wt[((ci * cout + co) * kh + a) * kw + b] * xv;
      }

  const bool ng = needs_grad(x) || needs_grad(weight) || needs_grad(bias);
  return push(std::move(y), out, ng, [=](Tape& t, std::size_t self) {
    const auto& dy = t.nodes_[self].grad;
    const auto& Xv = t.value(x);
    const auto& Wv = t.value(weight);
    std::vector<double>* dx = t.needs_grad(x) ? &t.grad_buf(x.id) : nullptr;
    std::vector<double>* dw = t.needs_grad(weight) ? &t.grad_buf(weight.id) : nullptr;
    if (t.needs_grad(bias)) {
      auto& db = t.grad_buf(bias.id);
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t k = 0; k < oh * ow; ++k) db[co] += dy[co * oh * ow + k];
    }
    if (!dx && !dw) return;
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t r = 0; r < in.h; ++r)
        for (std::size_t c = 0; c < in.w; ++c) {
          const std::size_t xi = (ci * in.h + r) * in.w + c;
          double gx = 0.0;
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t a = 0; a < kh; ++a)
              for (std::size_t b = 0; b < kw; ++b) {
                const double g = dy[(co * oh + r * stride_h + a) * ow + c * stride_w + b];
                const std::size_t wi = ((ci * cout + co) * kh + a) * kw + b;
                gx += g * Wv[wi];
                if (dw) (*dw)[wi] += g * Xv[xi];
              }
          if (dx) (*dx)[xi] += gx;
        }
  });
}

Var Tape::activation(Var x, Activation act) {
  if (act == Activation::Identity) return x;
  const auto& X = value(x);
  std::vector<double> y(X.size());
  for (std::size_t k = 0; k < X.size(); ++k) {
    if (act == Activation::Tanh) y[k] = std::tanh(X[k]);
    else y[k] = X[k] / (1.0 + std::exp(-X[k]));
  }
  return push(std::move(y), shape(x), needs_grad(x), [=](Tape& t, std::size_t self) {
    const auto& dy = t.nodes_[self].grad;
    const auto& Y = t.nodes_[self].value;
    const auto& Xv = t.value(x);
    auto& dx = t.grad_buf(x.id);
    for (std::size_t k = 0; k < dy.size(); ++k) {
      double d;
      if (act == Activation::Tanh) {
        d = 1.0 - Y[k] * Y[k];
      } else {
        const double s = 1.0 / (1.0 + std::exp(-Xv[k]));
        d = s * (1.0 + Xv[k] * (1.0 - s));
      }
      dx[k] += dy[k] * d;
    }
  });
}

Var Tape::add(Var a, Var b) {
  require(shape(a) == shape(b), "add: shape mismatch");
  const auto& A = value(a);
  const auto& B = value(b);
  std::vector<double> y(A.size());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = A[k] + B[k];
  return push(std::move(y), shape(a), needs_grad(a) || needs_grad(b), [=](Tape& t, std::size_t self) {
    const auto& dy = t.nodes_[self].grad;
    for (Var v : {a, b}) {
      if (!t.needs_grad(v)) continue;
      auto& d = t.grad_buf(v.id);
      for (std::size_t k = 0; k < dy.size(); ++k) d[k] += dy[k];
    }
  });
}

Var Tape::scale(Var a, double s) {
  const auto& A = value(a);
  std::vector<double> y(A.size());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = s * A[k];
  return push(std::move(y), shape(a), needs_grad(a), [=](Tape& t, std::size_t self) {
    const auto& dy = t.nodes_[self].grad;
    auto& d = t.grad_buf(a.id);
    for (std::size_t k = 0; k < dy.size(); ++k) d[k] += s * dy[k];
  });
}

Var Tape::concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat of nothing");
  const Shape first = shape(parts[0]);
  std::size_t channels = 0;
  bool ng = false;
  std::vector<double> y;
  for (Var p : parts) {
    const Shape s = shape(p);
    require(s.h == first.h && s.w == first.w, "concat: spatial shape mismatch");
    channels += s.c;
    ng = ng || needs_grad(p);
    y.insert(y.end(), value(p).begin(), value(p).end());
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(y), Shape{channels, first.h, first.w}, ng, [ps](Tape& t, std::size_t self) {
    const auto& dy = t.nodes_[self].grad;
    std::size_t off = 0;
    for (Var p : ps) {
      const std::size_t n = t.value(p).size();
      if (t.needs_grad(p)) {
        auto& d = t.grad_buf(p.id);
        for (std::size_t k = 0; k < n; ++k) d[k] += dy[off + k];
      }
      off += n;
    }
  });
}

Var Tape::slice_channels(Var x, std::size_t begin, std::size_t count) {
  const Shape s = shape(x);
  require(begin + count <= s.c && count > 0, "slice_channels out of range");
  const std::size_t plane = s.h * s.w;
  const auto& X = value(x);
  std::vector<double> y(X.begin() + static_cast<long>(begin * plane),
                        X.begin() + static_cast<long>((begin + count) * plane));
  return push(std::move(y), Shape{count, s.h, s.w}, needs_grad(x), [=](Tape& t, std::size_t self) {
    const auto& dy = t.nodes_[self].grad;
    auto& d = t.grad_buf(x.id);
    for (std::size_t k = 0; k < dy.size(); ++k) d[begin * plane + k] += dy[k];
  });
}

Var Tape::clamp(Var x, double lo, double hi) {
  const auto& X = value(x);
  std::vector<double> y(X.size());
  std::uint64_t bits = 0;
  for (std::size_t k = 0; k < X.size(); ++k) {
    y[k] = std::clamp(X[k], lo, hi);
    const std::uint64_t region = X[k] < lo ? 1 : (X[k] > hi ? 2 : 0);
    bits = bits * 3 + region;
    if ((k & 31) == 31) {
      mix_kink(bits);
      bits = 0;
    }
  }
  mix_kink(bits);
  return push(std::move(y), shape(x), needs_grad(x), [=](Tape& t, std::size_t self) {
    const auto& dy = t.nodes_[self].grad;
    const auto& Xv = t.value(x);
    auto& d = t.grad_buf(x.id);
    for (std::size_t k = 0; k < dy.size(); ++k)
      if (Xv[k] >= lo && Xv[k] <= hi) d[k] += dy[k];
  });
}

Var Tape::reparam_sample(Var mu, Var log_var, std::span<const double> eps, double sigma_scale) {
  require(shape(mu) == shape(log_var), "reparam_sample: mu/log_var shape mismatch");
  const auto& M = value(mu);
  const auto& L = value(log_var);
  require(eps.size() == M.size(), "reparam_sample: noise size mismatch");
  std::vector<double> y(M.size());
  std::vector<double> noise(eps.begin(), eps.end());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = M[k] + sigma_scale * std::exp(0.5 * L[k]) * noise[k];
  return push(std::move(y), shape(mu), needs_grad(mu) || needs_grad(log_var),
              [=, noise = std::move(noise)](Tape& t, std::size_t self) {
                const auto& dy = t.nodes_[self].grad;
                if (t.needs_grad(mu)) {
                  auto& d = t.grad_buf(mu.id);
                  for (std::size_t k = 0; k < dy.size(); ++k) d[k] += dy[k];
                }
                if (t.needs_grad(log_var)) {
                  const auto& Lv = t.value(log_var);
                  auto& d = t.grad_buf(log_var.id);
                  for (std::size_t k = 0; k < dy.size(); ++k)
                    d[k] += dy[k] * 0.5 * sigma_scale * std::exp(0.5 * Lv[k]) * noise[k];
                }
              });
}

namespace {

std::vector<double> stack_members(const Tape& t, std::span<const Var> members, std::size_t& m_size) {
  require(!members.empty(), "loss needs at least one member");
  m_size = t.value(members[0]).size();
  std::vector<double> flat;
  flat.reserve(members.size() * m_size);
  for (Var m : members) {
    require(t.value(m).size() == m_size, "members have different sizes");
    flat.insert(flat.end(), t.value(m).begin(), t.value(m).end());
  }
  return flat;
}

inline std::uint64_t sign3(double d) { return d > 0.0 ? 2u : (d < 0.0 ? 1u : 0u); }

}  // namespace

Var Tape::crps(std::span<const Var> members, Var target, CrpsEstimator estimator) {
  std::size_t m_size = 0;
  const auto flat = stack_members(*this, members, m_size);
  const auto& y = value(target);
  require(y.size() == m_size, "crps: target size mismatch");
  auto res = crps_loss_grad(flat, members.size(), y, estimator);

  const std::size_t n = members.size();
  for (std::size_t m = 0; m < m_size; ++m) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bits = bits * 3 + sign3(flat[i * m_size + m] - y[m]);
      for (std::size_t j = i + 1; j < n; ++j) bits = bits * 3 + sign3(flat[i * m_size + m] - flat[j * m_size + m]);
    }
    mix_kink(bits);
  }

  std::vector<Var> ms(members.begin(), members.end());
  bool ng = false;
  for (Var v : ms) ng = ng || needs_grad(v);
  return push({res.loss}, Shape{}, ng, [ms, m_size, grad = std::move(res.grad)](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    for (std::size_t i = 0; i < ms.size(); ++i) {
      if (!t.needs_grad(ms[i])) continue;
      auto& d = t.grad_buf(ms[i].id);
      for (std::size_t k = 0; k < m_size; ++k) d[k] += g * grad[i * m_size + k];
    }
  });
}

Var Tape::l1(std::span<const Var> members, Var target) {
  std::size_t m_size = 0;
  const auto flat = stack_members(*this, members, m_size);
  const auto& y = value(target);
  require(y.size() == m_size, "l1: target size mismatch");
  auto res = l1_loss_grad(flat, members.size(), y);
  for (std::size_t i = 0; i < members.size(); ++i) {
    std::uint64_t bits = 0;
    for (std::size_t m = 0; m < m_size; ++m) {
      bits = bits * 3 + sign3(flat[i * m_size + m] - y[m]);
      if ((m & 31) == 31) {
        mix_kink(bits);
        bits = 0;
      }
    }
    mix_kink(bits);
  }
  std::vector<Var> ms(members.begin(), members.end());
  bool ng = false;
  for (Var v : ms) ng = ng || needs_grad(v);
  return push({res.loss}, Shape{}, ng, [ms, m_size, grad = std::move(res.grad)](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    for (std::size_t i = 0; i < ms.size(); ++i) {
      if (!t.needs_grad(ms[i])) continue;
      auto& d = t.grad_buf(ms[i].id);
      for (std::size_t k = 0; k < m_size; ++k) d[k] += g * grad[i * m_size + k];
    }
  });
}

Var Tape::kl(Var mu_q, Var log_var_q, Var mu_p, Var log_var_p, KlDirection direction) {
  GaussianLatent q{value(mu_q), value(log_var_q)};
  GaussianLatent p{value(mu_p), value(log_var_p)};
  auto res = gaussian_kl_grad(q, p, direction);
  const bool ng = needs_grad(mu_q) || needs_grad(log_var_q) || needs_grad(mu_p) || needs_grad(log_var_p);
  return push({res.loss}, Shape{}, ng, [=, res = std::move(res)](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    const std::pair<Var, const std::vector<double>*> parts[] = {
        {mu_q, &res.d_mu_q}, {log_var_q, &res.d_log_var_q}, {mu_p, &res.d_mu_p}, {log_var_p, &res.d_log_var_p}};
    for (const auto& [v, gv] : parts) {
      if (!t.needs_grad(v)) continue;
      auto& d = t.grad_buf(v.id);
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += g * (*gv)[k];
    }
  });
}

Var Tape::linear_combination(std::span<const Var> scalars, std::span<const double> coeffs) {
  require(scalars.size() == coeffs.size() && !scalars.empty(), "linear_combination: size mismatch");
  double s = 0.0;
  bool ng = false;
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    require(value(scalars[k]).size() == 1, "linear_combination expects scalars");
    s += coeffs[k] * scalar(scalars[k]);
    ng = ng || needs_grad(scalars[k]);
  }
  std::vector<Var> vs(scalars.begin(), scalars.end());
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  return push({s}, Shape{}, ng, [vs, cs](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    for (std::size_t k = 0; k < vs.size(); ++k)
      if (t.needs_grad(vs[k])) t.grad_buf(vs[k].id)[0] += g * cs[k];
  });
}

}  // namespace ensbench::ad
