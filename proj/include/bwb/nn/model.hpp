#pragma once

// Parameter containers, dense layers, Adam/AdamW and timestep embeddings.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bwb/nn/ops.hpp"

namespace bwb::nn {

/// Ordered, named parameter buffers. Order is the serialization order.
class ParamSet {
 public:
  std::size_t add(std::string name, Matrix value) {
    if (find(name) != npos) throw ArgumentError("ParamSet: duplicate parameter '" + name + "'");
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return i;
    }
    return npos;
  }

  Matrix& at(std::string_view name) {
    const auto i = find(name);
    if (i == npos) throw ArgumentError("ParamSet: no parameter '" + std::string(name) + "'");
    return values_[i];
  }
  const Matrix& at(std::string_view name) const { return const_cast<ParamSet*>(this)->at(name); }

  Matrix& operator[](std::size_t i) { return values_[i]; }
  const Matrix& operator[](std::size_t i) const { return values_[i]; }

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Matrix>& values() { return values_; }
  const std::vector<Matrix>& values() const { return values_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  bool operator==(const ParamSet& o) const {
    if (names_ != o.names_) return false;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (values_[i].rows() != o.values_[i].rows() || values_[i].cols() != o.values_[i].cols() ||
          values_[i] != o.values_[i]) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

/// Registers every parameter as an external leaf on the tape.
inline std::vector<Var> bind(Tape& t, const ParamSet& ps, bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) vars.push_back(t.external(ps[i], requires_grad));
  return vars;
}

inline std::vector<Matrix> collect_grads(const Tape& t, const std::vector<Var>& vars) {
  std::vector<Matrix> g;
  g.reserve(vars.size());
  for (Var v : vars) g.push_back(t.grad(v));
  return g;
}

/// Indices of a dense layer's weight and bias inside a ParamSet.
struct Dense {
  std::size_t w = 0;
  std::size_t b = 0;
};

/// Weights ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)), biases zero.
inline Dense add_dense(ParamSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out,
                       std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  Dense d;
  d.w = ps.add(name + ".w", std::move(w));
  d.b = ps.add(name + ".b", Matrix::Zero(1, out));
  return d;
}

inline Var apply(Tape& t, const std::vector<Var>& bound, const Dense& d, Var x) {
  return linear(t, x, bound[d.w], bound[d.b]);
}

/// Plain fully connected network: Dense -> act ... -> Dense (no output act).
struct Mlp {
  std::vector<Eigen::Index> widths;  // input, hidden..., output
  Activation activation = Activation::SiLU;
  std::vector<Dense> layers;

  static Mlp create(ParamSet& ps, const std::string& prefix, std::vector<Eigen::Index> widths,
                    Activation act, std::mt19937_64& rng) {
    if (widths.size() < 2) throw ArgumentError("Mlp: need at least input and output widths");
    Mlp m;
    m.widths = std::move(widths);
    m.activation = act;
    for (std::size_t i = 0; i + 1 < m.widths.size(); ++i) {
      m.layers.push_back(
          add_dense(ps, prefix + "." + std::to_string(i), m.widths[i], m.widths[i + 1], rng));
    }
    return m;
  }

  Var forward(Tape& t, const std::vector<Var>& bound, Var x) const {
    Var h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = apply(t, bound, layers[i], h);
      if (i + 1 < layers.size()) h = activate(t, h, activation);
    }
    return h;
  }
};

// -- optimizer -------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW) when > 0
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
};

inline AdamState adam_init(const ParamSet& ps, AdamConfig cfg) {
  AdamState st;
  st.config = cfg;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    st.m.push_back(Matrix::Zero(ps[i].rows(), ps[i].cols()));
    st.v.push_back(Matrix::Zero(ps[i].rows(), ps[i].cols()));
  }
  return st;
}

inline void adam_step(ParamSet& ps, std::span<const Matrix> grads, AdamState& st) {
  if (grads.size() != ps.size() || st.m.size() != ps.size()) {
    throw ArgumentError("adam_step: parameter/gradient/state count mismatch");
  }
  const AdamConfig& c = st.config;
  ++st.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Matrix& p = ps[i];
    const Matrix& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw ArgumentError("adam_step: gradient " + shape_str(g) + " does not match parameter '" +
                          ps.name(i) + "' " + shape_str(p));
    }
    st.m[i] = c.beta1 * st.m[i] + (1.0 - c.beta1) * g;
    st.v[i] = c.beta2 * st.v[i] + (1.0 - c.beta2) * g.cwiseProduct(g);
    if (c.weight_decay > 0.0) p *= (1.0 - c.lr * c.weight_decay);
    p.array() -= c.lr * (st.m[i].array() / bc1) / ((st.v[i].array() / bc2).sqrt() + c.eps);
  }
}

// -- embeddings ------------------------------------------------------------------

/// Interleaved [sin(t w_0), cos(t w_0), sin(t w_1), ...] with w_i geometric
/// from 1 down to 1e-4.
inline RowVector sinusoidal_embed(double t, Eigen::Index dim) {
  if (dim <= 0 || dim % 2 != 0) {
    throw ArgumentError("sinusoidal_embed: dim must be positive and even, got " +
                        std::to_string(dim));
  }
  const Eigen::Index half = dim / 2;
  RowVector e(dim);
  for (Eigen::Index i = 0; i < half; ++i) {
    const double frac = half > 1 ? static_cast<double>(i) / static_cast<double>(half - 1) : 0.0;
    const double w = std::pow(1e-4, frac);
    e(2 * i) = std::sin(t * w);
    e(2 * i + 1) = std::cos(t * w);
  }
  return e;
}

inline Matrix sinusoidal_embed(std::span<const int> steps, Eigen::Index dim) {
  Matrix out(static_cast<Eigen::Index>(steps.size()), dim);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = sinusoidal_embed(static_cast<double>(steps[i]), dim);
  }
  return out;
}

}  // namespace bwb::nn
