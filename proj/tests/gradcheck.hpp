#pragma once

// Central finite-difference oracle for tape gradients (test-only).

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "bwb/nn.hpp"

namespace bwb::testing {

using nn::Matrix;
using nn::Tape;
using nn::Var;

/// Builds a scalar loss from leaf vars.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_loss(const LossBuilder& f, const std::vector<Matrix>& inputs) {
  Tape t;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(t.leaf(m, false));
  return t.value(f(t, leaves))(0, 0);
}

/// Max relative error |analytic - fd| / max(|analytic|, |fd|, floor) over all entries.
inline double max_gradient_error(const LossBuilder& f, std::vector<Matrix> inputs,
                                 double h = 1e-6, double floor = 1e-3) {
  Tape t;
  std::vector<Var> leaves;
  for (const auto& m : inputs) leaves.push_back(t.leaf(m, true));
  t.backward(f(t, leaves));
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = t.grad(leaves[k]);
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k].data()[i];
      inputs[k].data()[i] = x0 + h;
      const double fp = eval_loss(f, inputs);
      inputs[k].data()[i] = x0 - h;
      const double fm = eval_loss(f, inputs);
      inputs[k].data()[i] = x0;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic.data()[i];
      const double denom = std::max({std::abs(a), std::abs(fd), floor});
      worst = std::max(worst, std::abs(a - fd) / denom);
    }
  }
  return worst;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Projects an arbitrary output onto a scalar through fixed random weights.
inline Var project(Tape& t, Var out, const Matrix& weights) {
  return nn::sum(t, nn::mul(t, out, t.leaf(weights)));
}

}  // namespace bwb::testing
