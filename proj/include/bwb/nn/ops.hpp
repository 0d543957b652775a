#pragma once

// Differentiable ops recorded on a Tape.

#include <numbers>
#include <span>
#include <vector>

#include "bwb/nn/tape.hpp"

namespace bwb::nn {

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ArgumentError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

inline void require_row_broadcast(const Matrix& a, const Matrix& r, const char* op) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw ArgumentError(std::string(op) + ": expected (1x" + std::to_string(a.cols()) +
                        ") row, got " + shape_str(r) + " against " + shape_str(a));
  }
}

}  // namespace detail

inline Var matmul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a);
  const Matrix& B = t.value(b);
  if (A.cols() != B.rows()) {
    throw ArgumentError("matmul: shape mismatch " + shape_str(A) + " vs " + shape_str(B));
  }
  Matrix out = A * B;
  return t.record("matmul", std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.upstream(self);
    if (tp.needs_grad(a)) tp.accumulate(a.id, g * tp.value(b).transpose());
    if (tp.needs_grad(b)) tp.accumulate(b.id, tp.value(a).transpose() * g);
  });
}

/// x W + b with W stored (in x out) and b a (1 x out) row.
inline Var linear(Tape& t, Var x, Var w, Var b) {
  const Matrix& X = t.value(x);
  const Matrix& W = t.value(w);
  const Matrix& B = t.value(b);
  if (X.cols() != W.rows()) {
    throw ArgumentError("linear: shape mismatch " + shape_str(X) + " vs " + shape_str(W));
  }
  if (B.rows() != 1 || B.cols() != W.cols()) {
    throw ArgumentError("linear: bias " + shape_str(B) + " does not match weight " + shape_str(W));
  }
  Matrix out = X * W;
  out.rowwise() += B.row(0);
  return t.record("linear", std::move(out), {x, w, b}, [x, w, b](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.upstream(self);
    if (tp.needs_grad(x)) tp.accumulate(x.id, g * tp.value(w).transpose());
    if (tp.needs_grad(w)) tp.accumulate(w.id, tp.value(x).transpose() * g);
    if (tp.needs_grad(b)) tp.accumulate(b.id, g.colwise().sum());
  });
}

inline Var add(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "add");
  Matrix out = t.value(a) + t.value(b);
  return t.record("add", std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    tp.accumulate(a.id, tp.upstream(self));
    tp.accumulate(b.id, tp.upstream(self));
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "sub");
  Matrix out = t.value(a) - t.value(b);
  return t.record("sub", std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    tp.accumulate(a.id, tp.upstream(self));
    tp.accumulate(b.id, -tp.upstream(self));
  });
}

/// Elementwise product.
inline Var mul(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "mul");
  Matrix out = t.value(a).cwiseProduct(t.value(b));
  return t.record("mul", std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.upstream(self);
    if (tp.needs_grad(a)) tp.accumulate(a.id, g.cwiseProduct(tp.value(b)));
    if (tp.needs_grad(b)) tp.accumulate(b.id, g.cwiseProduct(tp.value(a)));
  });
}

/// a + r with r a (1 x cols) row broadcast over rows.
inline Var add_row(Tape& t, Var a, Var r) {
  detail::require_row_broadcast(t.value(a), t.value(r), "add_row");
  Matrix out = t.value(a);
  out.rowwise() += t.value(r).row(0);
  return t.record("add_row", std::move(out), {a, r}, [a, r](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.upstream(self);
    tp.accumulate(a.id, g);
    if (tp.needs_grad(r)) tp.accumulate(r.id, g.colwise().sum());
  });
}

/// a * r (elementwise) with r a (1 x cols) row broadcast over rows.
inline Var mul_row(Tape& t, Var a, Var r) {
  detail::require_row_broadcast(t.value(a), t.value(r), "mul_row");
  Matrix out = t.value(a).array().rowwise() * t.value(r).row(0).array();
  return t.record("mul_row", std::move(out), {a, r}, [a, r](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.upstream(self);
    if (tp.needs_grad(a)) {
      Matrix ga = g.array().rowwise() * tp.value(r).row(0).array();
      tp.accumulate(a.id, ga);
    }
    if (tp.needs_grad(r)) tp.accumulate(r.id, g.cwiseProduct(tp.value(a)).colwise().sum());
  });
}

inline Var scale(Tape& t, Var a, double s) {
  Matrix out = s * t.value(a);
  return t.record("scale", std::move(out), {a}, [a, s](Tape& tp, std::uint32_t self) {
    tp.accumulate(a.id, s * tp.upstream(self));
  });
}

// -- pointwise nonlinearities ------------------------------------------------

inline Var silu(Tape& t, Var a) {
  const Matrix& A = t.value(a);
  Matrix out = A.unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
  return t.record("silu", std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    Matrix d = tp.value(a).unaryExpr([](double x) {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 + x * (1.0 - s));
    });
    tp.accumulate(a.id, tp.upstream(self).cwiseProduct(d));
  });
}

/// GELU, tanh approximation.
inline Var gelu(Tape& t, Var a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  Matrix out = t.value(a).unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x)));
  });
  return t.record("gelu", std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    Matrix d = tp.value(a).unaryExpr([](double x) {
      const double u = k * (x + c * x * x * x);
      const double th = std::tanh(u);
      const double du = k * (1.0 + 3.0 * c * x * x);
      return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
    });
    tp.accumulate(a.id, tp.upstream(self).cwiseProduct(d));
  });
}

inline Var relu(Tape& t, Var a) {
  Matrix out = t.value(a).cwiseMax(0.0);
  return t.record("relu", std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    Matrix d = (tp.value(a).array() > 0.0).cast<double>();
    tp.accumulate(a.id, tp.upstream(self).cwiseProduct(d));
  });
}

inline Var tanh(Tape& t, Var a) {
  Matrix out = t.value(a).array().tanh().matrix();
  return t.record("tanh", std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Matrix& y = tp.value(self);
    Matrix d = (1.0 - y.array().square()).matrix();
    tp.accumulate(a.id, tp.upstream(self).cwiseProduct(d));
  });
}

enum class Activation { SiLU, GELU, ReLU, Tanh };

inline Var activate(Tape& t, Var a, Activation act) {
  switch (act) {
    case Activation::SiLU: return silu(t, a);
    case Activation::GELU: return gelu(t, a);
    case Activation::ReLU: return relu(t, a);
    case Activation::Tanh: return tanh(t, a);
  }
  return a;
}

// -- normalization and structure ---------------------------------------------

/// Per-row normalization (x - mean) / sqrt(var + eps), no affine. A constant
/// row normalizes to 0 (also when eps = 0, where the gradient is taken as 0).
inline Var layer_norm(Tape& t, Var a, double eps = 1e-5) {
  const Matrix& A = t.value(a);
  const auto n = static_cast<double>(A.cols());
  Matrix out(A.rows(), A.cols());
  RowVector inv_std_store(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double mean = A.row(i).mean();
    const double var = (A.row(i).array() - mean).square().sum() / n;
    const bool constant = A.row(i).maxCoeff() == A.row(i).minCoeff();
    const double inv = var + eps > 0.0 ? 1.0 / std::sqrt(var + eps) : 0.0;
    inv_std_store(i) = inv;
    if (constant) {
      out.row(i).setZero();
    } else {
      out.row(i) = (A.row(i).array() - mean) * inv;
    }
  }
  return t.record("layer_norm", std::move(out), {a},
                  [a, inv_std_store](Tape& tp, std::uint32_t self) {
                    const Matrix& g = tp.upstream(self);
                    const Matrix& y = tp.value(self);
                    Matrix dx(g.rows(), g.cols());
                    for (Eigen::Index i = 0; i < g.rows(); ++i) {
                      const double gm = g.row(i).mean();
                      const double gy = g.row(i).cwiseProduct(y.row(i)).mean();
                      dx.row(i) = inv_std_store(i) *
                                  (g.row(i).array() - gm - y.row(i).array() * gy);
                    }
                    tp.accumulate(a.id, dx);
                  });
}

/// Column-wise concatenation of same-height blocks.
inline Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) {
      throw ArgumentError("concat_cols: shape mismatch " + shape_str(t.value(parts[0])) + " vs " +
                          shape_str(t.value(p)));
    }
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, t.value(p).cols()) = t.value(p);
    c += t.value(p).cols();
  }
  return t.record("concat", std::move(out), parts, [parts](Tape& tp, std::uint32_t self) {
    const Matrix& g = tp.upstream(self);
    Eigen::Index col = 0;
    for (Var p : parts) {
      const Eigen::Index w = tp.value(p).cols();
      if (tp.needs_grad(p)) tp.accumulate(p.id, g.middleCols(col, w));
      col += w;
    }
  });
}

/// out.row(i) = a.row(index[i]).
inline Var gather_rows(Tape& t, Var a, std::vector<Eigen::Index> index) {
  const Matrix& A = t.value(a);
  Matrix out(static_cast<Eigen::Index>(index.size()), A.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= A.rows()) {
      throw ArgumentError("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                          shape_str(A));
    }
    out.row(static_cast<Eigen::Index>(i)) = A.row(index[i]);
  }
  return t.record("gather_rows", std::move(out), {a},
                  [a, index = std::move(index)](Tape& tp, std::uint32_t self) {
                    const Matrix& g = tp.upstream(self);
                    const Matrix& A = tp.value(a);
                    Matrix ga = Matrix::Zero(A.rows(), A.cols());
                    for (std::size_t i = 0; i < index.size(); ++i) {
                      ga.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
                    }
                    tp.accumulate(a.id, ga);
                  });
}

// -- reductions ----------------------------------------------------------------

inline Var sum(Tape& t, Var a) {
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  return t.record("sum", std::move(out), {a}, [a](Tape& tp, std::uint32_t self) {
    const Matrix& A = tp.value(a);
    tp.accumulate(a.id, Matrix::Constant(A.rows(), A.cols(), tp.upstream(self)(0, 0)));
  });
}

/// Mean of squared differences over all entries.
inline Var mse(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "mse");
  const auto n = static_cast<double>(t.value(a).size());
  Matrix out(1, 1);
  out(0, 0) = (t.value(a) - t.value(b)).squaredNorm() / n;
  return t.record("mse", std::move(out), {a, b}, [a, b, n](Tape& tp, std::uint32_t self) {
    const double g = tp.upstream(self)(0, 0);
    Matrix d = (2.0 * g / n) * (tp.value(a) - tp.value(b));
    if (tp.needs_grad(a)) tp.accumulate(a.id, d);
    if (tp.needs_grad(b)) tp.accumulate(b.id, -d);
  });
}

/// Sum of squared differences over all entries.
inline Var sum_squared_error(Tape& t, Var a, Var b) {
  detail::require_same_shape(t.value(a), t.value(b), "sum_squared_error");
  Matrix out(1, 1);
  out(0, 0) = (t.value(a) - t.value(b)).squaredNorm();
  return t.record("sse", std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const double g = tp.upstream(self)(0, 0);
    Matrix d = (2.0 * g) * (tp.value(a) - tp.value(b));
    if (tp.needs_grad(a)) tp.accumulate(a.id, d);
    if (tp.needs_grad(b)) tp.accumulate(b.id, -d);
  });
}

}  // namespace bwb::nn
