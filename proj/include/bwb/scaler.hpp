#pragma once

// Per-column z-score and symmetric min-max scalers.

#include <cmath>
#include <string>
#include <vector>

#include "bwb/error.hpp"
#include "bwb/nn/tape.hpp"

namespace bwb {

using nn::Matrix;
using nn::RowVector;

/// Column-wise z-score. Zero-variance columns keep std = 1 and are flagged, so
/// their normalized error equals the raw error.
struct Standardizer {
  RowVector mean;
  RowVector std;
  std::vector<bool> flagged;

  bool fitted() const { return mean.size() > 0; }
  Eigen::Index width() const { return mean.size(); }

  static Standardizer fit(const Matrix& rows) {
    if (rows.rows() == 0) throw ArgumentError("Standardizer::fit: no rows");
    Standardizer s;
    const auto n = static_cast<double>(rows.rows());
    s.mean = rows.colwise().mean();
    s.std.resize(rows.cols());
    s.flagged.assign(static_cast<std::size_t>(rows.cols()), false);
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const double var = (rows.col(j).array() - s.mean(j)).square().sum() / n;
      const double sd = std::sqrt(var);
      if (!(sd > 0.0) || sd < 1e-12 * std::max(1.0, std::abs(s.mean(j)))) {
        s.std(j) = 1.0;
        s.flagged[static_cast<std::size_t>(j)] = true;
      } else {
        s.std(j) = sd;
      }
    }
    return s;
  }

  void require(Eigen::Index cols, const char* who) const {
    if (!fitted()) throw StateError(std::string(who) + ": scaler not fitted");
    if (cols != width()) {
      throw ArgumentError(std::string(who) + ": expected width " + std::to_string(width()) +
                          ", got " + std::to_string(cols));
    }
  }

  Matrix normalize(const Matrix& x) const {
    require(x.cols(), "Standardizer::normalize");
    return ((x.rowwise() - mean).array().rowwise() / std.array()).matrix();
  }

  Matrix denormalize(const Matrix& z) const {
    require(z.cols(), "Standardizer::denormalize");
    return ((z.array().rowwise() * std.array()).rowwise() + mean.array()).matrix();
  }
};

/// Affine map of [lo, hi] per column onto [-1, 1].
struct MinMaxScaler {
  RowVector lo;
  RowVector hi;

  bool fitted() const { return lo.size() > 0; }

  static MinMaxScaler from_bounds(const RowVector& lo, const RowVector& hi) {
    for (Eigen::Index j = 0; j < lo.size(); ++j) {
      if (!(hi(j) > lo(j))) {
        throw ArgumentError("MinMaxScaler: empty range in column " + std::to_string(j));
      }
    }
    return {lo, hi};
  }

  static MinMaxScaler fit(const Matrix& rows) {
    if (rows.rows() == 0) throw ArgumentError("MinMaxScaler::fit: no rows");
    return from_bounds(rows.colwise().minCoeff(), rows.colwise().maxCoeff());
  }

  /// Per-column factor a and offset b with raw = a * x + b.
  RowVector raw_scale() const { return 0.5 * (hi - lo); }
  RowVector raw_offset() const { return 0.5 * (hi + lo); }

  Matrix to_unit(const Matrix& raw) const {
    if (!fitted()) throw StateError("MinMaxScaler: not fitted");
    return ((raw.rowwise() - raw_offset()).array().rowwise() / raw_scale().array()).matrix();
  }

  Matrix from_unit(const Matrix& x) const {
    if (!fitted()) throw StateError("MinMaxScaler: not fitted");
    return ((x.array().rowwise() * raw_scale().array()).rowwise() + raw_offset().array()).matrix();
  }
};

}  // namespace bwb
