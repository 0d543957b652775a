#pragma once

// Scalar L/D surrogate on (planform, flight condition), differentiable in the
// planform through the tape. This is the objective used by inverse design.

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "bwb/geom.hpp"
#include "bwb/nn.hpp"
#include "bwb/scaler.hpp"

namespace bwb::surrogate {

using nn::Matrix;
using nn::RowVector;
using nn::Tape;
using nn::Var;

inline constexpr Eigen::Index kFlightFeatures = 4;  // altitude_kft, log10Re, mach, alpha
inline constexpr Eigen::Index kLdFeatures = 13;
inline constexpr Eigen::Index kLdInputWidth = 14;   // + constant bias slot

inline RowVector flight_features(const geom::FlightCondition& fc) {
  RowVector f(kFlightFeatures);
  f << fc.altitude_kft, fc.log10_reynolds, fc.mach, fc.alpha_deg;
  return f;
}

inline RowVector planform_row(const geom::PlanformParams& p) {
  const auto v = p.to_array();
  return Eigen::Map<const RowVector>(v.data(), geom::kNumParams);
}

inline RowVector ld_features(const geom::PlanformParams& p, const geom::FlightCondition& fc) {
  RowVector r(kLdFeatures);
  r << planform_row(p), flight_features(fc);
  return r;
}

struct LdConfig {
  std::vector<Eigen::Index> hidden = {128, 128, 128};
};

struct LdSurrogate {
  LdConfig config;
  nn::ParamSet params;
  nn::Mlp mlp;
  Standardizer inputs;  // over the 13 raw features
  double out_mean = 0.0;
  double out_std = 1.0;
  std::uint64_t seed = 0;

  static LdSurrogate create(const LdConfig& cfg, std::uint64_t seed) {
    LdSurrogate m;
    m.config = cfg;
    m.seed = seed;
    std::mt19937_64 rng(seed);
    m.mlp = nn::Mlp::create(m.params, "ld", widths(cfg), nn::Activation::SiLU, rng);
    return m;
  }

  /// Re-derives layer bookkeeping for parameters restored from disk.
  void relink() {
    mlp.widths = widths(config);
    mlp.activation = nn::Activation::SiLU;
    mlp.layers.clear();
    for (std::size_t i = 0; i + 1 < mlp.widths.size(); ++i) {
      const std::string pre = "ld." + std::to_string(i);
      const auto w = params.find(pre + ".w");
      const auto b = params.find(pre + ".b");
      if (w == nn::ParamSet::npos || b == nn::ParamSet::npos) {
        throw SchemaError("LdSurrogate: missing parameter " + pre);
      }
      if (params[w].rows() != mlp.widths[i] || params[w].cols() != mlp.widths[i + 1]) {
        throw SchemaError("LdSurrogate: parameter " + pre + ".w expected (" +
                          std::to_string(mlp.widths[i]) + "x" + std::to_string(mlp.widths[i + 1]) +
                          ") found " + nn::shape_str(params[w]));
      }
      mlp.layers.push_back({w, b});
    }
  }

  static std::vector<Eigen::Index> widths(const LdConfig& cfg) {
    std::vector<Eigen::Index> w{kLdInputWidth};
    w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
    w.push_back(1);
    return w;
  }
};

/// Network on already standardized (B x 14) inputs, returning raw L/D (B x 1).
inline Var ld_forward_standardized(Tape& t, const std::vector<Var>& bound, const LdSurrogate& m,
                                   Var z) {
  const Var y = m.mlp.forward(t, bound, z);
  return nn::add_row(t, nn::scale(t, y, m.out_std), t.leaf(Matrix::Constant(1, 1, m.out_mean)));
}

/// L/D for rows of x (K x 9) where the raw planform is x * a + b columnwise,
/// all rows sharing one flight condition.
inline Var ld_forward(Tape& t, const std::vector<Var>& bound, const LdSurrogate& m, Var x,
                      const RowVector& a, const RowVector& b, const geom::FlightCondition& fc) {
  m.inputs.require(kLdFeatures, "predict_ld");
  const auto np = static_cast<Eigen::Index>(geom::kNumParams);
  const RowVector mean_p = m.inputs.mean.head(np);
  const RowVector std_p = m.inputs.std.head(np);
  const RowVector sa = a.array() / std_p.array();
  const RowVector sb = (b - mean_p).array() / std_p.array();
  const Var zp = nn::add_row(t, nn::mul_row(t, x, t.leaf(sa)), t.leaf(sb));

  const Eigen::Index k = t.value(x).rows();
  RowVector flight(kFlightFeatures + 1);
  flight.head(kFlightFeatures) =
      (flight_features(fc) - m.inputs.mean.tail(kFlightFeatures)).array() /
      m.inputs.std.tail(kFlightFeatures).array();
  flight(kFlightFeatures) = 1.0;
  Matrix fixed = flight.replicate(k, 1);
  const Var z = nn::concat_cols(t, {zp, t.leaf(std::move(fixed))});
  return ld_forward_standardized(t, bound, m, z);
}

struct LdPrediction {
  double value = 0.0;
  std::array<double, geom::kNumParams> gradient{};  // d(L/D)/dp in raw units
};

inline LdPrediction predict_ld(const LdSurrogate& m, const geom::PlanformParams& p,
                               const geom::FlightCondition& fc) {
  Tape t;
  const auto bound = nn::bind(t, m.params, false);
  const Var x = t.leaf(planform_row(p), true);
  const auto np = static_cast<Eigen::Index>(geom::kNumParams);
  const Var y = ld_forward(t, bound, m, x, RowVector::Ones(np), RowVector::Zero(np), fc);
  t.backward(y);
  LdPrediction out;
  out.value = t.value(y)(0, 0);
  const Matrix g = t.grad(x);
  for (std::size_t j = 0; j < geom::kNumParams; ++j) out.gradient[j] = g(0, static_cast<Eigen::Index>(j));
  return out;
}

/// L/D for each raw planform row (K x 9) under one flight condition.
inline std::vector<double> predict_ld_batch(const LdSurrogate& m, const Matrix& planforms,
                                            const geom::FlightCondition& fc) {
  if (planforms.cols() != static_cast<Eigen::Index>(geom::kNumParams)) {
    throw ArgumentError("predict_ld_batch: expected 9 columns, got " +
                        std::to_string(planforms.cols()));
  }
  Tape t;
  const auto bound = nn::bind(t, m.params, false);
  const auto np = static_cast<Eigen::Index>(geom::kNumParams);
  const Var y = ld_forward(t, bound, m, t.leaf(planforms), RowVector::Ones(np), RowVector::Zero(np), fc);
  const Matrix& v = t.value(y);
  return {v.data(), v.data() + v.size()};
}

// -- training ----------------------------------------------------------------------

struct LdSample {
  geom::PlanformParams planform;
  geom::FlightCondition condition;
  double ld = 0.0;
};

struct LdTrainConfig {
  std::size_t max_epochs = 300;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::size_t patience = 30;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
};

struct LdTrainResult {
  LdSurrogate model;
  TrainHistory history;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace detail

inline LdTrainResult train_ld_surrogate(const std::vector<LdSample>& data, const LdConfig& cfg,
                                        const LdTrainConfig& tc) {
  if (data.size() < 2) throw ArgumentError("train_ld_surrogate: need at least 2 samples");
  std::mt19937_64 rng(tc.seed);
  auto order = detail::shuffled_indices(data.size(), rng);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(tc.val_fraction * static_cast<double>(data.size())), 1, data.size() - 1);
  const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  auto features = [&](const std::vector<std::size_t>& ids) {
    Matrix f(static_cast<Eigen::Index>(ids.size()), kLdFeatures);
    Matrix y(static_cast<Eigen::Index>(ids.size()), 1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      f.row(static_cast<Eigen::Index>(i)) = ld_features(data[ids[i]].planform, data[ids[i]].condition);
      y(static_cast<Eigen::Index>(i), 0) = data[ids[i]].ld;
    }
    return std::pair{f, y};
  };
  auto [train_x, train_y] = features(train);
  auto [val_x, val_y] = features(val);

  LdSurrogate model = LdSurrogate::create(cfg, tc.seed);
  model.inputs = Standardizer::fit(train_x);
  model.out_mean = train_y.mean();
  const double var = (train_y.array() - model.out_mean).square().mean();
  model.out_std = var > 0.0 ? std::sqrt(var) : 1.0;

  auto standardized = [&](const Matrix& raw) {
    Matrix z(raw.rows(), kLdInputWidth);
    z.leftCols(kLdFeatures) = model.inputs.normalize(raw);
    z.col(kLdFeatures).setOnes();
    return z;
  };
  const Matrix train_z = standardized(train_x);
  const Matrix val_z = standardized(val_x);
  const Matrix train_t = (train_y.array() - model.out_mean) / model.out_std;
  const Matrix val_t = (val_y.array() - model.out_mean) / model.out_std;

  auto val_loss = [&](const nn::ParamSet& ps) {
    Tape t;
    const auto bound = nn::bind(t, ps, false);
    const Var y = model.mlp.forward(t, bound, t.leaf(val_z));
    return (t.value(y) - val_t).squaredNorm() / static_cast<double>(val_t.rows());
  };

  nn::AdamConfig ac;
  ac.lr = tc.lr;
  auto adam = nn::adam_init(model.params, ac);
  LdTrainResult result;
  nn::ParamSet best = model.params;
  double best_val = val_loss(model.params);
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    std::vector<std::size_t> perm(train.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += tc.batch) {
      const std::size_t end = std::min(perm.size(), start + tc.batch);
      const auto bs = static_cast<Eigen::Index>(end - start);
      Matrix xb(bs, kLdInputWidth), yb(bs, 1);
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = train_z.row(static_cast<Eigen::Index>(perm[i]));
        yb(static_cast<Eigen::Index>(i - start), 0) = train_t(static_cast<Eigen::Index>(perm[i]), 0);
      }
      Tape t;
      const auto bound = nn::bind(t, model.params, true);
      const Var loss = nn::mse(t, model.mlp.forward(t, bound, t.leaf(std::move(xb))), t.leaf(std::move(yb)));
      t.backward(loss);
      epoch_loss += t.value(loss)(0, 0);
      ++batches;
      nn::adam_step(model.params, nn::collect_grads(t, bound), adam);
    }
    result.history.train_loss.push_back(epoch_loss / static_cast<double>(batches));
    const double v = val_loss(model.params);
    result.history.val_loss.push_back(v);
    if (v < best_val) {
      best_val = v;
      best = model.params;
      result.history.best_epoch = epoch + 1;
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      break;
    }
  }
  model.params = best;
  result.model = std::move(model);
  return result;
}

}  // namespace bwb::surrogate
