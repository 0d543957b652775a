#pragma once

// FiLM-conditioned coordinate MLP predicting (Cp, Cfx, Cfz) per surface point.
//
// The base network sees only s = (x, y, z, nx, ny, nz). A hypernetwork maps
// the 12-entry conditioning vector to per-layer (gamma, beta); each modulated
// layer computes h <- act(W (gamma * h + beta) + b).

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "bwb/geom.hpp"
#include "bwb/nn.hpp"
#include "bwb/scaler.hpp"
#include "bwb/surrogate/ld.hpp"

namespace bwb::surrogate {

inline constexpr Eigen::Index kPointFeatures = 6;
inline constexpr Eigen::Index kFilmConditionWidth = 12;
inline constexpr Eigen::Index kFieldChannels = 3;

/// Serialized with checkpoints so the conditioning order cannot drift.
inline constexpr std::array<std::string_view, kFilmConditionWidth> kFilmConditionOrder = {
    "log10_reynolds", "mach", "alpha", "b1", "b2", "b3", "c2", "c3", "c4", "s1", "s3", "x3"};

inline RowVector film_condition(const geom::PlanformParams& p, const geom::FlightCondition& fc) {
  RowVector mu(kFilmConditionWidth);
  mu << fc.log10_reynolds, fc.mach, fc.alpha_deg, planform_row(p);
  return mu;
}

/// (N x 6) point features [x, y, z, nx, ny, nz].
inline Matrix point_features(const geom::SurfacePointCloud& c) {
  Matrix s(static_cast<Eigen::Index>(c.size()), kPointFeatures);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.points[i];
    const auto& n = c.normals[i];
    s.row(static_cast<Eigen::Index>(i)) << p.x, p.y, p.z, n.x, n.y, n.z;
  }
  return s;
}

/// (N x 3) targets [Cp, Cfx, Cfz].
inline Matrix field_targets(const geom::SurfacePointCloud& c) {
  if (!c.has_fields()) throw ArgumentError("field_targets: cloud has no Cp/Cfx/Cfz channels");
  Matrix u(static_cast<Eigen::Index>(c.size()), kFieldChannels);
  for (std::size_t i = 0; i < c.size(); ++i) u.row(static_cast<Eigen::Index>(i)) << c.cp[i], c.cfx[i], c.cfz[i];
  return u;
}

struct FilmConfig {
  Eigen::Index width = 256;
  Eigen::Index hyper_width = 64;
  std::size_t modulated_layers = 4;
  std::size_t plain_layers = 3;
};

struct FilmModel {
  FilmConfig config;
  nn::ParamSet params;
  std::uint64_t seed = 0;

  nn::Dense input;
  std::vector<nn::Dense> modulated;
  std::vector<nn::Dense> plain;
  nn::Dense head;
  std::array<nn::Dense, 2> hyper{};
  std::vector<nn::Dense> gamma;
  std::vector<nn::Dense> beta;

  static FilmModel create(const FilmConfig& cfg, std::uint64_t seed) {
    FilmModel m;
    m.config = cfg;
    m.seed = seed;
    std::mt19937_64 rng(seed);
    auto& ps = m.params;
    m.input = nn::add_dense(ps, "film.in", kPointFeatures, cfg.width, rng);
    for (std::size_t l = 0; l < cfg.modulated_layers; ++l) {
      m.modulated.push_back(nn::add_dense(ps, "film.mod." + std::to_string(l), cfg.width, cfg.width, rng));
    }
    for (std::size_t l = 0; l < cfg.plain_layers; ++l) {
      m.plain.push_back(nn::add_dense(ps, "film.plain." + std::to_string(l), cfg.width, cfg.width, rng));
    }
    m.head = nn::add_dense(ps, "film.head", cfg.width, kFieldChannels, rng);
    m.hyper[0] = nn::add_dense(ps, "film.hyper.0", kFilmConditionWidth, cfg.hyper_width, rng);
    m.hyper[1] = nn::add_dense(ps, "film.hyper.1", cfg.hyper_width, cfg.hyper_width, rng);
    for (std::size_t l = 0; l < cfg.modulated_layers; ++l) {
      m.gamma.push_back(nn::add_dense(ps, "film.gamma." + std::to_string(l), cfg.hyper_width, cfg.width, rng));
      ps[m.gamma.back().b].setOnes();
      m.beta.push_back(nn::add_dense(ps, "film.beta." + std::to_string(l), cfg.hyper_width, cfg.width, rng));
    }
    return m;
  }

  /// Rebuilds layer indices after parameters are restored from disk.
  void relink() {
    FilmModel fresh = create(config, seed);
    if (fresh.params.names() != params.names()) {
      throw SchemaError("FilmModel: parameter names do not match the architecture descriptor");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].rows() != fresh.params[i].rows() || params[i].cols() != fresh.params[i].cols()) {
        throw SchemaError("FilmModel: parameter " + params.name(i) + " expected " +
                          nn::shape_str(fresh.params[i]) + " found " + nn::shape_str(params[i]));
      }
    }
    fresh.params = std::move(params);
    *this = std::move(fresh);
  }
};

/// s: (B x 6) points; mu: (G x 12) standardized conditions; group[i] is the
/// row of mu that point i belongs to. Returns (B x 3) normalized fields.
inline Var film_forward(Tape& t, const std::vector<Var>& bound, const FilmModel& m, Var s, Var mu,
                        const std::vector<Eigen::Index>& group) {
  if (t.value(s).cols() != kPointFeatures) {
    throw ArgumentError("film_forward: point features must be 6 wide, got " + nn::shape_str(t.value(s)));
  }
  if (t.value(mu).cols() != kFilmConditionWidth) {
    throw ArgumentError("film_forward: conditioning must be 12 wide, got " + nn::shape_str(t.value(mu)));
  }
  if (static_cast<Eigen::Index>(group.size()) != t.value(s).rows()) {
    throw ArgumentError("film_forward: group index length does not match point count");
  }
  Var trunk = nn::silu(t, nn::apply(t, bound, m.hyper[0], mu));
  trunk = nn::silu(t, nn::apply(t, bound, m.hyper[1], trunk));

  Var h = nn::silu(t, nn::apply(t, bound, m.input, s));
  for (std::size_t l = 0; l < m.modulated.size(); ++l) {
    const Var g = nn::gather_rows(t, nn::apply(t, bound, m.gamma[l], trunk), group);
    const Var b = nn::gather_rows(t, nn::apply(t, bound, m.beta[l], trunk), group);
    h = nn::add(t, nn::mul(t, g, h), b);
    h = nn::silu(t, nn::apply(t, bound, m.modulated[l], h));
  }
  for (const auto& d : m.plain) h = nn::silu(t, nn::apply(t, bound, d, h));
  return nn::apply(t, bound, m.head, h);
}

/// Base network with modulation removed (gamma = 1, beta = 0).
inline Var film_base_forward(Tape& t, const std::vector<Var>& bound, const FilmModel& m, Var s) {
  Var h = nn::silu(t, nn::apply(t, bound, m.input, s));
  for (const auto& d : m.modulated) h = nn::silu(t, nn::apply(t, bound, d, h));
  for (const auto& d : m.plain) h = nn::silu(t, nn::apply(t, bound, d, h));
  return nn::apply(t, bound, m.head, h);
}

/// Single-point convenience form: s (6) and standardized mu (12) to normalized (Cp, Cfx, Cfz).
inline std::array<double, 3> film_forward(const FilmModel& m, const RowVector& s, const RowVector& mu) {
  Tape t;
  const auto bound = nn::bind(t, m.params, false);
  const Var y = film_forward(t, bound, m, t.leaf(s), t.leaf(mu), {0});
  const Matrix& v = t.value(y);
  return {v(0, 0), v(0, 1), v(0, 2)};
}

struct FieldScaler {
  Standardizer outputs;    // Cp, Cfx, Cfz
  Standardizer condition;  // kFilmConditionOrder
};

struct FieldCase {
  geom::PlanformParams planform;
  geom::FlightCondition condition;
  geom::SurfacePointCloud cloud;
};

/// Denormalized (N x 3) field prediction for one case.
inline Matrix predict_fields(const FilmModel& m, const FieldScaler& sc, const geom::PlanformParams& p,
                             const geom::FlightCondition& fc, const geom::SurfacePointCloud& cloud) {
  Tape t;
  const auto bound = nn::bind(t, m.params, false);
  const Var s = t.leaf(point_features(cloud));
  const Var mu = t.leaf(sc.condition.normalize(film_condition(p, fc)));
  const std::vector<Eigen::Index> group(cloud.size(), 0);
  return sc.outputs.denormalize(t.value(film_forward(t, bound, m, s, mu, group)));
}

/// Per-point mean over channels of squared normalized error, summed over
/// channels: (1/N) sum_i sum_c (u_hat - u)^2.
inline double field_loss(const Matrix& pred_norm, const Matrix& target_norm) {
  return (pred_norm - target_norm).squaredNorm() / static_cast<double>(pred_norm.rows());
}

struct FilmTrainConfig {
  std::size_t max_epochs = 200;
  std::size_t groups_per_batch = 64;
  std::size_t points_per_group = 64;
  double lr = 5e-4;
  std::size_t patience = 30;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct FilmTrainResult {
  FilmModel model;
  FieldScaler scaler;
  TrainHistory history;
  std::vector<std::size_t> validation_cases;
};

inline FilmTrainResult train_field_surrogate(const std::vector<FieldCase>& data, const FilmConfig& cfg,
                                             const FilmTrainConfig& tc) {
  if (data.size() < 2) throw ArgumentError("train_field_surrogate: need at least 2 cases");
  for (const auto& c : data) {
    if (!c.cloud.has_fields()) throw ArgumentError("train_field_surrogate: case without field labels");
  }
  std::mt19937_64 rng(tc.seed);
  const auto order = detail::shuffled_indices(data.size(), rng);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(tc.val_fraction * static_cast<double>(data.size())), 1, data.size() - 1);
  const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  // Scalers from the training split only.
  FilmTrainResult result;
  {
    Eigen::Index total = 0;
    for (auto i : train) total += static_cast<Eigen::Index>(data[i].cloud.size());
    Matrix all(total, kFieldChannels);
    Matrix conds(static_cast<Eigen::Index>(train.size()), kFilmConditionWidth);
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < train.size(); ++k) {
      const auto& c = data[train[k]];
      const Matrix u = field_targets(c.cloud);
      all.middleRows(r, u.rows()) = u;
      r += u.rows();
      conds.row(static_cast<Eigen::Index>(k)) = film_condition(c.planform, c.condition);
    }
    result.scaler.outputs = Standardizer::fit(all);
    result.scaler.condition = Standardizer::fit(conds);
  }
  const FieldScaler& sc = result.scaler;

  struct Prepared {
    Matrix s, u, mu;
  };
  std::vector<Prepared> prep(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    prep[i] = {point_features(data[i].cloud), sc.outputs.normalize(field_targets(data[i].cloud)),
               sc.condition.normalize(film_condition(data[i].planform, data[i].condition))};
  }

  FilmModel model = FilmModel::create(cfg, tc.seed);

  auto val_loss = [&](const nn::ParamSet& ps) {
    double total = 0.0;
    std::size_t points = 0;
    for (auto i : val) {
      Tape t;
      const auto bound = nn::bind(t, ps, false);
      const std::vector<Eigen::Index> group(static_cast<std::size_t>(prep[i].s.rows()), 0);
      const Var y = film_forward(t, bound, model, t.leaf(prep[i].s), t.leaf(prep[i].mu), group);
      total += (t.value(y) - prep[i].u).squaredNorm();
      points += static_cast<std::size_t>(prep[i].s.rows());
    }
    return total / static_cast<double>(points);
  };

  nn::AdamConfig ac;
  ac.lr = tc.lr;
  auto adam = nn::adam_init(model.params, ac);
  nn::ParamSet best = model.params;
  double best_val = val_loss(model.params);
  std::size_t since_best = 0;
  std::vector<std::size_t> perm = train;

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += tc.groups_per_batch) {
      const std::size_t end = std::min(perm.size(), start + tc.groups_per_batch);
      const auto groups = static_cast<Eigen::Index>(end - start);
      Eigen::Index rows = 0;
      for (std::size_t g = start; g < end; ++g) {
        rows += std::min<Eigen::Index>(prep[perm[g]].s.rows(), static_cast<Eigen::Index>(tc.points_per_group));
      }
      Matrix s(rows, kPointFeatures), u(rows, kFieldChannels), mu(groups, kFilmConditionWidth);
      std::vector<Eigen::Index> group;
      group.reserve(static_cast<std::size_t>(rows));
      Eigen::Index r = 0;
      for (std::size_t g = start; g < end; ++g) {
        const Prepared& pc = prep[perm[g]];
        const auto gi = static_cast<Eigen::Index>(g - start);
        mu.row(gi) = pc.mu;
        const auto take = std::min<Eigen::Index>(pc.s.rows(), static_cast<Eigen::Index>(tc.points_per_group));
        if (take == pc.s.rows()) {
          for (Eigen::Index k = 0; k < take; ++k, ++r) {
            s.row(r) = pc.s.row(k);
            u.row(r) = pc.u.row(k);
            group.push_back(gi);
          }
        } else {
          std::uniform_int_distribution<Eigen::Index> pick(0, pc.s.rows() - 1);
          for (Eigen::Index k = 0; k < take; ++k, ++r) {
            const Eigen::Index q = pick(rng);
            s.row(r) = pc.s.row(q);
            u.row(r) = pc.u.row(q);
            group.push_back(gi);
          }
        }
      }
      Tape t;
      const auto bound = nn::bind(t, model.params, true);
      const Var y = film_forward(t, bound, model, t.leaf(std::move(s)), t.leaf(std::move(mu)), group);
      const Var loss = nn::scale(t, nn::mse(t, y, t.leaf(std::move(u))), static_cast<double>(kFieldChannels));
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
  result.validation_cases = val;
  return result;
}

}  // namespace bwb::surrogate
