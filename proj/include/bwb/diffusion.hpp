#pragma once

// Conditional DDPM over the 9-D planform vector.
//
// Indexing: array slot i holds step t = i + 1, so alpha_bar[0] is the first
// noised level and alpha_bar[T-1] the last. The "previous" level of slot 0 is
// the clean signal (alpha_bar = 1).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bwb/geom.hpp"
#include "bwb/nn.hpp"
#include "bwb/rng.hpp"
#include "bwb/scaler.hpp"

namespace bwb::diffusion {

using nn::Matrix;
using nn::RowVector;
using nn::Tape;
using nn::Var;

inline constexpr Eigen::Index kGeomDim = static_cast<Eigen::Index>(geom::kNumParams);
inline constexpr Eigen::Index kConditionDim = 5;

// ---- schedule ----------------------------------------------------------------

struct NoiseSchedule {
  int T = 0;
  double s = 0.008;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  void require_step(int i, const char* who) const {
    if (i < 0 || i >= T) {
      throw ArgumentError(std::string(who) + ": step index " + std::to_string(i) + " outside [0, " +
                          std::to_string(T) + ")");
    }
  }

  double alpha_bar_prev(int i) const { return i == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(i - 1)]; }

  /// Posterior variance beta_t (1 - abar_{t-1}) / (1 - abar_t); zero at the first step.
  double sigma2(int i) const {
    const auto k = static_cast<std::size_t>(i);
    return beta[k] * (1.0 - alpha_bar_prev(i)) / (1.0 - alpha_bar[k]);
  }
};

inline NoiseSchedule cosine_schedule(int T, double s = 0.008) {
  if (T < 2) throw ArgumentError("cosine_schedule: T must be >= 2, got " + std::to_string(T));
  auto f = [&](double t) {
    const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  NoiseSchedule sc;
  sc.T = T;
  sc.s = s;
  const auto n = static_cast<std::size_t>(T);
  sc.beta.resize(n);
  sc.alpha.resize(n);
  sc.alpha_bar.resize(n);
  const double f0 = f(0.0);
  double prev = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ab = f(static_cast<double>(i + 1)) / f0;
    sc.beta[i] = std::clamp(1.0 - ab / prev, 1e-8, 0.999);
    prev = ab;
  }
  // alpha_bar is rebuilt from the clipped betas so the product identity is exact.
  double cum = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    sc.alpha[i] = 1.0 - sc.beta[i];
    cum *= sc.alpha[i];
    sc.alpha_bar[i] = cum;
  }
  return sc;
}

/// x_t = sqrt(abar) x0 + sqrt(1 - abar) eps, row-wise with per-row step indices.
inline Matrix forward_noise(const Matrix& x0, std::span<const int> steps, const Matrix& eps,
                            const NoiseSchedule& sc) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) {
    throw ArgumentError("forward_noise: x0 " + nn::shape_str(x0) + " and eps " + nn::shape_str(eps) +
                        " differ");
  }
  if (static_cast<Eigen::Index>(steps.size()) != x0.rows()) {
    throw ArgumentError("forward_noise: one step index per row required");
  }
  Matrix xt(x0.rows(), x0.cols());
  for (Eigen::Index r = 0; r < x0.rows(); ++r) {
    const int i = steps[static_cast<std::size_t>(r)];
    sc.require_step(i, "forward_noise");
    const double ab = sc.alpha_bar[static_cast<std::size_t>(i)];
    xt.row(r) = std::sqrt(ab) * x0.row(r) + std::sqrt(1.0 - ab) * eps.row(r);
  }
  return xt;
}

inline RowVector forward_noise(const RowVector& x0, int step, const RowVector& eps, const NoiseSchedule& sc) {
  const int steps[1] = {step};
  return forward_noise(Matrix(x0), steps, Matrix(eps), sc);
}

// ---- reverse step --------------------------------------------------------------

struct ReverseStep {
  Matrix x0_hat;
  Matrix mean;
};

/// Posterior mean from the predicted noise. Clamping x0_hat is optional.
inline ReverseStep reverse_mean(const NoiseSchedule& sc, int i, const Matrix& xt, const Matrix& eps_hat,
                                std::optional<double> clamp_x0) {
  sc.require_step(i, "reverse_mean");
  const auto k = static_cast<std::size_t>(i);
  const double ab = sc.alpha_bar[k];
  const double ab_prev = sc.alpha_bar_prev(i);
  ReverseStep r;
  r.x0_hat = (xt - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
  if (clamp_x0) r.x0_hat = r.x0_hat.cwiseMax(-*clamp_x0).cwiseMin(*clamp_x0);
  const double c0 = std::sqrt(ab_prev) * sc.beta[k] / (1.0 - ab);
  const double ct = std::sqrt(sc.alpha[k]) * (1.0 - ab_prev) / (1.0 - ab);
  r.mean = c0 * r.x0_hat + ct * xt;
  return r;
}

inline constexpr double kDefaultX0Clamp = 1.5;

/// Ancestral sampling in the scaled [-1, 1] space for K chains. `predict(x, i)`
/// returns eps_hat (K x 9) for all chains at step index i. Chain k draws from
/// its own stream so results do not depend on K or evaluation order.
template <class Predictor>
Matrix sample_scaled(const NoiseSchedule& sc, Predictor&& predict, std::size_t K, std::uint64_t seed,
                     std::optional<double> clamp_x0 = kDefaultX0Clamp) {
  std::vector<std::mt19937_64> rngs;
  rngs.reserve(K);
  for (std::size_t k = 0; k < K; ++k) rngs.push_back(stream_rng(seed, k));
  // One distribution per chain: normal_distribution caches a spare variate.
  std::vector<std::normal_distribution<double>> normal(K);
  auto draw = [&]() {
    Matrix z(static_cast<Eigen::Index>(K), kGeomDim);
    for (std::size_t k = 0; k < K; ++k) {
      for (Eigen::Index j = 0; j < kGeomDim; ++j) z(static_cast<Eigen::Index>(k), j) = normal[k](rngs[k]);
    }
    return z;
  };
  Matrix x = draw();
  for (int i = sc.T - 1; i >= 0; --i) {
    const Matrix eps_hat = predict(static_cast<const Matrix&>(x), i);
    if (eps_hat.rows() != x.rows() || eps_hat.cols() != kGeomDim) {
      throw ArgumentError("sample: predictor returned " + nn::shape_str(eps_hat) + ", expected " +
                          nn::shape_str(x));
    }
    ReverseStep r = reverse_mean(sc, i, x, eps_hat, clamp_x0);
    if (i > 0) {
      x = r.mean + std::sqrt(sc.sigma2(i)) * draw();
    } else {
      x = std::move(r.mean);
    }
    if (!x.allFinite()) throw NumericalError("sample: non-finite state at step " + std::to_string(i + 1));
  }
  return x;
}

// ---- conditioning ---------------------------------------------------------------

struct ConditionVector {
  double altitude_kft = 0.0;
  double log10_reynolds = 0.0;
  double mach = 0.0;
  double alpha_deg = 0.0;
  double ld_target = 0.0;

  RowVector row() const {
    RowVector r(kConditionDim);
    r << altitude_kft, log10_reynolds, mach, alpha_deg, ld_target;
    return r;
  }

  static ConditionVector from(const geom::FlightCondition& fc, double ld) {
    return {fc.altitude_kft, fc.log10_reynolds, fc.mach, fc.alpha_deg, ld};
  }
};

// ---- denoiser -------------------------------------------------------------------

struct DenoiserConfig {
  Eigen::Index width = 512;
  std::size_t depth = 6;
  Eigen::Index time_dim = 128;
  Eigen::Index cond_dim = 128;
  int T = 1000;
  double schedule_s = 0.008;
  bool clamp_x0 = true;
};

struct DenoiserModel {
  DenoiserConfig config;
  nn::ParamSet params;
  std::uint64_t seed = 0;
  NoiseSchedule schedule;
  MinMaxScaler geom_scaler;
  Standardizer cond_scaler;
  geom::ParamBox box;

  nn::Dense time_proj;
  nn::Dense cond_proj;
  nn::Dense input;
  std::vector<std::array<nn::Dense, 2>> blocks;
  nn::Dense head;

  static DenoiserModel create(const DenoiserConfig& cfg, std::uint64_t seed) {
    if (cfg.time_dim % 2 != 0) throw ArgumentError("DenoiserConfig: time_dim must be even");
    DenoiserModel m;
    m.config = cfg;
    m.seed = seed;
    m.schedule = cosine_schedule(cfg.T, cfg.schedule_s);
    std::mt19937_64 rng(seed);
    auto& ps = m.params;
    m.time_proj = nn::add_dense(ps, "cdm.time", cfg.time_dim, cfg.time_dim, rng);
    m.cond_proj = nn::add_dense(ps, "cdm.cond", kConditionDim, cfg.cond_dim, rng);
    m.input = nn::add_dense(ps, "cdm.in", kGeomDim + cfg.time_dim + cfg.cond_dim, cfg.width, rng);
    for (std::size_t b = 0; b < cfg.depth; ++b) {
      const std::string pre = "cdm.block." + std::to_string(b);
      m.blocks.push_back({nn::add_dense(ps, pre + ".0", cfg.width, cfg.width, rng),
                          nn::add_dense(ps, pre + ".1", cfg.width, cfg.width, rng)});
    }
    m.head = nn::add_dense(ps, "cdm.head", cfg.width, kGeomDim, rng);
    return m;
  }

  void relink() {
    DenoiserModel fresh = create(config, seed);
    if (fresh.params.names() != params.names()) {
      throw SchemaError("DenoiserModel: parameter names do not match the architecture descriptor");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].rows() != fresh.params[i].rows() || params[i].cols() != fresh.params[i].cols()) {
        throw SchemaError("DenoiserModel: parameter " + params.name(i) + " expected " +
                          nn::shape_str(fresh.params[i]) + " found " + nn::shape_str(params[i]));
      }
    }
    fresh.params = std::move(params);
    fresh.geom_scaler = std::move(geom_scaler);
    fresh.cond_scaler = std::move(cond_scaler);
    fresh.box = box;
    *this = std::move(fresh);
  }

  bool fitted() const { return geom_scaler.fitted() && cond_scaler.fitted(); }
};

/// eps_hat (B x 9) for scaled x_t (B x 9), step indices and standardized conditions (B x 5).
inline Var denoiser_forward(Tape& t, const std::vector<Var>& bound, const DenoiserModel& m, Var xt,
                            std::span<const int> steps, Var cond) {
  const Matrix& X = t.value(xt);
  if (X.cols() != kGeomDim) throw ArgumentError("denoiser: x_t must be 9 wide, got " + nn::shape_str(X));
  if (t.value(cond).cols() != kConditionDim || t.value(cond).rows() != X.rows()) {
    throw ArgumentError("denoiser: condition block " + nn::shape_str(t.value(cond)) + " does not match x_t " +
                        nn::shape_str(X));
  }
  if (static_cast<Eigen::Index>(steps.size()) != X.rows()) {
    throw ArgumentError("denoiser: one step index per row required");
  }
  std::vector<int> one_based(steps.begin(), steps.end());
  for (int& s : one_based) s += 1;
  const Var temb = nn::apply(t, bound, m.time_proj, t.leaf(nn::sinusoidal_embed(one_based, m.config.time_dim)));
  const Var cemb = nn::apply(t, bound, m.cond_proj, cond);
  Var h = nn::apply(t, bound, m.input, nn::concat_cols(t, {xt, temb, cemb}));
  for (const auto& blk : m.blocks) {
    const Var u = nn::silu(t, nn::apply(t, bound, blk[0], nn::layer_norm(t, h)));
    h = nn::add(t, h, nn::apply(t, bound, blk[1], u));
  }
  return nn::apply(t, bound, m.head, nn::layer_norm(t, h));
}

inline Matrix predict_eps(const DenoiserModel& m, const Matrix& xt, std::span<const int> steps,
                          const Matrix& cond_std) {
  Tape t;
  const auto bound = nn::bind(t, m.params, false);
  return t.value(denoiser_forward(t, bound, m, t.leaf(xt), steps, t.leaf(cond_std)));
}

/// K planforms for one raw condition, clipped into the model's box.
inline std::vector<geom::PlanformParams> sample(const DenoiserModel& m, const ConditionVector& mu,
                                                std::size_t K, std::uint64_t seed) {
  if (!m.fitted()) throw StateError("sample: denoiser scalers are not fitted");
  const Matrix cond = m.cond_scaler.normalize(mu.row()).replicate(static_cast<Eigen::Index>(K), 1);
  std::vector<int> steps(K);
  auto predict = [&](const Matrix& x, int i) {
    std::fill(steps.begin(), steps.end(), i);
    return predict_eps(m, x, steps, cond);
  };
  const std::optional<double> clamp =
      m.config.clamp_x0 ? std::optional<double>(kDefaultX0Clamp) : std::nullopt;
  const Matrix raw = m.geom_scaler.from_unit(sample_scaled(m.schedule, predict, K, seed, clamp));
  std::vector<geom::PlanformParams> out;
  out.reserve(K);
  for (Eigen::Index k = 0; k < raw.rows(); ++k) {
    std::array<double, geom::kNumParams> v{};
    for (Eigen::Index j = 0; j < kGeomDim; ++j) v[static_cast<std::size_t>(j)] = raw(k, j);
    out.push_back(m.box.clip(geom::PlanformParams::from_array(v)));
  }
  return out;
}

// ---- training -------------------------------------------------------------------

struct DiffusionSample {
  geom::PlanformParams planform;
  ConditionVector condition;
};

struct DiffusionTrainConfig {
  std::size_t epochs = 200;
  std::size_t max_steps = 0;  // 0 = no cap
  std::size_t batch = 64;
  double lr = 5e-4;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

struct DiffusionTrainResult {
  DenoiserModel model;
  std::vector<double> epoch_loss;  // mean per-sample ||eps - eps_hat||^2
};

inline RowVector planform_vector(const geom::PlanformParams& p) {
  const auto a = p.to_array();
  RowVector r(kGeomDim);
  for (std::size_t j = 0; j < geom::kNumParams; ++j) r(static_cast<Eigen::Index>(j)) = a[j];
  return r;
}

inline MinMaxScaler box_scaler(const geom::ParamBox& box) {
  RowVector lo(kGeomDim), hi(kGeomDim);
  for (std::size_t j = 0; j < geom::kNumParams; ++j) {
    lo(static_cast<Eigen::Index>(j)) = box.lo[j];
    hi(static_cast<Eigen::Index>(j)) = box.hi[j];
  }
  return MinMaxScaler::from_bounds(lo, hi);
}

inline DiffusionTrainResult train_denoiser(const std::vector<DiffusionSample>& data, const DenoiserConfig& cfg,
                                           const DiffusionTrainConfig& tc, const geom::ParamBox& box = {}) {
  if (data.empty()) throw ArgumentError("train_denoiser: empty dataset");
  DiffusionTrainResult result;
  DenoiserModel m = DenoiserModel::create(cfg, tc.seed);
  m.box = box;
  m.geom_scaler = box_scaler(box);

  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix x0(n, kGeomDim), cond(n, kConditionDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    x0.row(i) = planform_vector(data[static_cast<std::size_t>(i)].planform);
    cond.row(i) = data[static_cast<std::size_t>(i)].condition.row();
  }
  m.cond_scaler = Standardizer::fit(cond);
  x0 = m.geom_scaler.to_unit(x0);
  cond = m.cond_scaler.normalize(cond);

  nn::AdamConfig ac;
  ac.lr = tc.lr;
  ac.weight_decay = tc.weight_decay;
  auto adam = nn::adam_init(m.params, ac);
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> pick_t(0, m.schedule.T - 1);
  std::normal_distribution<double> normal;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch) {
      if (tc.max_steps && step >= tc.max_steps) break;
      const std::size_t end = std::min(order.size(), start + tc.batch);
      const auto b = static_cast<Eigen::Index>(end - start);
      Matrix xb(b, kGeomDim), cb(b, kConditionDim), eps(b, kGeomDim);
      std::vector<int> steps(static_cast<std::size_t>(b));
      for (Eigen::Index r = 0; r < b; ++r) {
        const auto src = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]);
        xb.row(r) = x0.row(src);
        cb.row(r) = cond.row(src);
        steps[static_cast<std::size_t>(r)] = pick_t(rng);
        for (Eigen::Index j = 0; j < kGeomDim; ++j) eps(r, j) = normal(rng);
      }
      const Matrix xt = forward_noise(xb, steps, eps, m.schedule);
      Tape t;
      const auto bound = nn::bind(t, m.params, true);
      const Var pred = denoiser_forward(t, bound, m, t.leaf(xt), steps, t.leaf(std::move(cb)));
      const Var loss = nn::scale(t, nn::mse(t, pred, t.leaf(std::move(eps))), static_cast<double>(kGeomDim));
      t.backward(loss);
      nn::adam_step(m.params, nn::collect_grads(t, bound), adam);
      total += t.value(loss)(0, 0) * static_cast<double>(b);
      seen += static_cast<std::size_t>(b);
      ++step;
    }
    if (seen == 0) break;
    result.epoch_loss.push_back(total / static_cast<double>(seen));
  }
  result.model = std::move(m);
  return result;
}

struct DenoiserEvaluation {
  double model_loss = 0.0;  // mean ||eps - eps_hat||^2
  double zero_loss = 0.0;   // same draws with eps_hat = 0
};

/// Held-out noise-prediction loss with `draws` (t, eps) pairs per sample.
inline DenoiserEvaluation evaluate_denoiser(const DenoiserModel& m, const std::vector<DiffusionSample>& data,
                                            std::uint64_t seed, std::size_t draws = 4) {
  if (!m.fitted()) throw StateError("evaluate_denoiser: scalers not fitted");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_t(0, m.schedule.T - 1);
  std::normal_distribution<double> normal;
  const auto n = static_cast<Eigen::Index>(data.size() * draws);
  Matrix x0(n, kGeomDim), cond(n, kConditionDim), eps(n, kGeomDim);
  std::vector<int> steps(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& d = data[static_cast<std::size_t>(r) / draws];
    x0.row(r) = planform_vector(d.planform);
    cond.row(r) = d.condition.row();
    steps[static_cast<std::size_t>(r)] = pick_t(rng);
    for (Eigen::Index j = 0; j < kGeomDim; ++j) eps(r, j) = normal(rng);
  }
  const Matrix xt = forward_noise(m.geom_scaler.to_unit(x0), steps, eps, m.schedule);
  const Matrix pred = predict_eps(m, xt, steps, m.cond_scaler.normalize(cond));
  return {(pred - eps).squaredNorm() / static_cast<double>(n), eps.squaredNorm() / static_cast<double>(n)};
}

}  // namespace bwb::diffusion
