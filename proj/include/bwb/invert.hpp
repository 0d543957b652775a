#pragma once

// Inverse design: multi-start projected gradient descent on the L/D surrogate,
// CDM sampling, and the CDM -> PGD hybrid, plus a worker pool over conditions.
//
// PGD iterates live in the surrogate's standardized planform space
// z = (p - mean) / std. After every step z is mapped to raw units, clipped to
// the box and mapped back; the clipped raw point is kept so bounds are hit exactly.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "bwb/diffusion.hpp"
#include "bwb/geom.hpp"
#include "bwb/rng.hpp"
#include "bwb/surrogate/ld.hpp"

namespace bwb::invert {

using nn::Matrix;
using nn::RowVector;

inline constexpr Eigen::Index kDim = static_cast<Eigen::Index>(geom::kNumParams);

struct PgdConfig {
  std::size_t steps = 1000;
  double lr = 0.05;
  std::size_t seeds = 100;
  std::size_t max_redraws = 3;

  void validate(bool allow_zero_steps = false) const {
    if (!allow_zero_steps && steps < 1) throw ArgumentError("PgdConfig: steps must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ArgumentError("PgdConfig: lr must be positive");
    if (seeds < 1) throw ArgumentError("PgdConfig: seeds must be >= 1");
  }
};

inline PgdConfig hybrid_defaults() {
  PgdConfig c;
  c.steps = 200;
  return c;
}

/// Affine map between optimization coordinates and raw planform units.
struct PgdSpace {
  RowVector scale;   // raw = z * scale + offset
  RowVector offset;
  geom::ParamBox box;

  Matrix to_raw(const Matrix& z) const {
    return ((z.array().rowwise() * scale.array()).rowwise() + offset.array()).matrix();
  }
  Matrix to_z(const Matrix& raw) const {
    return ((raw.rowwise() - offset).array().rowwise() / scale.array()).matrix();
  }
  Matrix clip(Matrix raw) const {
    for (Eigen::Index j = 0; j < kDim; ++j) {
      const auto k = static_cast<std::size_t>(j);
      raw.col(j) = raw.col(j).cwiseMax(box.lo[k]).cwiseMin(box.hi[k]);
    }
    return raw;
  }
};

inline PgdSpace surrogate_space(const surrogate::LdSurrogate& m, const geom::ParamBox& box = {}) {
  m.inputs.require(surrogate::kLdFeatures, "surrogate_space");
  return {m.inputs.std.head(kDim), m.inputs.mean.head(kDim), box};
}

/// Values f (K) and gradients df/dz (K x 9) at K points.
struct ObjectiveEval {
  Eigen::VectorXd value;
  Matrix grad;
};

using Objective = std::function<ObjectiveEval(const Matrix& z)>;

/// L/D surrogate objective under a fixed flight condition, differentiated in z.
inline Objective ld_objective(const surrogate::LdSurrogate& m, const PgdSpace& space,
                              const geom::FlightCondition& fc) {
  return [&m, space, fc](const Matrix& z) {
    nn::Tape t;
    const auto bound = nn::bind(t, m.params, false);
    const nn::Var zv = t.leaf(z, true);
    const nn::Var y = surrogate::ld_forward(t, bound, m, zv, space.scale, space.offset, fc);
    t.backward(nn::sum(t, y));
    ObjectiveEval e;
    e.value = t.value(y).col(0);
    e.grad = t.grad(zv);
    return e;
  };
}

/// Runs `steps` PGD iterations on sum_k (f_k - target)^2 from raw starting rows.
/// Returns the final clipped raw rows.
inline Matrix pgd(const Objective& f, const PgdSpace& space, const Matrix& raw_init, double target,
                  const PgdConfig& cfg) {
  cfg.validate(true);
  if (raw_init.cols() != kDim) throw ArgumentError("pgd: initial points must be 9 wide, got " + nn::shape_str(raw_init));
  Matrix raw = space.clip(raw_init);
  Matrix z = space.to_z(raw);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const ObjectiveEval e = f(z);
    const Eigen::VectorXd resid = e.value.array() - target;
    if (!resid.allFinite() || !e.grad.allFinite()) {
      throw NumericalError("pgd: non-finite objective at step " + std::to_string(s));
    }
    z -= cfg.lr * (2.0 * resid).asDiagonal() * e.grad;
    raw = space.clip(space.to_raw(z));
    z = space.to_z(raw);
  }
  return raw;
}

// ---- results ---------------------------------------------------------------------

enum class Method { Cdm, Opt, Hybrid };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Cdm: return "cdm";
    case Method::Opt: return "opt";
    case Method::Hybrid: return "hybrid";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "cdm") return Method::Cdm;
  if (s == "opt") return Method::Opt;
  if (s == "hybrid") return Method::Hybrid;
  throw ArgumentError("unknown method '" + s + "' (expected cdm, opt or hybrid)");
}

struct InverseTask {
  std::size_t id = 0;
  geom::FlightCondition condition;
  double target = 0.0;
};

struct InverseResult {
  std::size_t condition_id = 0;
  Method method = Method::Opt;
  double target = 0.0;
  std::vector<geom::PlanformParams> candidates;
  std::vector<double> ld;
  std::size_t best = 0;
  double seconds = 0.0;
  std::size_t dropped = 0;  // seeds abandoned after repeated non-finite starts
};

inline Matrix to_rows(const std::vector<geom::PlanformParams>& ps) {
  Matrix m(static_cast<Eigen::Index>(ps.size()), kDim);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto a = ps[i].to_array();
    for (std::size_t j = 0; j < geom::kNumParams; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[j];
  }
  return m;
}

inline std::vector<geom::PlanformParams> from_rows(const Matrix& m) {
  std::vector<geom::PlanformParams> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::array<double, geom::kNumParams> a{};
    for (std::size_t j = 0; j < geom::kNumParams; ++j) a[j] = m(i, static_cast<Eigen::Index>(j));
    out.push_back(geom::PlanformParams::from_array(a));
  }
  return out;
}

/// Smallest squared target error; ties keep the lowest index.
inline std::size_t best_candidate(const std::vector<double>& ld, double target) {
  std::size_t best = 0;
  double err = INFINITY;
  for (std::size_t i = 0; i < ld.size(); ++i) {
    const double e = (ld[i] - target) * (ld[i] - target);
    if (e < err) {
      err = e;
      best = i;
    }
  }
  return best;
}

inline void finish(InverseResult& r, const surrogate::LdSurrogate& ld, const geom::FlightCondition& fc,
                   const geom::ParamBox& box) {
  for (const auto& p : r.candidates) {
    if (!box.contains(p)) throw NumericalError("inversion emitted a candidate outside the box");
  }
  r.ld = r.candidates.empty() ? std::vector<double>{} : surrogate::predict_ld_batch(ld, to_rows(r.candidates), fc);
  r.best = best_candidate(r.ld, r.target);
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Keeps rows whose starting objective is finite, redrawing the rest up to the limit.
inline Matrix screen_starts(const Objective& f, const PgdSpace& space, Matrix raw, std::mt19937_64& rng,
                            const PgdConfig& cfg, std::size_t& dropped) {
  auto finite = [&](const Matrix& row) {
    try {
      const auto e = f(space.to_z(row));
      return e.value.allFinite() && e.grad.allFinite();
    } catch (const NumericalError&) {
      return false;
    }
  };
  if (finite(raw)) return raw;
  std::vector<Eigen::Index> keep;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    bool ok = finite(raw.row(i));
    for (std::size_t a = 0; !ok && a < cfg.max_redraws; ++a) {
      for (Eigen::Index j = 0; j < kDim; ++j) {
        const auto k = static_cast<std::size_t>(j);
        raw(i, j) = space.box.lo[k] + u(rng) * (space.box.hi[k] - space.box.lo[k]);
      }
      ok = finite(raw.row(i));
    }
    if (ok) {
      keep.push_back(i);
    } else {
      ++dropped;
      std::cerr << "warning: dropping start " << i << " after " << cfg.max_redraws << " redraws\n";
    }
  }
  if (keep.empty()) {
    throw NumericalError("every start gives a non-finite objective after " + std::to_string(cfg.max_redraws) +
                         " redraws");
  }
  Matrix out(static_cast<Eigen::Index>(keep.size()), kDim);
  for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = raw.row(keep[i]);
  return out;
}

}  // namespace detail

inline InverseResult run_opt_baseline(const surrogate::LdSurrogate& ld, const geom::FlightCondition& fc,
                                      double target, const PgdConfig& cfg, std::uint64_t seed,
                                      const geom::ParamBox& box = {}) {
  cfg.validate();
  const auto t0 = detail::Clock::now();
  InverseResult r;
  r.method = Method::Opt;
  r.target = target;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix raw(static_cast<Eigen::Index>(cfg.seeds), kDim);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    for (Eigen::Index j = 0; j < kDim; ++j) {
      const auto k = static_cast<std::size_t>(j);
      raw(i, j) = box.lo[k] + u(rng) * (box.hi[k] - box.lo[k]);
    }
  }
  const PgdSpace space = surrogate_space(ld, box);
  const Objective f = ld_objective(ld, space, fc);
  raw = detail::screen_starts(f, space, std::move(raw), rng, cfg, r.dropped);
  raw = pgd(f, space, raw, target, cfg);
  r.candidates = from_rows(raw);
  finish(r, ld, fc, box);
  r.seconds = detail::seconds_since(t0);
  return r;
}

inline InverseResult run_cdm(const diffusion::DenoiserModel& cdm, const surrogate::LdSurrogate& ld,
                             const geom::FlightCondition& fc, double target, std::size_t K, std::uint64_t seed) {
  const auto t0 = detail::Clock::now();
  InverseResult r;
  r.method = Method::Cdm;
  r.target = target;
  r.candidates = diffusion::sample(cdm, diffusion::ConditionVector::from(fc, target), K, seed);
  finish(r, ld, fc, cdm.box);
  r.seconds = detail::seconds_since(t0);
  return r;
}

/// CDM samples refined by cfg.steps PGD iterations each; steps = 0 returns the samples untouched.
inline InverseResult run_hybrid(const diffusion::DenoiserModel& cdm, const surrogate::LdSurrogate& ld,
                                const geom::FlightCondition& fc, double target, const PgdConfig& cfg,
                                std::uint64_t seed) {
  cfg.validate(true);
  const auto t0 = detail::Clock::now();
  InverseResult r;
  r.method = Method::Hybrid;
  r.target = target;
  r.candidates = diffusion::sample(cdm, diffusion::ConditionVector::from(fc, target), cfg.seeds, seed);
  if (cfg.steps > 0) {
    const PgdSpace space = surrogate_space(ld, cdm.box);
    const Objective f = ld_objective(ld, space, fc);
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    Matrix raw = detail::screen_starts(f, space, to_rows(r.candidates), rng, cfg, r.dropped);
    raw = pgd(f, space, raw, target, cfg);
    r.candidates = from_rows(raw);
  }
  finish(r, ld, fc, cdm.box);
  r.seconds = detail::seconds_since(t0);
  return r;
}

// ---- orchestration ------------------------------------------------------------------

struct InversionModels {
  const surrogate::LdSurrogate* ld = nullptr;
  const diffusion::DenoiserModel* cdm = nullptr;  // required for cdm and hybrid
};

struct RunConfig {
  Method method = Method::Opt;
  PgdConfig pgd;          // seeds doubles as K for every method
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  geom::ParamBox box;
};

/// Processes tasks on a worker pool. Task i always uses stream (seed, task id),
/// so the output does not depend on the worker count.
inline std::vector<InverseResult> run_inversions(const InversionModels& models, const std::vector<InverseTask>& tasks,
                                                 const RunConfig& cfg) {
  if (models.ld == nullptr) throw ArgumentError("run_inversions: L/D surrogate required");
  if (cfg.method != Method::Opt && models.cdm == nullptr) {
    throw ArgumentError(std::string("run_inversions: method ") + method_name(cfg.method) + " needs a diffusion model");
  }
  std::vector<InverseResult> out(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const auto& task = tasks[i];
        const std::uint64_t s = stream_rng(cfg.seed, task.id)();
        switch (cfg.method) {
          case Method::Opt:
            out[i] = run_opt_baseline(*models.ld, task.condition, task.target, cfg.pgd, s, cfg.box);
            break;
          case Method::Cdm:
            out[i] = run_cdm(*models.cdm, *models.ld, task.condition, task.target, cfg.pgd.seeds, s);
            break;
          case Method::Hybrid:
            out[i] = run_hybrid(*models.cdm, *models.ld, task.condition, task.target, cfg.pgd, s);
            break;
        }
        out[i].condition_id = task.id;
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = tasks.size();
        return;
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(cfg.workers, tasks.size()));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace bwb::invert
