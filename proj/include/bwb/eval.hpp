#pragma once

// Accuracy, diversity and geometry-recovery metrics for inverse design, and
// pointwise field errors for the field surrogate.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bwb/geom.hpp"
#include "bwb/invert.hpp"
#include "bwb/scaler.hpp"

namespace bwb::eval {

using nn::Matrix;
using nn::RowVector;

/// 1 - SS_res / SS_tot over all rows; nullopt when the targets have no variance.
inline std::optional<double> r2_global(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw ArgumentError("r2_global: need equal nonzero lengths, got " + std::to_string(pred.size()) + " and " +
                        std::to_string(target.size()));
  }
  double mean = 0.0;
  for (double t : target) mean += t;
  mean /= static_cast<double>(target.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (pred[i] - target[i]) * (pred[i] - target[i]);
    ss_tot += (target[i] - mean) * (target[i] - mean);
  }
  if (!(ss_tot > 0.0)) return std::nullopt;
  return 1.0 - ss_res / ss_tot;
}

struct Diversity {
  double mpd = 0.0;
  double mindist = 0.0;
};

/// Mean over unordered pairs and mean nearest-neighbour distance, rows = samples.
inline Diversity diversity(const Matrix& x) {
  const Eigen::Index k = x.rows();
  if (k < 2) throw ArgumentError("diversity: need at least 2 samples, got " + std::to_string(k));
  std::vector<double> nearest(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double d = (x.row(i) - x.row(j)).norm();
      total += d;
      nearest[static_cast<std::size_t>(i)] = std::min(nearest[static_cast<std::size_t>(i)], d);
      nearest[static_cast<std::size_t>(j)] = std::min(nearest[static_cast<std::size_t>(j)], d);
    }
  }
  Diversity out;
  out.mpd = total / (0.5 * static_cast<double>(k) * static_cast<double>(k - 1));
  for (double d : nearest) out.mindist += d;
  out.mindist /= static_cast<double>(k);
  return out;
}

using Ranges = std::array<double, geom::kNumParams>;

/// Per-parameter max - min over a geometry set (normally the test split).
inline Ranges parameter_ranges(const std::vector<geom::PlanformParams>& geoms) {
  if (geoms.empty()) throw ArgumentError("parameter_ranges: empty set");
  Ranges lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (const auto& g : geoms) {
    const auto a = g.to_array();
    for (std::size_t j = 0; j < geom::kNumParams; ++j) {
      lo[j] = std::min(lo[j], a[j]);
      hi[j] = std::max(hi[j], a[j]);
    }
  }
  Ranges r{};
  for (std::size_t j = 0; j < geom::kNumParams; ++j) r[j] = hi[j] - lo[j];
  return r;
}

inline double mre(const geom::PlanformParams& g, const geom::PlanformParams& t, const Ranges& ranges) {
  const auto a = g.to_array();
  const auto b = t.to_array();
  double s = 0.0;
  for (std::size_t j = 0; j < geom::kNumParams; ++j) {
    if (!(ranges[j] > 0.0)) {
      throw ArgumentError("mre: range of parameter '" + std::string(geom::kParamNames[j]) + "' is not positive");
    }
    s += std::abs(a[j] - b[j]) / ranges[j];
  }
  return s / static_cast<double>(geom::kNumParams);
}

inline constexpr double kRecoveryThreshold = 0.20;

struct RecoveryStats {
  double sample_fraction = 0.0;     // mean over conditions of the matching fraction
  double condition_fraction = 0.0;  // conditions with at least one match
};

inline RecoveryStats recovery_stats(const std::vector<std::vector<geom::PlanformParams>>& samples,
                                    const std::vector<geom::PlanformParams>& truth, const Ranges& ranges,
                                    double threshold = kRecoveryThreshold) {
  if (samples.size() != truth.size() || samples.empty()) {
    throw ArgumentError("recovery_stats: one sample set per condition required");
  }
  RecoveryStats s;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < samples.size(); ++c) {
    if (samples[c].empty()) continue;
    std::size_t hits = 0;
    for (const auto& g : samples[c]) hits += mre(g, truth[c], ranges) <= threshold;
    s.sample_fraction += static_cast<double>(hits) / static_cast<double>(samples[c].size());
    s.condition_fraction += hits > 0 ? 1.0 : 0.0;
    ++counted;
  }
  if (counted == 0) return s;
  s.sample_fraction /= static_cast<double>(counted);
  s.condition_fraction /= static_cast<double>(samples.size());
  return s;
}

// ---- field errors -------------------------------------------------------------------

struct ChannelErrors {
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> rel_l1;  // nullopt when the reference norm is zero
  std::optional<double> rel_l2;
};

/// Errors for one case, one entry per column.
inline std::vector<ChannelErrors> field_errors(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw ArgumentError("field_errors: prediction " + nn::shape_str(pred) + " vs reference " + nn::shape_str(truth));
  }
  if (pred.rows() == 0) throw ArgumentError("field_errors: no points");
  std::vector<ChannelErrors> out(static_cast<std::size_t>(pred.cols()));
  const auto n = static_cast<double>(pred.rows());
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    const auto e = (pred.col(c) - truth.col(c)).eval();
    auto& o = out[static_cast<std::size_t>(c)];
    o.mse = e.squaredNorm() / n;
    o.mae = e.cwiseAbs().sum() / n;
    const double l1 = truth.col(c).cwiseAbs().sum();
    const double l2 = truth.col(c).norm();
    if (l1 > 0.0) o.rel_l1 = e.cwiseAbs().sum() / l1;
    if (l2 > 0.0) o.rel_l2 = e.norm() / l2;
  }
  return out;
}

struct ChannelSummary {
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> rel_l1;
  std::optional<double> rel_l2;
  std::size_t cases = 0;
  std::size_t relative_cases = 0;  // cases with a nonzero reference norm
};

/// Per-case metrics averaged over cases; relative errors skip zero-norm references.
inline std::vector<ChannelSummary> field_errors(const std::vector<Matrix>& pred, const std::vector<Matrix>& truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ArgumentError("field_errors: need matching nonempty case lists");
  std::vector<ChannelSummary> sum;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto e = field_errors(pred[i], truth[i]);
    if (sum.empty()) sum.resize(e.size());
    if (e.size() != sum.size()) throw ArgumentError("field_errors: channel count differs between cases");
    for (std::size_t c = 0; c < e.size(); ++c) {
      auto& s = sum[c];
      s.mse += e[c].mse;
      s.mae += e[c].mae;
      ++s.cases;
      if (e[c].rel_l1 && e[c].rel_l2) {
        s.rel_l1 = s.rel_l1.value_or(0.0) + *e[c].rel_l1;
        s.rel_l2 = s.rel_l2.value_or(0.0) + *e[c].rel_l2;
        ++s.relative_cases;
      }
    }
  }
  for (auto& s : sum) {
    s.mse /= static_cast<double>(s.cases);
    s.mae /= static_cast<double>(s.cases);
    if (s.relative_cases) {
      *s.rel_l1 /= static_cast<double>(s.relative_cases);
      *s.rel_l2 /= static_cast<double>(s.relative_cases);
    }
  }
  return sum;
}

// ---- inverse-design report -------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.std += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(m.std / static_cast<double>(v.size()));
  return m;
}

struct ConditionRow {
  std::size_t condition_id = 0;
  double target = 0.0;
  std::size_t k = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double best_abs_error = 0.0;
  double mpd = 0.0;
  double mindist = 0.0;
  std::optional<double> recovery_fraction;
  std::optional<bool> recovered;
};

struct MetricReport {
  std::string method;
  std::optional<double> r2_global;
  MeanStd rmse, mae, best_abs_error, mpd, mindist;
  std::optional<RecoveryStats> recovery;
  std::vector<ConditionRow> rows;
};

/// Truth geometries are optional; when given, recovery columns are filled.
inline MetricReport build_report(const std::vector<invert::InverseResult>& results, const Standardizer& param_z,
                                 const std::vector<geom::PlanformParams>* truth = nullptr,
                                 const Ranges* ranges = nullptr, double threshold = kRecoveryThreshold) {
  if (results.empty()) throw ArgumentError("build_report: no results");
  param_z.require(static_cast<Eigen::Index>(geom::kNumParams), "build_report");
  if (truth != nullptr && (ranges == nullptr || truth->size() != results.size())) {
    throw ArgumentError("build_report: truth geometries need ranges and one entry per condition");
  }
  MetricReport rep;
  rep.method = invert::method_name(results.front().method);
  std::vector<double> all_pred, all_target, rmse, mae, best, mpd, mind;
  std::vector<std::vector<geom::PlanformParams>> sets;
  for (std::size_t c = 0; c < results.size(); ++c) {
    const auto& r = results[c];
    ConditionRow row;
    row.condition_id = r.condition_id;
    row.target = r.target;
    row.k = r.candidates.size();
    if (row.k == 0) throw ArgumentError("build_report: condition " + std::to_string(r.condition_id) + " has no candidates");
    double se = 0.0, ae = 0.0;
    for (double v : r.ld) {
      se += (v - r.target) * (v - r.target);
      ae += std::abs(v - r.target);
      all_pred.push_back(v);
      all_target.push_back(r.target);
    }
    row.rmse = std::sqrt(se / static_cast<double>(row.k));
    row.mae = ae / static_cast<double>(row.k);
    row.best_abs_error = std::abs(r.ld[r.best] - r.target);
    if (row.k >= 2) {
      const auto d = diversity(param_z.normalize(invert::to_rows(r.candidates)));
      row.mpd = d.mpd;
      row.mindist = d.mindist;
    }
    if (truth != nullptr) {
      std::size_t hits = 0;
      for (const auto& g : r.candidates) hits += mre(g, (*truth)[c], *ranges) <= threshold;
      row.recovery_fraction = static_cast<double>(hits) / static_cast<double>(row.k);
      row.recovered = hits > 0;
      sets.push_back(r.candidates);
    }
    rmse.push_back(row.rmse);
    mae.push_back(row.mae);
    best.push_back(row.best_abs_error);
    mpd.push_back(row.mpd);
    mind.push_back(row.mindist);
    rep.rows.push_back(row);
  }
  rep.r2_global = r2_global(all_pred, all_target);
  rep.rmse = mean_std(rmse);
  rep.mae = mean_std(mae);
  rep.best_abs_error = mean_std(best);
  rep.mpd = mean_std(mpd);
  rep.mindist = mean_std(mind);
  if (truth != nullptr) rep.recovery = recovery_stats(sets, *truth, *ranges, threshold);
  return rep;
}

}  // namespace bwb::eval
