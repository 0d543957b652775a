#pragma once

// Inversion results, per-method metrics and the method comparison table.
//
// results CSV     condition_id,method,target,candidate,B1..X3,LD,best,dropped
// timing CSV      condition_id,seconds (kept apart so results stay byte-stable)
// metrics file    key = value, no timings
// conditions CSV  condition_id,target,K,rmse,mae,best_abs_error,mpd,mindist,recovery_fraction,recovered
// report CSV      one row per method in the order cdm, opt, hybrid

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bwb/eval.hpp"
#include "bwb/invert.hpp"
#include "bwb/io/manifest.hpp"
#include "bwb/io/text.hpp"

namespace bwb::io {

inline constexpr std::string_view kNotApplicable = "n/a";

namespace detail {

inline std::string opt_text(const std::optional<double>& v) { return v ? fmt17(*v) : std::string(kNotApplicable); }

inline std::vector<std::vector<std::string_view>> csv_body(std::string_view text, const std::vector<std::string>& header,
                                                          const std::string& origin) {
  auto lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw SchemaError(origin + ": missing header row");
  const auto got = split(lines[0], ',');
  bool ok = got.size() == header.size();
  for (std::size_t i = 0; ok && i < got.size(); ++i) ok = trim(got[i]) == header[i];
  if (!ok) throw SchemaError(origin + ": unexpected header '" + std::string(lines[0]) + "'");
  std::vector<std::vector<std::string_view>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split(lines[i], ',');
    if (cells.size() != header.size()) {
      throw FormatError(origin + ":" + std::to_string(i + 1) + ": expected " + std::to_string(header.size()) +
                        " fields, found " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline double cell_double(std::string_view s, const std::string& origin, std::size_t line, const char* col) {
  double v = 0.0;
  if (!parse_double(s, v)) {
    throw FormatError(origin + ":" + std::to_string(line) + ": column " + col + ": '" + std::string(s) +
                      "' is not a finite number");
  }
  return v;
}

inline std::size_t cell_index(std::string_view s, const std::string& origin, std::size_t line, const char* col) {
  long long v = 0;
  if (!parse_int(s, v) || v < 0) {
    throw FormatError(origin + ":" + std::to_string(line) + ": column " + col + ": '" + std::string(s) +
                      "' is not a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

}  // namespace detail

inline std::vector<std::string> results_header() {
  std::vector<std::string> h = {"condition_id", "method", "target", "candidate"};
  for (auto n : geom::kParamNames) h.emplace_back(n);
  h.insert(h.end(), {"LD", "best", "dropped"});
  return h;
}

inline std::string format_results(const std::vector<invert::InverseResult>& results) {
  std::string out = detail::join(results_header()) + '\n';
  for (const auto& r : results) {
    for (std::size_t k = 0; k < r.candidates.size(); ++k) {
      out += std::to_string(r.condition_id) + ',' + invert::method_name(r.method) + ',' + fmt17(r.target) + ',' +
             std::to_string(k);
      for (double v : r.candidates[k].to_array()) out += ',' + fmt17(v);
      out += ',' + fmt17(r.ld[k]) + ',' + (k == r.best ? "1" : "0") + ',' + std::to_string(r.dropped) + '\n';
    }
  }
  return out;
}

/// Groups rows by condition in file order. `best` is taken from the file.
inline std::vector<invert::InverseResult> parse_results(std::string_view text, const std::string& origin) {
  const auto header = results_header();
  std::vector<invert::InverseResult> out;
  std::size_t line = 1;
  for (const auto& c : detail::csv_body(text, header, origin)) {
    ++line;
    const auto id = detail::cell_index(c[0], origin, line, "condition_id");
    const auto method = invert::parse_method(std::string(trim(c[1])));
    const double target = detail::cell_double(c[2], origin, line, "target");
    const auto k = detail::cell_index(c[3], origin, line, "candidate");
    if (out.empty() || out.back().condition_id != id || out.back().method != method) {
      out.emplace_back();
      out.back().condition_id = id;
      out.back().method = method;
      out.back().target = target;
    }
    auto& r = out.back();
    if (k != r.candidates.size()) {
      throw FormatError(origin + ":" + std::to_string(line) + ": candidate index " + std::to_string(k) + ", expected " +
                        std::to_string(r.candidates.size()));
    }
    std::array<double, geom::kNumParams> p{};
    for (std::size_t j = 0; j < geom::kNumParams; ++j) {
      p[j] = detail::cell_double(c[4 + j], origin, line, header[4 + j].c_str());
    }
    r.candidates.push_back(geom::PlanformParams::from_array(p));
    r.ld.push_back(detail::cell_double(c[13], origin, line, "LD"));
    if (trim(c[14]) == "1") r.best = k;
    r.dropped = detail::cell_index(c[15], origin, line, "dropped");
  }
  return out;
}

inline std::vector<invert::InverseResult> read_results(const std::filesystem::path& p) {
  return parse_results(read_file(p), p.string());
}

inline std::string format_timing(const std::vector<invert::InverseResult>& results) {
  std::string out = "condition_id,seconds\n";
  for (const auto& r : results) out += std::to_string(r.condition_id) + ',' + fmt17(r.seconds) + '\n';
  return out;
}

inline std::vector<double> parse_timing(std::string_view text, const std::string& origin) {
  std::vector<double> secs;
  std::size_t line = 1;
  for (const auto& c : detail::csv_body(text, {"condition_id", "seconds"}, origin)) {
    secs.push_back(detail::cell_double(c[1], origin, ++line, "seconds"));
  }
  return secs;
}

// ---- metrics -------------------------------------------------------------------------

inline KeyValues metrics_key_values(const eval::MetricReport& r) {
  KeyValues kv;
  kv.set("method", r.method);
  kv.set_int("conditions", static_cast<long long>(r.rows.size()));
  std::size_t k = 0;
  for (const auto& row : r.rows) k += row.k;
  kv.set_int("candidates", static_cast<long long>(k));
  kv.set("r2_global", detail::opt_text(r.r2_global));
  auto ms = [&](const std::string& name, const eval::MeanStd& m) {
    kv.set(name + "_mean", m.mean);
    kv.set(name + "_std", m.std);
  };
  ms("rmse", r.rmse);
  ms("mae", r.mae);
  ms("best_abs_error", r.best_abs_error);
  ms("mpd", r.mpd);
  ms("mindist", r.mindist);
  kv.set("recovery_samples", detail::opt_text(r.recovery ? std::optional(r.recovery->sample_fraction) : std::nullopt));
  kv.set("recovery_conditions",
         detail::opt_text(r.recovery ? std::optional(r.recovery->condition_fraction) : std::nullopt));
  return kv;
}

inline std::string format_condition_table(const eval::MetricReport& r) {
  std::string out = "condition_id,target,K,rmse,mae,best_abs_error,mpd,mindist,recovery_fraction,recovered\n";
  for (const auto& row : r.rows) {
    out += std::to_string(row.condition_id) + ',' + fmt17(row.target) + ',' + std::to_string(row.k) + ',' +
           fmt17(row.rmse) + ',' + fmt17(row.mae) + ',' + fmt17(row.best_abs_error) + ',' + fmt17(row.mpd) + ',' +
           fmt17(row.mindist) + ',' + detail::opt_text(row.recovery_fraction) + ',' +
           (row.recovered ? (*row.recovered ? "1" : "0") : std::string(kNotApplicable)) + '\n';
  }
  return out;
}

// ---- method comparison table -------------------------------------------------------------

inline constexpr std::array<std::string_view, 3> kReportMethodOrder = {"cdm", "opt", "hybrid"};

struct ReportRow {
  KeyValues metrics;
  std::vector<double> seconds;  // per condition; empty when no timing file exists
};

inline std::vector<std::string> report_header() {
  return {"method",         "r2_global",     "rmse_mean",    "rmse_std",         "mae_mean",
          "mae_std",        "mpd_mean",      "mpd_std",      "mindist_mean",     "mindist_std",
          "best_abs_error_mean", "best_abs_error_std", "recovery_samples", "recovery_conditions",
          "seconds_mean",   "seconds_std"};
}

/// Rows are emitted in cdm, opt, hybrid order; methods absent from `rows` are skipped.
inline std::string format_report(const std::map<std::string, ReportRow, std::less<>>& rows) {
  const auto header = report_header();
  std::string out = detail::join(header) + '\n';
  for (auto method : kReportMethodOrder) {
    const auto it = rows.find(method);
    if (it == rows.end()) continue;
    const auto& kv = it->second.metrics;
    out += std::string(method);
    for (std::size_t i = 1; i + 2 < header.size(); ++i) out += ',' + kv.get(header[i]);
    if (it->second.seconds.empty()) {
      out += ',' + std::string(kNotApplicable) + ',' + std::string(kNotApplicable);
    } else {
      const auto t = eval::mean_std(it->second.seconds);
      out += ',' + fmt17(t.mean) + ',' + fmt17(t.std);
    }
    out += '\n';
  }
  return out;
}

}  // namespace bwb::io
