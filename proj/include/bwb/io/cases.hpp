#pragma once

// Case tables: one row per (planform, flight condition) with integrated
// coefficients. Comma separated, header required, column order free.

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bwb/geom.hpp"
#include "bwb/io/text.hpp"

namespace bwb::io {

struct CaseRecord {
  std::string id;
  geom::PlanformParams planform;
  double altitude_kft = 0.0;
  double mach = 0.0;
  double centerline_length = 1.0;
  double alpha_deg = 0.0;
  double cl = 0.0;
  double cd = 0.0;
  double cm = 0.0;
  double ld = 0.0;
  std::string field_file;  // optional
  bool out_of_box = false;

  geom::FlightCondition condition() const {
    return geom::make_condition(altitude_kft, mach, centerline_length, alpha_deg);
  }
};

inline constexpr std::array<std::string_view, 18> kCaseColumns = {
    "case_id", "B1", "B2", "B3", "C2", "C3", "C4", "S1", "S3", "X3",
    "alt_kft", "M_inf", "C1", "alpha", "CL", "CD", "CM", "LD"};
inline constexpr std::string_view kFieldFileColumn = "field_file";

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct CaseTable {
  std::vector<CaseRecord> records;
  std::vector<RowError> errors;
};

/// Maps source column names onto canonical ones. File lines: `source = canonical`.
using ColumnMapping = std::map<std::string, std::string, std::less<>>;

inline ColumnMapping read_column_mapping(const std::filesystem::path& path) {
  ColumnMapping m;
  const std::string text = read_file(path);
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": expected 'source = canonical'");
    }
    const auto dst = std::string(trim(line.substr(eq + 1)));
    if (std::find(kCaseColumns.begin(), kCaseColumns.end(), dst) == kCaseColumns.end() && dst != kFieldFileColumn) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": unknown canonical column '" + dst + "'");
    }
    m[std::string(trim(line.substr(0, eq)))] = dst;
  }
  return m;
}

inline constexpr double kLdTolerance = 1e-9;

/// Parses a case table. Rows that fail validation land in `errors` with their
/// line numbers; out-of-box planforms are kept and flagged.
inline CaseTable parse_cases(std::string_view text, const ColumnMapping& mapping = {},
                             const geom::ParamBox& box = {}) {
  auto lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw SchemaError("case table: missing header row");

  std::map<std::string, std::size_t, std::less<>> col;
  const auto header = split(lines[0], ',');
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name(trim(header[i]));
    if (name.size() >= 3 && name.compare(0, 3, "\xEF\xBB\xBF") == 0) name.erase(0, 3);
    if (auto it = mapping.find(name); it != mapping.end()) name = it->second;
    if (!col.emplace(name, i).second) throw SchemaError("case table: duplicate column '" + name + "'");
  }
  std::vector<std::string> missing;
  for (auto c : kCaseColumns) {
    if (!col.count(c)) missing.emplace_back(c);
  }
  if (!missing.empty()) {
    std::string msg = "case table: missing required column(s):";
    for (const auto& m : missing) msg += " " + m;
    throw SchemaError(msg);
  }
  const auto field_col = col.find(kFieldFileColumn);

  CaseTable table;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line_no = li + 1;
    if (trim(lines[li]).empty()) continue;
    const auto cells = split(lines[li], ',');
    if (cells.size() != header.size()) {
      table.errors.push_back({line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                           std::to_string(cells.size())});
      continue;
    }
    auto num = [&](std::string_view name, double& out) {
      const auto cell = cells[col.find(name)->second];
      if (!parse_double(cell, out)) {
        throw RowError{line_no, "column " + std::string(name) + ": '" + std::string(trim(cell)) + "' is not a finite number"};
      }
    };
    try {
      CaseRecord r;
      r.id = std::string(trim(cells[col.find("case_id")->second]));
      if (r.id.empty()) throw RowError{line_no, "empty case_id"};
      std::array<double, geom::kNumParams> p{};
      for (std::size_t j = 0; j < geom::kNumParams; ++j) num(kCaseColumns[1 + j], p[j]);
      r.planform = geom::PlanformParams::from_array(p);
      num("alt_kft", r.altitude_kft);
      num("M_inf", r.mach);
      num("C1", r.centerline_length);
      num("alpha", r.alpha_deg);
      num("CL", r.cl);
      num("CD", r.cd);
      num("CM", r.cm);
      num("LD", r.ld);
      if (r.cd == 0.0) throw RowError{line_no, "division domain: CD = 0, L/D = CL/CD undefined"};
      if (!(r.centerline_length > 0.0)) throw RowError{line_no, "C1 must be positive"};
      const double ld = r.cl / r.cd;
      if (std::abs(ld - r.ld) > kLdTolerance * std::max(1.0, std::abs(ld))) {
        throw RowError{line_no, "LD " + fmt17(r.ld) + " disagrees with CL/CD = " + fmt17(ld)};
      }
      if (field_col != col.end()) r.field_file = std::string(trim(cells[field_col->second]));
      r.out_of_box = !box.contains(r.planform);
      table.records.push_back(std::move(r));
    } catch (const RowError& e) {
      table.errors.push_back(e);
    }
  }
  return table;
}

inline CaseTable read_cases(const std::filesystem::path& path, const ColumnMapping& mapping = {},
                            const geom::ParamBox& box = {}) {
  try {
    return parse_cases(read_file(path), mapping, box);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

/// Canonical form: fixed column order, 17 significant digits.
inline std::string format_cases(const std::vector<CaseRecord>& cases) {
  std::string out;
  for (std::size_t i = 0; i < kCaseColumns.size(); ++i) {
    if (i) out += ',';
    out += kCaseColumns[i];
  }
  out += ',';
  out += kFieldFileColumn;
  out += '\n';
  for (const auto& r : cases) {
    if (r.id.find(',') != std::string::npos || r.field_file.find(',') != std::string::npos) {
      throw ArgumentError("case " + r.id + ": identifiers may not contain commas");
    }
    out += r.id;
    for (double v : r.planform.to_array()) out += ',' + fmt17(v);
    for (double v : {r.altitude_kft, r.mach, r.centerline_length, r.alpha_deg, r.cl, r.cd, r.cm, r.ld}) {
      out += ',' + fmt17(v);
    }
    out += ',' + r.field_file + '\n';
  }
  return out;
}

inline void write_cases(const std::filesystem::path& path, const std::vector<CaseRecord>& cases) {
  write_file(path, format_cases(cases));
}

}  // namespace bwb::io
