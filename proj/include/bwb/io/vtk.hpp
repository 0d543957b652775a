#pragma once

// Legacy ASCII VTK polydata, restricted to what surface-field files use:
// POINTS, POLYGONS, and POINT_DATA with SCALARS Cp/Cfx/Cfy/Cfz and optional NORMALS.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bwb/geom.hpp"
#include "bwb/io/text.hpp"

namespace bwb::io {

struct SurfaceFile {
  std::string title;
  geom::SurfacePointCloud cloud;
  std::vector<std::vector<std::size_t>> polygons;
  bool normals_from_file = false;
};

namespace detail {

class VtkLexer {
 public:
  explicit VtkLexer(std::string_view text) : text_(text) {}

  std::size_t offset() const { return pos_; }

  /// Next line verbatim (used for the version and title lines).
  std::string_view line() {
    const auto start = pos_;
    const auto nl = text_.find('\n', pos_);
    const auto end = nl == std::string_view::npos ? text_.size() : nl;
    pos_ = nl == std::string_view::npos ? text_.size() : nl + 1;
    auto s = text_.substr(start, end - start);
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
  }

  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }

  /// Returns the token and records its byte offset in `at`.
  std::string_view token(std::size_t& at) {
    skip_space();
    at = pos_;
    const auto start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

[[noreturn]] inline void vtk_fail(const std::string& what, std::string_view tok, std::size_t at) {
  throw FormatError("vtk: " + what + " (token '" + std::string(tok) + "' at byte " + std::to_string(at) + ")");
}

}  // namespace detail

/// Area-weighted vertex normals from polygon fans. Orientation follows the polygon winding.
inline std::vector<geom::Vec3> vertex_normals(const std::vector<geom::Vec3>& pts,
                                              const std::vector<std::vector<std::size_t>>& polys) {
  std::vector<geom::Vec3> n(pts.size(), geom::Vec3{0.0, 0.0, 0.0});
  for (const auto& poly : polys) {
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      const auto& a = pts[poly[0]];
      const auto& b = pts[poly[k]];
      const auto& c = pts[poly[k + 1]];
      // |cross| is twice the triangle area, so this weights by area.
      const auto f = geom::cross({b.x - a.x, b.y - a.y, b.z - a.z}, {c.x - a.x, c.y - a.y, c.z - a.z});
      for (auto v : {poly[0], poly[k], poly[k + 1]}) {
        n[v].x += f.x;
        n[v].y += f.y;
        n[v].z += f.z;
      }
    }
  }
  for (auto& v : n) {
    const double len = geom::norm(v);
    if (len > 0.0) v = {v.x / len, v.y / len, v.z / len};
  }
  return n;
}

inline SurfaceFile parse_vtk(std::string_view text) {
  using detail::vtk_fail;
  detail::VtkLexer lx(text);
  SurfaceFile f;
  std::size_t at = 0;

  const auto version = lx.line();
  if (version.rfind("# vtk DataFile Version", 0) != 0) vtk_fail("missing '# vtk DataFile Version' header", version, 0);
  f.title = std::string(lx.line());
  const auto enc = lx.token(at);
  if (enc == "BINARY") vtk_fail("binary files are not supported", enc, at);
  if (enc != "ASCII") vtk_fail("expected ASCII", enc, at);
  if (auto t = lx.token(at); t != "DATASET") vtk_fail("expected DATASET", t, at);
  if (auto t = lx.token(at); t != "POLYDATA") vtk_fail("only POLYDATA datasets are supported", t, at);

  auto read_count = [&](const char* what) {
    const auto t = lx.token(at);
    long long v = 0;
    if (!parse_int(t, v) || v < 0) vtk_fail(std::string("expected a count for ") + what, t, at);
    return static_cast<std::size_t>(v);
  };
  auto read_type = [&]() {
    const auto t = lx.token(at);
    if (t != "float" && t != "double") vtk_fail("unsupported data type", t, at);
  };
  auto read_values = [&](const std::string& block, std::size_t count) {
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto t = lx.token(at);
      if (t.empty()) {
        vtk_fail(block + " block truncated: expected " + std::to_string(count) + " values, found " + std::to_string(i),
                 t, at);
      }
      if (!parse_double(t, v[i])) vtk_fail(block + ": not a finite number", t, at);
    }
    return v;
  };

  std::size_t npoints = 0;
  bool have_points = false, have_point_data = false;
  std::vector<geom::Vec3> normals;
  while (!lx.at_end()) {
    const auto kw = lx.token(at);
    if (kw == "POINTS") {
      npoints = read_count("POINTS");
      read_type();
      const auto v = read_values("POINTS (" + std::to_string(npoints) + " points)", 3 * npoints);
      f.cloud.points.resize(npoints);
      for (std::size_t i = 0; i < npoints; ++i) f.cloud.points[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
      have_points = true;
    } else if (kw == "POLYGONS") {
      if (!have_points) vtk_fail("POLYGONS before POINTS", kw, at);
      const auto n = read_count("POLYGONS");
      const auto size = read_count("POLYGONS size");
      std::size_t consumed = 0;
      for (std::size_t p = 0; p < n; ++p) {
        const auto t = lx.token(at);
        long long m = 0;
        if (t.empty()) vtk_fail("POLYGONS block truncated: expected " + std::to_string(n) + " polygons", t, at);
        if (!parse_int(t, m) || m < 3) vtk_fail("polygon vertex count must be >= 3", t, at);
        std::vector<std::size_t> poly;
        for (long long k = 0; k < m; ++k) {
          const auto ti = lx.token(at);
          long long idx = 0;
          if (!parse_int(ti, idx) || idx < 0 || static_cast<std::size_t>(idx) >= npoints) {
            vtk_fail("polygon index out of range [0, " + std::to_string(npoints) + ")", ti, at);
          }
          poly.push_back(static_cast<std::size_t>(idx));
        }
        consumed += 1 + static_cast<std::size_t>(m);
        f.polygons.push_back(std::move(poly));
      }
      if (consumed != size) vtk_fail("POLYGONS size field " + std::to_string(size) + " != " + std::to_string(consumed), kw, at);
    } else if (kw == "POINT_DATA") {
      const auto n = read_count("POINT_DATA");
      if (!have_points || n != npoints) {
        vtk_fail("POINT_DATA count " + std::to_string(n) + " does not match " + std::to_string(npoints) + " points", kw, at);
      }
      have_point_data = true;
    } else if (kw == "SCALARS") {
      if (!have_point_data) vtk_fail("SCALARS outside POINT_DATA", kw, at);
      std::size_t name_at = 0;
      const auto name = lx.token(name_at);
      read_type();
      // Optional component count, then optional LOOKUP_TABLE.
      std::size_t save_at = 0;
      auto next = lx.token(save_at);
      long long comps = 1;
      if (parse_int(next, comps)) {
        if (comps != 1) vtk_fail("only single-component scalars are supported", next, save_at);
        next = lx.token(save_at);
      }
      if (next != "LOOKUP_TABLE") vtk_fail("expected LOOKUP_TABLE", next, save_at);
      lx.token(at);  // table name
      std::vector<double>* dst = nullptr;
      if (name == "Cp") dst = &f.cloud.cp;
      else if (name == "Cfx") dst = &f.cloud.cfx;
      else if (name == "Cfy") dst = &f.cloud.cfy;
      else if (name == "Cfz") dst = &f.cloud.cfz;
      else vtk_fail("unknown array name (expected Cp, Cfx, Cfy or Cfz)", name, name_at);
      *dst = read_values("SCALARS " + std::string(name), npoints);
    } else if (kw == "NORMALS") {
      if (!have_point_data) vtk_fail("NORMALS outside POINT_DATA", kw, at);
      lx.token(at);  // array name
      read_type();
      const auto v = read_values("NORMALS", 3 * npoints);
      normals.resize(npoints);
      for (std::size_t i = 0; i < npoints; ++i) normals[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
    } else {
      vtk_fail("unsupported keyword", kw, at);
    }
  }
  if (!have_points) vtk_fail("no POINTS block", "", text.size());
  if (!normals.empty()) {
    f.cloud.normals = std::move(normals);
    f.normals_from_file = true;
  } else if (!f.polygons.empty()) {
    f.cloud.normals = vertex_normals(f.cloud.points, f.polygons);
  } else if (npoints > 0) {
    vtk_fail("no NORMALS and no POLYGONS to derive them from", "", text.size());
  }
  return f;
}

inline SurfaceFile read_surface_fields(const std::filesystem::path& path) {
  try {
    return parse_vtk(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline std::string format_vtk(const SurfaceFile& f) {
  const auto& c = f.cloud;
  const std::size_t n = c.size();
  std::string out = "# vtk DataFile Version 3.0\n";
  out += (f.title.empty() ? std::string("bwb surface") : f.title) + "\nASCII\nDATASET POLYDATA\n";
  out += "POINTS " + std::to_string(n) + " double\n";
  for (const auto& p : c.points) out += fmt17(p.x) + ' ' + fmt17(p.y) + ' ' + fmt17(p.z) + '\n';
  if (!f.polygons.empty()) {
    std::size_t size = 0;
    for (const auto& p : f.polygons) size += 1 + p.size();
    out += "POLYGONS " + std::to_string(f.polygons.size()) + ' ' + std::to_string(size) + '\n';
    for (const auto& p : f.polygons) {
      out += std::to_string(p.size());
      for (auto i : p) out += ' ' + std::to_string(i);
      out += '\n';
    }
  }
  out += "POINT_DATA " + std::to_string(n) + '\n';
  auto scalars = [&](const char* name, const std::vector<double>& v) {
    if (v.empty()) return;
    if (v.size() != n) throw ArgumentError(std::string("format_vtk: ") + name + " length does not match points");
    out += std::string("SCALARS ") + name + " double 1\nLOOKUP_TABLE default\n";
    for (double x : v) out += fmt17(x) + '\n';
  };
  scalars("Cp", c.cp);
  scalars("Cfx", c.cfx);
  scalars("Cfy", c.cfy);
  scalars("Cfz", c.cfz);
  if (!c.normals.empty()) {
    if (c.normals.size() != n) throw ArgumentError("format_vtk: normals length does not match points");
    out += "NORMALS Normals double\n";
    for (const auto& v : c.normals) out += fmt17(v.x) + ' ' + fmt17(v.y) + ' ' + fmt17(v.z) + '\n';
  }
  return out;
}

inline void write_surface_fields(const std::filesystem::path& path, const SurfaceFile& f) {
  write_file(path, format_vtk(f));
}

}  // namespace bwb::io
