#pragma once

// Checkpoint container.
//
//   BWBCKPT <version>
//   kind <ld|film|cdm>
//   endian little
//   meta <key> <value...>          (floats in shortest round-trip form)
//   param <name> <rows> <cols>
//   data <bytes> <fnv1a of header text above + payload>
//   <payload: parameter buffers, row-major float64, little-endian>
//
// Loading checks version, kind, parameter names and shapes against the
// architecture rebuilt from the metadata, then payload size and checksum.

#include <bit>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bwb/diffusion.hpp"
#include "bwb/io/text.hpp"
#include "bwb/surrogate/film.hpp"
#include "bwb/surrogate/ld.hpp"

namespace bwb::io {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> meta;
  nn::ParamSet params;

  void put(const std::string& k, std::string v) { meta.emplace_back(k, std::move(v)); }
  void put(const std::string& k, double v) { put(k, fmt_shortest(v)); }
  void put_int(const std::string& k, long long v) { put(k, std::to_string(v)); }
  void put(const std::string& k, const nn::RowVector& v) {
    std::string s = std::to_string(v.size());
    for (double x : v) s += ' ' + fmt_shortest(x);
    put(k, std::move(s));
  }

  const std::string& get(const std::string& k) const {
    for (const auto& [key, val] : meta) {
      if (key == k) return val;
    }
    throw SchemaError("checkpoint: missing metadata '" + k + "'");
  }
  double get_double(const std::string& k) const {
    double v = 0.0;
    if (!parse_double(get(k), v)) throw SchemaError("checkpoint: metadata '" + k + "' is not a number");
    return v;
  }
  long long get_int(const std::string& k) const {
    long long v = 0;
    if (!parse_int(get(k), v)) throw SchemaError("checkpoint: metadata '" + k + "' is not an integer");
    return v;
  }
  nn::RowVector get_vector(const std::string& k) const {
    const auto parts = split(get(k), ' ');
    long long n = 0;
    if (parts.empty() || !parse_int(parts[0], n) || n < 0 || static_cast<std::size_t>(n) + 1 != parts.size()) {
      throw SchemaError("checkpoint: metadata '" + k + "' is not a counted vector");
    }
    nn::RowVector v(n);
    for (long long i = 0; i < n; ++i) {
      if (!parse_double(parts[static_cast<std::size_t>(i + 1)], v(i))) {
        throw SchemaError("checkpoint: metadata '" + k + "' entry " + std::to_string(i) + " is not a number");
      }
    }
    return v;
  }
};

namespace detail {

inline void append_le(std::string& out, double v) {
  auto u = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) {
    out += static_cast<char>(u & 0xff);
    u >>= 8;
  }
}

inline double read_le(const char* p) {
  std::uint64_t u = 0;
  for (int b = 7; b >= 0; --b) u = (u << 8) | static_cast<unsigned char>(p[b]);
  return std::bit_cast<double>(u);
}

}  // namespace detail

inline std::string serialize(const Checkpoint& c) {
  std::string head = "BWBCKPT " + std::to_string(kCheckpointVersion) + "\nkind " + c.kind + "\nendian little\n";
  for (const auto& [k, v] : c.meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ArgumentError("checkpoint: metadata key/value may not contain newlines or key spaces: " + k);
    }
    head += "meta " + k + ' ' + v + '\n';
  }
  std::string payload;
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const auto& m = c.params[i];
    head += "param " + c.params.name(i) + ' ' + std::to_string(m.rows()) + ' ' + std::to_string(m.cols()) + '\n';
    for (Eigen::Index k = 0; k < m.size(); ++k) detail::append_le(payload, m.data()[k]);
  }
  const auto sum = fnv1a(payload, fnv1a(head));
  return head + "data " + std::to_string(payload.size()) + ' ' + hex64(sum) + '\n' + payload;
}

struct ParamShape {
  std::string name;
  Eigen::Index rows = 0, cols = 0;
};

/// Parses the container; `expected` (from the architecture) is checked before the payload.
inline Checkpoint deserialize(std::string_view bytes, const std::string& kind,
                              const std::function<std::vector<ParamShape>(const Checkpoint&)>& expected) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string_view {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw IntegrityError("checkpoint: truncated header");
    auto s = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return s;
  };
  const auto magic = split(next_line(), ' ');
  if (magic.size() != 2 || magic[0] != "BWBCKPT") throw IntegrityError("checkpoint: not a checkpoint file");
  long long version = 0;
  if (!parse_int(magic[1], version) || version != kCheckpointVersion) {
    throw SchemaError("checkpoint: unsupported version '" + std::string(magic[1]) + "' (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  std::vector<ParamShape> shapes;
  std::size_t payload_size = 0;
  std::string checksum;
  std::size_t head_end = 0;
  for (;;) {
    const auto line_start = pos;
    const auto line = next_line();
    const auto sp = line.find(' ');
    const auto tag = line.substr(0, sp);
    const auto rest = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
    if (tag == "kind") {
      c.kind = std::string(rest);
    } else if (tag == "endian") {
      if (rest != "little") throw SchemaError("checkpoint: unsupported byte order '" + std::string(rest) + "'");
    } else if (tag == "meta") {
      const auto ks = rest.find(' ');
      c.meta.emplace_back(std::string(rest.substr(0, ks)),
                          ks == std::string_view::npos ? std::string() : std::string(rest.substr(ks + 1)));
    } else if (tag == "param") {
      const auto f = split(rest, ' ');
      long long r = 0, k = 0;
      if (f.size() != 3 || !parse_int(f[1], r) || !parse_int(f[2], k) || r < 0 || k < 0) {
        throw IntegrityError("checkpoint: malformed param line '" + std::string(line) + "'");
      }
      shapes.push_back({std::string(f[0]), r, k});
    } else if (tag == "data") {
      const auto f = split(rest, ' ');
      long long n = 0;
      if (f.size() != 2 || !parse_int(f[0], n) || n < 0) throw IntegrityError("checkpoint: malformed data line");
      payload_size = static_cast<std::size_t>(n);
      checksum = std::string(f[1]);
      head_end = line_start;
      break;
    } else {
      throw IntegrityError("checkpoint: unknown header line '" + std::string(line) + "'");
    }
  }
  if (c.kind != kind) throw SchemaError("checkpoint: expected kind '" + kind + "', found '" + c.kind + "'");

  const auto want = expected(c);
  if (want.size() != shapes.size()) {
    throw SchemaError("checkpoint: expected " + std::to_string(want.size()) + " parameter buffers, found " +
                      std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i].name != shapes[i].name) {
      throw SchemaError("checkpoint: parameter " + std::to_string(i) + " expected '" + want[i].name + "' found '" +
                        shapes[i].name + "'");
    }
    if (want[i].rows != shapes[i].rows || want[i].cols != shapes[i].cols) {
      throw SchemaError("checkpoint: parameter '" + want[i].name + "' expected (" + std::to_string(want[i].rows) + "x" +
                        std::to_string(want[i].cols) + ") found (" + std::to_string(shapes[i].rows) + "x" +
                        std::to_string(shapes[i].cols) + ")");
    }
  }
  std::size_t need = 0;
  for (const auto& s : shapes) need += static_cast<std::size_t>(s.rows * s.cols) * 8;
  if (need != payload_size) throw IntegrityError("checkpoint: payload size does not match parameter shapes");
  if (bytes.size() - pos != payload_size) {
    throw IntegrityError("checkpoint: payload is " + std::to_string(bytes.size() - pos) + " bytes, header declares " +
                         std::to_string(payload_size));
  }
  const auto payload = bytes.substr(pos);
  if (hex64(fnv1a(payload, fnv1a(bytes.substr(0, head_end)))) != checksum) {
    throw IntegrityError("checkpoint: checksum mismatch");
  }
  const char* p = payload.data();
  for (const auto& s : shapes) {
    nn::Matrix m(s.rows, s.cols);
    for (Eigen::Index k = 0; k < m.size(); ++k, p += 8) m.data()[k] = detail::read_le(p);
    c.params.add(s.name, std::move(m));
  }
  return c;
}

inline std::vector<ParamShape> shapes_of(const nn::ParamSet& ps) {
  std::vector<ParamShape> out;
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back({ps.name(i), ps[i].rows(), ps[i].cols()});
  return out;
}

namespace detail {

inline void put_standardizer(Checkpoint& c, const std::string& prefix, const Standardizer& s) {
  c.put(prefix + ".mean", s.mean);
  c.put(prefix + ".std", s.std);
  nn::RowVector f(static_cast<Eigen::Index>(s.flagged.size()));
  for (std::size_t i = 0; i < s.flagged.size(); ++i) f(static_cast<Eigen::Index>(i)) = s.flagged[i] ? 1.0 : 0.0;
  c.put(prefix + ".flagged", f);
}

inline Standardizer get_standardizer(const Checkpoint& c, const std::string& prefix, Eigen::Index width) {
  Standardizer s;
  s.mean = c.get_vector(prefix + ".mean");
  s.std = c.get_vector(prefix + ".std");
  const auto f = c.get_vector(prefix + ".flagged");
  if (s.mean.size() != width || s.std.size() != width || f.size() != width) {
    throw SchemaError("checkpoint: scaler '" + prefix + "' expected width " + std::to_string(width));
  }
  for (double x : s.std) {
    if (!(x > 0.0)) throw SchemaError("checkpoint: scaler '" + prefix + "' has non-positive std");
  }
  for (double x : f) s.flagged.push_back(x != 0.0);
  return s;
}

template <std::size_t N>
inline std::string join_names(const std::array<std::string_view, N>& names) {
  std::string s;
  for (auto n : names) s += (s.empty() ? "" : ",") + std::string(n);
  return s;
}

inline std::string widths_text(const std::vector<Eigen::Index>& w) {
  std::string s;
  for (auto x : w) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

inline std::vector<Eigen::Index> parse_widths(const std::string& s) {
  std::vector<Eigen::Index> out;
  for (auto part : split(s, ',')) {
    long long v = 0;
    if (!parse_int(part, v) || v <= 0) throw SchemaError("checkpoint: bad width list '" + s + "'");
    out.push_back(static_cast<Eigen::Index>(v));
  }
  return out;
}

inline void require_order(const Checkpoint& c, const std::string& key, const std::string& expected) {
  if (c.get(key) != expected) {
    throw SchemaError("checkpoint: " + key + " is '" + c.get(key) + "', this build expects '" + expected + "'");
  }
}

inline void save_bytes(const std::filesystem::path& path, const Checkpoint& c) { write_file(path, serialize(c)); }

inline std::string load_bytes(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw SchemaError("checkpoint not found: expected " + path.string());
  return read_file(path);
}

}  // namespace detail

// ---- L/D surrogate ---------------------------------------------------------------

inline std::string ld_feature_order() {
  return "B1,B2,B3,C2,C3,C4,S1,S3,X3,alt_kft,log10_Re,M_inf,alpha";
}

inline std::string serialize_ld(const surrogate::LdSurrogate& m) {
  Checkpoint c;
  c.kind = "ld";
  c.put("hidden", detail::widths_text(m.config.hidden));
  c.put_int("seed", static_cast<long long>(m.seed));
  c.put("feature_order", ld_feature_order());
  detail::put_standardizer(c, "inputs", m.inputs);
  c.put("out_mean", m.out_mean);
  c.put("out_std", m.out_std);
  c.params = m.params;
  return serialize(c);
}

inline surrogate::LdSurrogate deserialize_ld(std::string_view bytes) {
  auto arch = [](const Checkpoint& c) {
    surrogate::LdConfig cfg;
    cfg.hidden = detail::parse_widths(c.get("hidden"));
    return shapes_of(surrogate::LdSurrogate::create(cfg, 0).params);
  };
  const Checkpoint c = deserialize(bytes, "ld", arch);
  detail::require_order(c, "feature_order", ld_feature_order());
  surrogate::LdSurrogate m;
  m.config.hidden = detail::parse_widths(c.get("hidden"));
  m.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  m.inputs = detail::get_standardizer(c, "inputs", surrogate::kLdFeatures);
  m.out_mean = c.get_double("out_mean");
  m.out_std = c.get_double("out_std");
  m.params = c.params;
  m.relink();
  return m;
}

inline void save_ld(const std::filesystem::path& p, const surrogate::LdSurrogate& m) { write_file(p, serialize_ld(m)); }
inline surrogate::LdSurrogate load_ld(const std::filesystem::path& p) { return deserialize_ld(detail::load_bytes(p)); }

// ---- FiLM field surrogate -----------------------------------------------------------

struct FieldSurrogate {
  surrogate::FilmModel model;
  surrogate::FieldScaler scaler;
};

inline std::string serialize_film(const surrogate::FilmModel& m, const surrogate::FieldScaler& s) {
  Checkpoint c;
  c.kind = "film";
  c.put_int("width", m.config.width);
  c.put_int("hyper_width", m.config.hyper_width);
  c.put_int("modulated_layers", static_cast<long long>(m.config.modulated_layers));
  c.put_int("plain_layers", static_cast<long long>(m.config.plain_layers));
  c.put_int("seed", static_cast<long long>(m.seed));
  c.put("conditioning_order", detail::join_names(surrogate::kFilmConditionOrder));
  c.put("output_order", "Cp,Cfx,Cfz");
  detail::put_standardizer(c, "outputs", s.outputs);
  detail::put_standardizer(c, "condition", s.condition);
  c.params = m.params;
  return serialize(c);
}

inline FieldSurrogate deserialize_film(std::string_view bytes) {
  auto config = [](const Checkpoint& c) {
    surrogate::FilmConfig cfg;
    cfg.width = static_cast<Eigen::Index>(c.get_int("width"));
    cfg.hyper_width = static_cast<Eigen::Index>(c.get_int("hyper_width"));
    cfg.modulated_layers = static_cast<std::size_t>(c.get_int("modulated_layers"));
    cfg.plain_layers = static_cast<std::size_t>(c.get_int("plain_layers"));
    if (cfg.width <= 0 || cfg.hyper_width <= 0) throw SchemaError("checkpoint: non-positive FiLM width");
    return cfg;
  };
  const Checkpoint c =
      deserialize(bytes, "film", [&](const Checkpoint& h) { return shapes_of(surrogate::FilmModel::create(config(h), 0).params); });
  detail::require_order(c, "conditioning_order", detail::join_names(surrogate::kFilmConditionOrder));
  FieldSurrogate f;
  f.model.config = config(c);
  f.model.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  f.model.params = c.params;
  f.model.relink();
  f.scaler.outputs = detail::get_standardizer(c, "outputs", surrogate::kFieldChannels);
  f.scaler.condition = detail::get_standardizer(c, "condition", surrogate::kFilmConditionWidth);
  return f;
}

inline void save_film(const std::filesystem::path& p, const surrogate::FilmModel& m, const surrogate::FieldScaler& s) {
  write_file(p, serialize_film(m, s));
}
inline FieldSurrogate load_film(const std::filesystem::path& p) { return deserialize_film(detail::load_bytes(p)); }

// ---- diffusion model ------------------------------------------------------------------

inline std::string cdm_condition_order() { return "alt_kft,log10_Re,M_inf,alpha,LD_target"; }

inline std::string serialize_cdm(const diffusion::DenoiserModel& m) {
  if (!m.fitted()) throw StateError("serialize_cdm: scalers not fitted");
  Checkpoint c;
  c.kind = "cdm";
  c.put_int("width", m.config.width);
  c.put_int("depth", static_cast<long long>(m.config.depth));
  c.put_int("time_dim", m.config.time_dim);
  c.put_int("cond_dim", m.config.cond_dim);
  c.put_int("T", m.config.T);
  c.put("schedule_s", m.config.schedule_s);
  c.put_int("clamp_x0", m.config.clamp_x0 ? 1 : 0);
  c.put_int("seed", static_cast<long long>(m.seed));
  c.put("condition_order", cdm_condition_order());
  c.put("geom.lo", m.geom_scaler.lo);
  c.put("geom.hi", m.geom_scaler.hi);
  detail::put_standardizer(c, "condition", m.cond_scaler);
  nn::RowVector lo(diffusion::kGeomDim), hi(diffusion::kGeomDim);
  for (std::size_t j = 0; j < geom::kNumParams; ++j) {
    lo(static_cast<Eigen::Index>(j)) = m.box.lo[j];
    hi(static_cast<Eigen::Index>(j)) = m.box.hi[j];
  }
  c.put("box.lo", lo);
  c.put("box.hi", hi);
  c.params = m.params;
  return serialize(c);
}

inline diffusion::DenoiserModel deserialize_cdm(std::string_view bytes) {
  auto config = [](const Checkpoint& c) {
    diffusion::DenoiserConfig cfg;
    cfg.width = static_cast<Eigen::Index>(c.get_int("width"));
    cfg.depth = static_cast<std::size_t>(c.get_int("depth"));
    cfg.time_dim = static_cast<Eigen::Index>(c.get_int("time_dim"));
    cfg.cond_dim = static_cast<Eigen::Index>(c.get_int("cond_dim"));
    cfg.T = static_cast<int>(c.get_int("T"));
    cfg.schedule_s = c.get_double("schedule_s");
    cfg.clamp_x0 = c.get_int("clamp_x0") != 0;
    if (cfg.width <= 0 || cfg.time_dim <= 0 || cfg.cond_dim <= 0 || cfg.T < 2) {
      throw SchemaError("checkpoint: invalid denoiser descriptor");
    }
    return cfg;
  };
  const Checkpoint c = deserialize(
      bytes, "cdm", [&](const Checkpoint& h) { return shapes_of(diffusion::DenoiserModel::create(config(h), 0).params); });
  detail::require_order(c, "condition_order", cdm_condition_order());
  diffusion::DenoiserModel m;
  m.config = config(c);
  m.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  m.params = c.params;
  m.geom_scaler = MinMaxScaler::from_bounds(c.get_vector("geom.lo"), c.get_vector("geom.hi"));
  m.cond_scaler = detail::get_standardizer(c, "condition", diffusion::kConditionDim);
  const auto lo = c.get_vector("box.lo");
  const auto hi = c.get_vector("box.hi");
  if (lo.size() != diffusion::kGeomDim || hi.size() != diffusion::kGeomDim || m.geom_scaler.lo.size() != diffusion::kGeomDim) {
    throw SchemaError("checkpoint: box/geometry scaler must be 9 wide");
  }
  for (std::size_t j = 0; j < geom::kNumParams; ++j) {
    m.box.lo[j] = lo(static_cast<Eigen::Index>(j));
    m.box.hi[j] = hi(static_cast<Eigen::Index>(j));
  }
  m.relink();
  return m;
}

inline void save_cdm(const std::filesystem::path& p, const diffusion::DenoiserModel& m) { write_file(p, serialize_cdm(m)); }
inline diffusion::DenoiserModel load_cdm(const std::filesystem::path& p) { return deserialize_cdm(detail::load_bytes(p)); }

}  // namespace bwb::io
