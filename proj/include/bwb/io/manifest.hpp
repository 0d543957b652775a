#pragma once

// Key = value text: config files, run manifests and metrics files share it.
// '#' starts a comment line; keys are unique; order is preserved on write.

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bwb/io/text.hpp"

namespace bwb::io {

struct KeyValues {
  std::vector<std::pair<std::string, std::string>> entries;

  void set(const std::string& k, std::string v) {
    for (auto& [key, val] : entries) {
      if (key == k) {
        val = std::move(v);
        return;
      }
    }
    entries.emplace_back(k, std::move(v));
  }
  void set(const std::string& k, double v) { set(k, fmt17(v)); }
  void set_int(const std::string& k, long long v) { set(k, std::to_string(v)); }

  const std::string* find(const std::string& k) const {
    for (const auto& [key, val] : entries) {
      if (key == k) return &val;
    }
    return nullptr;
  }
  bool has(const std::string& k) const { return find(k) != nullptr; }

  const std::string& get(const std::string& k) const {
    if (const auto* v = find(k)) return *v;
    throw SchemaError("missing key '" + k + "'");
  }
  double get_double(const std::string& k) const {
    double v = 0.0;
    if (!parse_double(get(k), v)) throw SchemaError("key '" + k + "': '" + get(k) + "' is not a finite number");
    return v;
  }
  long long get_int(const std::string& k) const {
    long long v = 0;
    if (!parse_int(get(k), v)) throw SchemaError("key '" + k + "': '" + get(k) + "' is not an integer");
    return v;
  }
};

/// Parses key = value lines. When `allowed` is non-empty, unknown keys are
/// rejected with their line number.
inline KeyValues parse_key_values(std::string_view text, const std::string& origin,
                                  const std::set<std::string, std::less<>>& allowed = {}) {
  KeyValues kv;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto where = origin + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw SchemaError(where + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw SchemaError(where + ": empty key");
    if (!allowed.empty() && !allowed.count(key)) {
      std::string known;
      for (const auto& a : allowed) known += (known.empty() ? "" : ", ") + a;
      throw SchemaError(where + ": unknown key '" + key + "' (known: " + known + ")");
    }
    if (kv.has(key)) throw SchemaError(where + ": duplicate key '" + key + "'");
    kv.entries.emplace_back(key, std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& p, const std::set<std::string, std::less<>>& allowed = {}) {
  return parse_key_values(read_file(p), p.string(), allowed);
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv.entries) {
    if (v.find('\n') != std::string::npos) throw ArgumentError("key '" + k + "': value contains a newline");
    out += k + " = " + v + '\n';
  }
  return out;
}

inline void write_key_values(const std::filesystem::path& p, const KeyValues& kv) { write_file(p, format_key_values(kv)); }

inline constexpr std::string_view kToolVersion = "0.3.0";

/// Everything needed to replay a subcommand: flags, seeds, the effective
/// config with its hash, and hashes of every input file. Stage timings are
/// appended when the run finishes.
struct RunManifest {
  std::string command;
  std::string arguments;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  KeyValues config;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, hash
  std::vector<std::pair<std::string, double>> stages;       // name, seconds
  std::string status = "started";

  std::string config_hash() const { return hex64(fnv1a(format_key_values(config))); }

  void add_input(const std::filesystem::path& p) { inputs.emplace_back(p.string(), hash_file(p)); }

  KeyValues to_key_values() const {
    KeyValues kv;
    kv.set("tool_version", std::string(kToolVersion));
    kv.set("command", command);
    kv.set("arguments", arguments);
    for (const auto& [name, s] : seeds) kv.set("seed." + name, std::to_string(s));
    kv.set("config_hash", config_hash());
    for (const auto& [k, v] : config.entries) kv.set("config." + k, v);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      kv.set("input." + std::to_string(i), inputs[i].first + " " + inputs[i].second);
    }
    for (const auto& [name, secs] : stages) kv.set("stage." + name + ".seconds", fmt_shortest(secs));
    kv.set("status", status);
    return kv;
  }
};

inline void write_manifest(const std::filesystem::path& p, const RunManifest& m) { write_key_values(p, m.to_key_values()); }

}  // namespace bwb::io
