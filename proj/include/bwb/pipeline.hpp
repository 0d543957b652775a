#pragma once

// End-to-end stages behind the command-line tool. Each stage reads and writes
// files under one work directory:
//
//   data/{train,test}.csv, data/fields/*.vtk
//   models/{ld,film,cdm}.ckpt
//   results/<method>.csv, results/<method>_timing.csv
//   eval/<method>_metrics.txt, eval/<method>_conditions.csv, eval/param_zscore.txt, eval/fields.txt
//   report/methods.csv
//   manifests/<command>.txt
//
// Every stage writes its manifest before doing any work and rewrites it with
// stage timings and status when it finishes.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "bwb/diffusion.hpp"
#include "bwb/eval.hpp"
#include "bwb/invert.hpp"
#include "bwb/io.hpp"
#include "bwb/rng.hpp"
#include "bwb/surrogate.hpp"

namespace bwb::pipeline {

namespace fs = std::filesystem;

/// Bad flags or a refused operation; exit code 1 in the tool.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Profile {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t n_train = 0, n_test = 0;
  std::size_t field_train = 0, field_test = 0;  // cases that also get surface-field files
  geom::LoftOptions loft;

  surrogate::LdConfig ld;
  surrogate::LdTrainConfig ld_train;
  surrogate::FilmConfig film;
  surrogate::FilmTrainConfig film_train;
  diffusion::DenoiserConfig cdm;
  diffusion::DiffusionTrainConfig cdm_train;

  std::size_t k = 100;  // candidates per condition, every method
  std::size_t opt_steps = 1000;
  std::size_t hybrid_steps = 200;
  double lr = 0.05;
  std::size_t conditions = 0;  // 0 = whole test split
};

inline Profile make_profile(const std::string& name) {
  Profile p;
  p.name = name;
  if (name == "smoke") {
    p.n_train = 256;
    p.n_test = 20;
    p.field_train = 12;
    p.field_test = 4;
    p.loft = {.n_chord = 8, .n_span = 6};
    p.ld.hidden = {32, 32};
    p.ld_train.max_epochs = 60;
    p.film = {.width = 24, .hyper_width = 16, .modulated_layers = 2, .plain_layers = 1};
    p.film_train.max_epochs = 60;
    p.film_train.lr = 2e-3;
    p.cdm = {.width = 48, .depth = 2, .time_dim = 16, .cond_dim = 16, .T = 50};
    p.cdm_train.epochs = 40;
    p.cdm_train.lr = 2e-3;
    p.k = 8;
    p.conditions = 20;
  } else if (name == "desk") {
    p.n_train = 2000;
    p.n_test = 200;
    p.field_train = 128;
    p.field_test = 16;
    p.loft = {.n_chord = 12, .n_span = 8};
    p.ld.hidden = {128, 128, 128};
    p.ld_train.max_epochs = 150;
    p.film = {.width = 48, .hyper_width = 32, .modulated_layers = 2, .plain_layers = 2};
    p.film_train.max_epochs = 300;
    p.film_train.lr = 2e-3;
    p.cdm = {.width = 128, .depth = 3, .time_dim = 32, .cond_dim = 32, .T = 200};
    p.cdm_train.epochs = 120;
    p.cdm_train.lr = 1e-3;
    p.k = 32;
    p.conditions = 50;
  } else if (name == "full") {
    p.n_train = 9992;
    p.n_test = 2498;
    p.field_train = 9992;
    p.field_test = 2498;
    p.loft = {};
    p.ld.hidden = {128, 128, 128};
    p.ld_train.max_epochs = 300;
    p.film = {};
    p.film_train = {};
    p.cdm = {};
    p.cdm_train = {};
    p.k = 100;
    p.conditions = 0;
  } else {
    throw UsageError("unknown profile '" + name + "' (expected smoke, desk or full)");
  }
  return p;
}

struct Paths {
  fs::path root = "bwb_run";
  fs::path data, models, results, eval, report;
  fs::path column_map;  // optional `source = canonical` renames for the case tables

  fs::path dir(const fs::path& override_dir, const char* sub) const {
    return override_dir.empty() ? root / sub : override_dir;
  }
  fs::path data_dir() const { return dir(data, "data"); }
  fs::path model_dir() const { return dir(models, "models"); }
  fs::path results_dir() const { return dir(results, "results"); }
  fs::path eval_dir() const { return dir(eval, "eval"); }
  fs::path report_dir() const { return dir(report, "report"); }
  fs::path manifest_dir() const { return root / "manifests"; }
};

inline const std::set<std::string, std::less<>>& config_keys() {
  static const std::set<std::string, std::less<>> keys = {
      "seed",        "n_train",     "n_test",      "field_train", "field_test", "T",
      "K",           "steps",       "hybrid_steps", "lr",         "conditions", "ld_epochs",
      "film_epochs", "cdm_epochs",  "data_dir",    "model_dir",   "results_dir", "eval_dir",
      "report_dir",  "column_map"};
  return keys;
}

/// Applies config-file overrides. Paths in the file are relative to the file.
inline void apply_config(Profile& p, Paths& paths, const io::KeyValues& kv, const fs::path& base = {}) {
  auto size = [&](const char* k, std::size_t& dst) {
    if (kv.has(k)) {
      const auto v = kv.get_int(k);
      if (v < 0) throw SchemaError(std::string("config key '") + k + "' must be >= 0");
      dst = static_cast<std::size_t>(v);
    }
  };
  if (kv.has("seed")) p.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
  size("n_train", p.n_train);
  size("n_test", p.n_test);
  size("field_train", p.field_train);
  size("field_test", p.field_test);
  if (kv.has("T")) p.cdm.T = static_cast<int>(kv.get_int("T"));
  size("K", p.k);
  size("steps", p.opt_steps);
  size("hybrid_steps", p.hybrid_steps);
  if (kv.has("lr")) p.lr = kv.get_double("lr");
  size("conditions", p.conditions);
  size("ld_epochs", p.ld_train.max_epochs);
  size("film_epochs", p.film_train.max_epochs);
  size("cdm_epochs", p.cdm_train.epochs);
  auto path = [&](const char* k, fs::path& dst) {
    if (kv.has(k)) dst = base / kv.get(k);
  };
  path("data_dir", paths.data);
  path("model_dir", paths.models);
  path("results_dir", paths.results);
  path("eval_dir", paths.eval);
  path("report_dir", paths.report);
  path("column_map", paths.column_map);
}

/// The effective settings, recorded in every manifest.
inline io::KeyValues describe(const Profile& p) {
  io::KeyValues kv;
  kv.set("profile", p.name);
  kv.set_int("seed", static_cast<long long>(p.seed));
  kv.set_int("n_train", static_cast<long long>(p.n_train));
  kv.set_int("n_test", static_cast<long long>(p.n_test));
  kv.set_int("field_train", static_cast<long long>(p.field_train));
  kv.set_int("field_test", static_cast<long long>(p.field_test));
  kv.set("loft", std::to_string(p.loft.n_chord) + "x" + std::to_string(p.loft.n_span));
  std::string hidden;
  for (auto h : p.ld.hidden) hidden += (hidden.empty() ? "" : ",") + std::to_string(h);
  kv.set("ld_hidden", hidden);
  kv.set_int("ld_epochs", static_cast<long long>(p.ld_train.max_epochs));
  kv.set("film", std::to_string(p.film.width) + "/" + std::to_string(p.film.hyper_width) + "/" +
                     std::to_string(p.film.modulated_layers) + "/" + std::to_string(p.film.plain_layers));
  kv.set_int("film_epochs", static_cast<long long>(p.film_train.max_epochs));
  kv.set("cdm", std::to_string(p.cdm.width) + "x" + std::to_string(p.cdm.depth));
  kv.set_int("T", p.cdm.T);
  kv.set_int("cdm_epochs", static_cast<long long>(p.cdm_train.epochs));
  kv.set_int("K", static_cast<long long>(p.k));
  kv.set_int("steps", static_cast<long long>(p.opt_steps));
  kv.set_int("hybrid_steps", static_cast<long long>(p.hybrid_steps));
  kv.set("lr", p.lr);
  kv.set_int("conditions", static_cast<long long>(p.conditions));
  return kv;
}

struct Context {
  Profile profile;
  Paths paths;
  std::size_t workers = 1;
  bool force = false;
  std::string arguments;  // the command line, for the manifest
  std::ostream* log = &std::cerr;
};

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

namespace detail {

using Clock = std::chrono::steady_clock;

/// Writes the manifest on construction and again, with timings and status, on finish().
class Run {
 public:
  Run(const Context& ctx, const std::string& command) : ctx_(ctx), path_(ctx.paths.manifest_dir() / (command + ".txt")) {
    m_.command = command;
    m_.arguments = ctx.arguments;
    m_.config = describe(ctx.profile);
    m_.seeds = {{"base", ctx.profile.seed}};
  }

  void seed(const std::string& name, std::uint64_t s) { m_.seeds.emplace_back(name, s); }
  void input(const fs::path& p) { m_.add_input(p); }
  void begin() { io::write_manifest(path_, m_); }

  template <class F>
  auto stage(const std::string& name, F&& f) {
    *ctx_.log << "[" << m_.command << "] " << name << "...\n";
    const auto t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      m_.stages.emplace_back(name, std::chrono::duration<double>(Clock::now() - t0).count());
    } else {
      auto r = f();
      m_.stages.emplace_back(name, std::chrono::duration<double>(Clock::now() - t0).count());
      return r;
    }
  }

  void finish() {
    m_.status = "ok";
    io::write_manifest(path_, m_);
  }

 private:
  const Context& ctx_;
  fs::path path_;
  io::RunManifest m_;
};

inline io::CaseRecord make_record(const std::string& id, const geom::DesignPoint& d) {
  const auto a = surrogate::oracle_aero(d.planform, d.condition);
  io::CaseRecord r;
  r.id = id;
  r.planform = d.planform;
  r.altitude_kft = d.condition.altitude_kft;
  r.mach = d.condition.mach;
  r.centerline_length = d.condition.centerline_length;
  r.alpha_deg = d.condition.alpha_deg;
  r.cl = a.cl;
  r.cd = a.cd;
  r.cm = a.cm;
  r.ld = a.cl / a.cd;
  return r;
}

inline std::vector<io::CaseRecord> load_split(const Context& ctx, Run& run, const char* split) {
  const auto path = ctx.paths.data_dir() / (std::string(split) + ".csv");
  if (!fs::exists(path)) {
    throw SchemaError("case table not found: expected " + path.string() + " (run gen-data first)");
  }
  run.input(path);
  io::ColumnMapping mapping;
  if (!ctx.paths.column_map.empty()) {
    run.input(ctx.paths.column_map);
    mapping = io::read_column_mapping(ctx.paths.column_map);
  }
  auto t = io::read_cases(path, mapping);
  if (!t.errors.empty()) {
    std::string msg = path.string() + ": " + std::to_string(t.errors.size()) + " malformed row(s)";
    for (std::size_t i = 0; i < std::min<std::size_t>(t.errors.size(), 5); ++i) {
      msg += "\n  line " + std::to_string(t.errors[i].line) + ": " + t.errors[i].message;
    }
    throw SchemaError(msg);
  }
  std::size_t flagged = 0;
  for (const auto& r : t.records) flagged += r.out_of_box;
  if (flagged) *ctx.log << "warning: " << path.string() << ": " << flagged << " case(s) outside the parameter box\n";
  return std::move(t.records);
}

inline std::vector<surrogate::FieldCase> load_field_cases(const Context& ctx, Run& run,
                                                          const std::vector<io::CaseRecord>& records) {
  std::vector<surrogate::FieldCase> out;
  for (const auto& r : records) {
    if (r.field_file.empty()) continue;
    const auto path = ctx.paths.data_dir() / r.field_file;
    run.input(path);
    out.push_back({r.planform, r.condition(), io::read_surface_fields(path).cloud});
    if (!out.back().cloud.has_fields()) throw SchemaError(path.string() + ": missing Cp/Cfx/Cfz arrays");
  }
  return out;
}

inline fs::path ckpt(const Context& ctx, const char* name) { return ctx.paths.model_dir() / (std::string(name) + ".ckpt"); }

inline fs::path require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw SchemaError("not found: expected " + p.string() + " (" + hint + ")");
  return p;
}

inline std::vector<invert::InverseTask> tasks_from(const std::vector<io::CaseRecord>& test, std::size_t conditions) {
  const std::size_t n = conditions == 0 ? test.size() : std::min(conditions, test.size());
  std::vector<invert::InverseTask> tasks;
  for (std::size_t i = 0; i < n; ++i) tasks.push_back({i, test[i].condition(), test[i].ld});
  return tasks;
}

/// Training-split z-score over the nine planform parameters; the diversity space.
inline Standardizer planform_zscore(const std::vector<io::CaseRecord>& train) {
  Matrix x(static_cast<Eigen::Index>(train.size()), invert::kDim);
  for (std::size_t i = 0; i < train.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = surrogate::planform_row(train[i].planform);
  }
  return Standardizer::fit(x);
}

}  // namespace detail

// ---- stages ----------------------------------------------------------------------------

inline void gen_data(const Context& ctx) {
  const auto& p = ctx.profile;
  if (p.n_train < 1 || p.n_test < 1) throw UsageError("gen-data: n_train and n_test must be >= 1");
  const auto out = ctx.paths.data_dir();
  if (fs::exists(out) && !fs::is_empty(out) && !ctx.force) {
    throw UsageError("gen-data: output directory " + out.string() + " is not empty (use --force to overwrite)");
  }
  detail::Run run(ctx, "gen-data");
  // Independent hypercubes per split.
  const std::uint64_t train_seed = stream_rng(p.seed, 1)();
  const std::uint64_t test_seed = stream_rng(p.seed, 2)();
  run.seed("train_lhs", train_seed);
  run.seed("test_lhs", test_seed);
  run.begin();
  if (ctx.force && fs::exists(out)) fs::remove_all(out);

  for (auto [split, n, n_fields, s] : {std::tuple{"train", p.n_train, p.field_train, train_seed},
                                       std::tuple{"test", p.n_test, p.field_test, test_seed}}) {
    std::vector<io::CaseRecord> records;
    run.stage(std::string(split) + "_cases", [&] {
      const auto design = geom::lhs_design(geom::ParamBox{}, geom::ConditionRanges{}, n, s);
      for (std::size_t i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "%s_%06zu", split, i);
        records.push_back(detail::make_record(id, design[i]));
      }
    });
    run.stage(std::string(split) + "_fields", [&] {
      for (std::size_t i = 0; i < std::min(n, n_fields); ++i) {
        auto& r = records[i];
        io::SurfaceFile f;
        f.title = r.id;
        f.cloud = geom::synthesize_surface(r.planform, p.loft);
        surrogate::oracle_fields(r.planform, r.condition(), f.cloud);
        r.field_file = "fields/" + r.id + ".vtk";
        io::write_surface_fields(out / r.field_file, f);
      }
    });
    io::write_cases(out / (std::string(split) + ".csv"), records);
    *ctx.log << "[gen-data] wrote " << records.size() << " " << split << " cases\n";
  }
  run.finish();
}

/// Writes surface point clouds (geometry only) for every case in `cases`, or
/// for the box midpoint when `cases` is empty.
inline void gen_geom(const Context& ctx, const fs::path& cases, const fs::path& out) {
  detail::Run run(ctx, "gen-geom");
  std::vector<io::CaseRecord> records;
  if (cases.empty()) {
    io::CaseRecord r;
    r.id = "midpoint";
    r.planform = geom::PlanformParams::from_array(geom::ParamBox{}.midpoint());
    records.push_back(r);
  } else {
    run.input(cases);
    auto t = io::read_cases(cases);
    if (!t.errors.empty()) {
      throw SchemaError(cases.string() + ": line " + std::to_string(t.errors[0].line) + ": " + t.errors[0].message);
    }
    records = std::move(t.records);
  }
  run.begin();
  run.stage("loft", [&] {
    for (const auto& r : records) {
      io::SurfaceFile f;
      f.title = r.id;
      f.cloud = geom::synthesize_surface(r.planform, ctx.profile.loft);
      io::write_surface_fields(out / (r.id + ".vtk"), f);
    }
  });
  *ctx.log << "[gen-geom] wrote " << records.size() << " surface file(s) to " << out.string() << "\n";
  run.finish();
}

inline void train_surrogate(const Context& ctx) {
  const auto& p = ctx.profile;
  detail::Run run(ctx, "train-surrogate");
  const auto train = detail::load_split(ctx, run, "train");
  auto tc = p.ld_train;
  tc.seed = stream_rng(p.seed, 3)();
  auto fc = p.film_train;
  fc.seed = stream_rng(p.seed, 4)();
  run.seed("ld_init", tc.seed);
  run.seed("film_init", fc.seed);
  const auto fields = detail::load_field_cases(ctx, run, train);
  run.begin();

  const auto ld = run.stage("ld", [&] {
    std::vector<surrogate::LdSample> data;
    for (const auto& r : train) data.push_back({r.planform, r.condition(), r.ld});
    return surrogate::train_ld_surrogate(data, p.ld, tc);
  });
  *ctx.log << "[train-surrogate] L/D best validation loss "
           << *std::min_element(ld.history.val_loss.begin(), ld.history.val_loss.end()) << "\n";
  io::save_ld(detail::ckpt(ctx, "ld"), ld.model);

  if (fields.size() >= 2 && fc.max_epochs > 0) {
    const auto film = run.stage("film", [&] { return surrogate::train_field_surrogate(fields, p.film, fc); });
    io::save_film(detail::ckpt(ctx, "film"), film.model, film.scaler);
  } else {
    *ctx.log << "[train-surrogate] fewer than 2 field files; field surrogate skipped\n";
  }
  run.finish();
}

inline void train_diffusion(const Context& ctx) {
  const auto& p = ctx.profile;
  detail::Run run(ctx, "train-diffusion");
  const auto train = detail::load_split(ctx, run, "train");
  auto tc = p.cdm_train;
  tc.seed = stream_rng(p.seed, 5)();
  run.seed("cdm_init", tc.seed);
  run.begin();
  const auto res = run.stage("cdm", [&] {
    std::vector<diffusion::DiffusionSample> data;
    for (const auto& r : train) data.push_back({r.planform, diffusion::ConditionVector::from(r.condition(), r.ld)});
    return diffusion::train_denoiser(data, p.cdm, tc);
  });
  *ctx.log << "[train-diffusion] final epoch loss " << res.epoch_loss.back() << "\n";
  io::save_cdm(detail::ckpt(ctx, "cdm"), res.model);
  run.finish();
}

inline invert::RunConfig run_config(const Context& ctx, invert::Method m) {
  const auto& p = ctx.profile;
  invert::RunConfig rc;
  rc.method = m;
  rc.pgd.seeds = p.k;
  rc.pgd.lr = p.lr;
  rc.pgd.steps = m == invert::Method::Hybrid ? p.hybrid_steps : p.opt_steps;
  rc.seed = stream_rng(p.seed, 6)();  // shared by all methods so hybrid refines the cdm samples
  rc.workers = ctx.workers;
  return rc;
}

inline void invert_stage(const Context& ctx, const std::vector<invert::Method>& methods) {
  detail::Run run(ctx, "invert");
  const auto test = detail::load_split(ctx, run, "test");
  const auto tasks = detail::tasks_from(test, ctx.profile.conditions);
  bool need_cdm = false;
  for (auto m : methods) need_cdm |= m != invert::Method::Opt;
  run.input(detail::require_file(detail::ckpt(ctx, "ld"), "run train-surrogate first"));
  if (need_cdm) run.input(detail::require_file(detail::ckpt(ctx, "cdm"), "run train-diffusion first"));
  run.seed("inversion", run_config(ctx, invert::Method::Opt).seed);
  run.begin();

  const auto ld = io::load_ld(detail::ckpt(ctx, "ld"));
  std::optional<diffusion::DenoiserModel> cdm;
  if (need_cdm) cdm = io::load_cdm(detail::ckpt(ctx, "cdm"));
  for (auto m : methods) {
    const auto results = run.stage(invert::method_name(m), [&] {
      return invert::run_inversions({&ld, cdm ? &*cdm : nullptr}, tasks, run_config(ctx, m));
    });
    const auto dir = ctx.paths.results_dir();
    io::write_file(dir / (std::string(invert::method_name(m)) + ".csv"), io::format_results(results));
    io::write_file(dir / (std::string(invert::method_name(m)) + "_timing.csv"), io::format_timing(results));
    *ctx.log << "[invert] " << invert::method_name(m) << ": " << results.size() << " conditions\n";
  }
  run.finish();
}

inline const std::vector<invert::Method>& all_methods() {
  static const std::vector<invert::Method> m = {invert::Method::Cdm, invert::Method::Opt, invert::Method::Hybrid};
  return m;
}

inline void eval_stage(const Context& ctx) {
  detail::Run run(ctx, "eval");
  const auto train = detail::load_split(ctx, run, "train");
  const auto test = detail::load_split(ctx, run, "test");
  std::vector<fs::path> result_files;
  for (auto m : all_methods()) {
    const auto f = ctx.paths.results_dir() / (std::string(invert::method_name(m)) + ".csv");
    if (fs::exists(f)) {
      run.input(f);
      result_files.push_back(f);
    }
  }
  if (result_files.empty()) {
    throw SchemaError("no result files in " + ctx.paths.results_dir().string() + " (run invert first)");
  }
  const bool fields = fs::exists(detail::ckpt(ctx, "film"));
  std::vector<surrogate::FieldCase> field_cases;
  if (fields) {
    run.input(detail::ckpt(ctx, "film"));
    field_cases = detail::load_field_cases(ctx, run, test);
  }
  run.begin();

  const auto dir = ctx.paths.eval_dir();
  const auto z = detail::planform_zscore(train);
  {
    io::KeyValues kv;
    kv.set("space", "z-score of the nine planform parameters, fitted on the training split");
    for (std::size_t j = 0; j < geom::kNumParams; ++j) {
      kv.set(std::string(geom::kParamNames[j]) + ".mean", z.mean(static_cast<Eigen::Index>(j)));
      kv.set(std::string(geom::kParamNames[j]) + ".std", z.std(static_cast<Eigen::Index>(j)));
    }
    io::write_key_values(dir / "param_zscore.txt", kv);
  }
  std::vector<geom::PlanformParams> test_geoms;
  for (const auto& r : test) test_geoms.push_back(r.planform);
  const auto ranges = eval::parameter_ranges(test_geoms);

  for (const auto& f : result_files) {
    run.stage("metrics_" + f.stem().string(), [&] {
      const auto results = io::read_results(f);
      std::vector<geom::PlanformParams> truth;
      for (const auto& r : results) {
        if (r.condition_id >= test.size()) {
          throw SchemaError(f.string() + ": condition " + std::to_string(r.condition_id) + " not in the test split");
        }
        truth.push_back(test[r.condition_id].planform);
      }
      const auto rep = eval::build_report(results, z, &truth, &ranges);
      io::write_key_values(dir / (f.stem().string() + "_metrics.txt"), io::metrics_key_values(rep));
      io::write_file(dir / (f.stem().string() + "_conditions.csv"), io::format_condition_table(rep));
      *ctx.log << "[eval] " << rep.method << ": R2 " << (rep.r2_global ? io::fmt_shortest(*rep.r2_global) : "n/a")
               << ", RMSE " << rep.rmse.mean << ", MPD " << rep.mpd.mean << "\n";
    });
  }
  if (fields && !field_cases.empty()) {
    run.stage("fields", [&] {
      const auto film = io::load_film(detail::ckpt(ctx, "film"));
      std::vector<Matrix> pred, truth;
      for (const auto& c : field_cases) {
        pred.push_back(surrogate::predict_fields(film.model, film.scaler, c.planform, c.condition, c.cloud));
        truth.push_back(surrogate::field_targets(c.cloud));
      }
      const auto s = eval::field_errors(pred, truth);
      io::KeyValues kv;
      kv.set_int("cases", static_cast<long long>(field_cases.size()));
      const char* names[] = {"Cp", "Cfx", "Cfz"};
      for (std::size_t c = 0; c < s.size(); ++c) {
        kv.set(std::string(names[c]) + ".mse", s[c].mse);
        kv.set(std::string(names[c]) + ".mae", s[c].mae);
        kv.set(std::string(names[c]) + ".rel_l1", s[c].rel_l1 ? io::fmt17(*s[c].rel_l1) : "n/a");
        kv.set(std::string(names[c]) + ".rel_l2", s[c].rel_l2 ? io::fmt17(*s[c].rel_l2) : "n/a");
      }
      io::write_key_values(dir / "fields.txt", kv);
    });
  }
  run.finish();
}

/// Method comparison table from the eval metrics and invert timings; also returned as text.
inline std::string report_stage(const Context& ctx) {
  detail::Run run(ctx, "report");
  std::map<std::string, io::ReportRow, std::less<>> rows;
  for (auto m : all_methods()) {
    const std::string name = invert::method_name(m);
    const auto metrics = ctx.paths.eval_dir() / (name + "_metrics.txt");
    if (!fs::exists(metrics)) continue;
    run.input(metrics);
    io::ReportRow row;
    row.metrics = io::read_key_values(metrics);
    const auto timing = ctx.paths.results_dir() / (name + "_timing.csv");
    if (fs::exists(timing)) {
      run.input(timing);
      row.seconds = io::parse_timing(io::read_file(timing), timing.string());
    }
    rows[name] = std::move(row);
  }
  if (rows.empty()) throw SchemaError("no metrics in " + ctx.paths.eval_dir().string() + " (run eval first)");
  run.begin();
  const auto text = io::format_report(rows);
  io::write_file(ctx.paths.report_dir() / "methods.csv", text);
  run.finish();
  return text;
}

/// gen-data, both trainings, all three inversions, eval and report.
inline std::string run_all(const Context& ctx) {
  gen_data(ctx);
  train_surrogate(ctx);
  train_diffusion(ctx);
  invert_stage(ctx, all_methods());
  eval_stage(ctx);
  return report_stage(ctx);
}

}  // namespace bwb::pipeline
