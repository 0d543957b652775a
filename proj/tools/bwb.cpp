// bwb: command-line front end for the inverse-design pipeline.
//
// Exit codes: 0 success, 1 usage, 2 data/schema, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "bwb/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace bwb;

struct Flags {
  std::string profile = "desk";
  std::string config;
  std::string work = "bwb_run";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool force = false;

  std::optional<std::size_t> n_train, n_test, k, conditions, steps;
  std::optional<int> T;
  std::string out;
  std::string cases;
  std::string column_map;
  std::vector<std::string> methods;
};

pipeline::Context build_context(const Flags& f, int argc, char** argv) {
  pipeline::Context ctx;
  ctx.profile = pipeline::make_profile(f.profile);
  ctx.paths.root = f.work;
  if (const char* root = std::getenv("BWB_DATA_ROOT"); root != nullptr && *root != '\0') ctx.paths.data = root;
  if (!f.config.empty()) {
    const auto kv = io::read_key_values(f.config, pipeline::config_keys());
    pipeline::apply_config(ctx.profile, ctx.paths, kv, fs::path(f.config).parent_path());
  }
  if (!f.column_map.empty()) ctx.paths.column_map = f.column_map;
  if (f.seed) ctx.profile.seed = *f.seed;
  if (f.n_train) ctx.profile.n_train = *f.n_train;
  if (f.n_test) ctx.profile.n_test = *f.n_test;
  if (f.k) ctx.profile.k = *f.k;
  if (f.conditions) ctx.profile.conditions = *f.conditions;
  if (f.steps) ctx.profile.opt_steps = *f.steps;
  if (f.T) ctx.profile.cdm.T = *f.T;
  ctx.workers = f.workers.value_or(pipeline::default_workers());
  if (ctx.workers < 1) throw pipeline::UsageError("--workers must be >= 1");
  ctx.force = f.force;
  for (int i = 0; i < argc; ++i) ctx.arguments += (i ? " " : "") + std::string(argv[i]);
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blended-wing-body inverse design: data generation, surrogates, diffusion sampling, inversion"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--profile", f.profile, "Preset sizes: smoke, desk or full")
      ->check(CLI::IsMember({"smoke", "desk", "full"}))
      ->capture_default_str();
  app.add_option("--config", f.config, "key = value file overriding the profile")->check(CLI::ExistingFile);
  app.add_option("--work", f.work, "Work directory")->capture_default_str();
  app.add_option("--column-map", f.column_map, "source = canonical column renames for the case tables")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "Base seed");
  app.add_option("--workers", f.workers, "Worker threads for inversion (default: all cores)");
  app.add_option("--T", f.T, "Diffusion steps");
  app.add_option("--K", f.k, "Candidates per condition");
  app.add_option("--steps", f.steps, "Gradient steps for the optimization baseline");
  app.add_option("--conditions", f.conditions, "Test conditions to invert (0 = all)");

  auto* gen_data = app.add_subcommand("gen-data", "Sample train/test splits and label them with the oracle");
  gen_data->add_option("--n-train", f.n_train, "Training cases");
  gen_data->add_option("--n-test", f.n_test, "Test cases");
  gen_data->add_flag("--force", f.force, "Overwrite a non-empty output directory");

  auto* gen_geom = app.add_subcommand("gen-geom", "Write surface point clouds for planforms");
  gen_geom->add_option("--cases", f.cases, "Case table (default: box midpoint)")->check(CLI::ExistingFile);
  gen_geom->add_option("--out", f.out, "Output directory")->required();

  auto* train_surrogate = app.add_subcommand("train-surrogate", "Train the L/D and field surrogates");
  auto* train_diffusion = app.add_subcommand("train-diffusion", "Train the conditional diffusion model");
  auto* invert = app.add_subcommand("invert", "Run inverse design on the test conditions");
  invert->add_option("--method", f.methods, "cdm, opt or hybrid (repeatable; default all)")
      ->check(CLI::IsMember({"cdm", "opt", "hybrid"}));
  auto* eval = app.add_subcommand("eval", "Compute metrics for every result file");
  auto* report = app.add_subcommand("report", "Write the method comparison table");
  auto* all = app.add_subcommand("pipeline", "gen-data through report in one go");
  all->add_flag("--force", f.force, "Overwrite a non-empty data directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const auto ctx = build_context(f, argc, argv);
    if (gen_data->parsed()) {
      pipeline::gen_data(ctx);
    } else if (gen_geom->parsed()) {
      pipeline::gen_geom(ctx, f.cases, f.out);
    } else if (train_surrogate->parsed()) {
      pipeline::train_surrogate(ctx);
    } else if (train_diffusion->parsed()) {
      pipeline::train_diffusion(ctx);
    } else if (invert->parsed()) {
      std::vector<invert::Method> methods;
      for (const auto& m : f.methods) methods.push_back(invert::parse_method(m));
      pipeline::invert_stage(ctx, methods.empty() ? pipeline::all_methods() : methods);
    } else if (eval->parsed()) {
      pipeline::eval_stage(ctx);
    } else if (report->parsed()) {
      std::cout << pipeline::report_stage(ctx);
    } else if (all->parsed()) {
      std::cout << pipeline::run_all(ctx);
    }
  } catch (const pipeline::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    // Schema, format, integrity, domain and I/O problems.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
