#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "bwb/pipeline.hpp"

using namespace bwb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("bwb_pipe_" + name);
  fs::remove_all(p);
  return p;
}

pipeline::Context context(const std::string& profile, const fs::path& root, std::uint64_t seed = 0) {
  static std::ostringstream sink;
  pipeline::Context ctx;
  ctx.profile = pipeline::make_profile(profile);
  ctx.profile.seed = seed;
  ctx.paths.root = root;
  ctx.workers = 1;
  ctx.log = &sink;
  return ctx;
}

double seconds_of(const std::function<void()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(BWB_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

}  // namespace

TEST(Profiles, FullDefaultsMatchDatasetSplit) {
  const auto p = pipeline::make_profile("full");
  EXPECT_EQ(p.n_train, 9992u);
  EXPECT_EQ(p.n_test, 2498u);
  EXPECT_EQ(p.k, 100u);
  EXPECT_EQ(p.cdm.T, 1000);
  const auto d = pipeline::make_profile("desk");
  EXPECT_EQ(d.n_train, 2000u);
  EXPECT_EQ(d.n_test, 200u);
  EXPECT_EQ(d.cdm.T, 200);
  EXPECT_EQ(d.k, 32u);
  EXPECT_EQ(d.conditions, 50u);
  EXPECT_THROW(pipeline::make_profile("huge"), pipeline::UsageError);
}

TEST(Config, OverridesAndUnknownKeys) {
  auto p = pipeline::make_profile("smoke");
  pipeline::Paths paths;
  const auto kv = io::parse_key_values("seed = 9\nK = 5\nT = 30\nlr = 0.1\nsteps = 7\ndata_dir = d\n", "c.cfg",
                                       pipeline::config_keys());
  pipeline::apply_config(p, paths, kv, "/base");
  EXPECT_EQ(p.seed, 9u);
  EXPECT_EQ(p.k, 5u);
  EXPECT_EQ(p.cdm.T, 30);
  EXPECT_EQ(p.lr, 0.1);
  EXPECT_EQ(p.opt_steps, 7u);
  EXPECT_EQ(paths.data_dir(), fs::path("/base/d"));
  EXPECT_THROW(io::parse_key_values("seed = 1\nbatch = 3\n", "c.cfg", pipeline::config_keys()), SchemaError);
}

TEST(GenData, TinySplitIsFastAndReproducible) {
  const auto a = scratch("gen_a"), b = scratch("gen_b"), c = scratch("gen_c");
  auto ctx = context("smoke", a, 42);
  ctx.profile.n_train = 8;
  ctx.profile.n_test = 2;
  ctx.profile.field_train = 2;
  ctx.profile.field_test = 1;
  EXPECT_LT(seconds_of([&] { pipeline::gen_data(ctx); }), 5.0);
  const auto t = io::read_cases(a / "data/train.csv");
  EXPECT_EQ(t.records.size(), 8u);
  EXPECT_TRUE(t.errors.empty());
  EXPECT_EQ(io::read_cases(a / "data/test.csv").records.size(), 2u);
  EXPECT_TRUE(fs::exists(a / "data" / t.records[0].field_file));

  ctx.paths.root = b;
  pipeline::gen_data(ctx);
  for (const char* f : {"data/train.csv", "data/test.csv", "data/fields/train_000001.vtk"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  ctx.paths.root = c;
  ctx.profile.seed = 43;
  pipeline::gen_data(ctx);
  EXPECT_NE(slurp(a / "data/train.csv"), slurp(c / "data/train.csv"));
  // Splits come from independent hypercubes.
  EXPECT_NE(io::read_cases(a / "data/test.csv").records[0].planform.to_array(), t.records[0].planform.to_array());
}

TEST(GenData, RefusesNonEmptyOutputWithoutForce) {
  const auto root = scratch("refuse");
  auto ctx = context("smoke", root);
  ctx.profile.n_train = 4;
  ctx.profile.n_test = 2;
  pipeline::gen_data(ctx);
  EXPECT_THROW(pipeline::gen_data(ctx), pipeline::UsageError);
  ctx.force = true;
  EXPECT_NO_THROW(pipeline::gen_data(ctx));
  ctx.profile.n_train = 0;
  EXPECT_THROW(pipeline::gen_data(ctx), pipeline::UsageError);
}

TEST(GenData, ColumnMapRenamesDatasetColumns) {
  const auto root = scratch("colmap");
  auto ctx = context("smoke", root);
  ctx.profile.n_train = 16;
  ctx.profile.n_test = 2;
  ctx.profile.field_train = 0;
  ctx.profile.field_test = 0;
  ctx.profile.ld_train.max_epochs = 1;
  pipeline::gen_data(ctx);
  for (const char* split : {"train.csv", "test.csv"}) {
    const auto p = root / "data" / split;
    auto text = slurp(p);
    text.replace(text.find(",LD"), 3, ",lift_to_drag");
    io::write_file(p, text);
  }
  EXPECT_THROW(pipeline::train_surrogate(ctx), SchemaError);
  io::write_file(root / "columns.txt", "# dataset naming\nlift_to_drag = LD\n");
  ctx.paths.column_map = root / "columns.txt";
  EXPECT_NO_THROW(pipeline::train_surrogate(ctx));
  EXPECT_TRUE(fs::exists(root / "models/ld.ckpt"));
}

TEST(GenGeom, WritesLoadableClouds) {
  const auto root = scratch("geom");
  auto ctx = context("smoke", root);
  pipeline::gen_geom(ctx, {}, root / "clouds");
  const auto f = io::read_surface_fields(root / "clouds/midpoint.vtk");
  EXPECT_EQ(f.cloud.size(), 2 * ctx.profile.loft.n_chord * ctx.profile.loft.n_span);
  EXPECT_TRUE(f.normals_from_file);
}

TEST(Invert, MissingCheckpointNamesExpectedPath) {
  const auto root = scratch("missing");
  auto ctx = context("smoke", root);
  ctx.profile.n_train = 4;
  ctx.profile.n_test = 2;
  pipeline::gen_data(ctx);
  try {
    pipeline::invert_stage(ctx, {invert::Method::Opt});
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find((root / "models/ld.ckpt").string()), std::string::npos) << e.what();
  }
}

TEST(Report, PerfectStubGivesUnitScores) {
  const auto root = scratch("stub");
  auto ctx = context("smoke", root);
  ctx.profile.n_train = 30;
  ctx.profile.n_test = 12;
  pipeline::gen_data(ctx);
  const auto test = io::read_cases(root / "data/test.csv").records;
  // An inverter that returns the true geometry with exactly the requested L/D.
  std::vector<invert::InverseResult> rs;
  for (std::size_t i = 0; i < test.size(); ++i) {
    invert::InverseResult r;
    r.condition_id = i;
    r.method = invert::Method::Hybrid;
    r.target = test[i].ld;
    r.candidates = {test[i].planform, test[i].planform};
    r.ld = {test[i].ld, test[i].ld};
    rs.push_back(r);
  }
  io::write_file(root / "results/hybrid.csv", io::format_results(rs));
  pipeline::eval_stage(ctx);
  const auto kv = io::read_key_values(root / "eval/hybrid_metrics.txt");
  EXPECT_EQ(kv.get_double("r2_global"), 1.0);
  EXPECT_EQ(kv.get_double("recovery_samples"), 1.0);
  EXPECT_EQ(kv.get_double("recovery_conditions"), 1.0);
  EXPECT_EQ(kv.get_double("rmse_mean"), 0.0);
  const auto text = pipeline::report_stage(ctx);
  EXPECT_NE(text.find("\nhybrid,1,"), std::string::npos) << text;
  EXPECT_NE(text.find(",n/a,n/a\n"), std::string::npos) << text;  // no timing file
}

TEST(EndToEnd, SmokeProfileUnderTwoMinutes) {
  const auto root = scratch("e2e");
  auto ctx = context("smoke", root, 5);
  std::string text;
  EXPECT_LT(seconds_of([&] { text = pipeline::run_all(ctx); }), 120.0);

  const auto lines = io::split(text, '\n');
  ASSERT_GE(lines.size(), 4u);
  EXPECT_EQ(lines[1].substr(0, 4), "cdm,");
  EXPECT_EQ(lines[2].substr(0, 4), "opt,");
  EXPECT_EQ(lines[3].substr(0, 7), "hybrid,");
  EXPECT_EQ(slurp(root / "report/methods.csv"), text);

  for (const char* cmd : {"gen-data", "train-surrogate", "train-diffusion", "invert", "eval", "report"}) {
    const auto kv = io::read_key_values(root / "manifests" / (std::string(cmd) + ".txt"));
    EXPECT_EQ(kv.get("status"), "ok") << cmd;
    EXPECT_EQ(kv.get("config.seed"), "5") << cmd;
  }
  const geom::ParamBox box;
  for (const char* m : {"cdm", "opt", "hybrid"}) {
    const auto rs = io::read_results(root / "results" / (std::string(m) + ".csv"));
    EXPECT_EQ(rs.size(), 20u);
    for (const auto& r : rs) {
      EXPECT_EQ(r.candidates.size(), 8u);
      for (const auto& c : r.candidates) EXPECT_TRUE(box.contains(c));
    }
  }
  EXPECT_TRUE(fs::exists(root / "models/film.ckpt"));
  EXPECT_TRUE(fs::exists(root / "eval/fields.txt"));
}

TEST(EndToEnd, WorkerCountDoesNotChangeResults) {
  const auto a = scratch("workers_a");
  auto ctx = context("smoke", a, 8);
  ctx.profile.field_train = 0;
  pipeline::run_all(ctx);
  const auto b = scratch("workers_b");
  fs::create_directories(b);
  fs::copy(a / "data", b / "data", fs::copy_options::recursive);
  fs::copy(a / "models", b / "models", fs::copy_options::recursive);
  auto ctx3 = context("smoke", b, 8);
  ctx3.workers = 3;
  pipeline::invert_stage(ctx3, pipeline::all_methods());
  for (const char* m : {"cdm", "opt", "hybrid"}) {
    EXPECT_EQ(slurp(a / "results" / (std::string(m) + ".csv")), slurp(b / "results" / (std::string(m) + ".csv"))) << m;
  }
}

// ---- command-line contract ---------------------------------------------------------

TEST(Cli, ExitCodes) {
  const auto root = scratch("cli");
  const std::string work = "--work " + root.string() + " --profile smoke ";
  EXPECT_EQ(cli("--no-such-flag gen-data"), 1);
  EXPECT_EQ(cli(work), 1);  // no subcommand
  EXPECT_EQ(cli(work + "--workers 1 invert"), 2);  // no data, no checkpoints
  EXPECT_EQ(cli(work + "gen-data --n-train 6 --n-test 3"), 0);
  EXPECT_EQ(cli(work + "gen-data --n-train 6 --n-test 3"), 1);  // refuses to overwrite
  EXPECT_EQ(cli(work + "gen-data --n-train 6 --n-test 3 --force"), 0);
  EXPECT_EQ(io::read_cases(root / "data/train.csv").records.size(), 6u);
  EXPECT_EQ(cli(work + "--workers 1 invert"), 2);  // checkpoints missing

  io::write_file(root / "bad.cfg", "seed = 1\nbatch_size = 4\n");
  EXPECT_EQ(cli(work + "--config " + (root / "bad.cfg").string() + " train-surrogate"), 2);
}

TEST(Cli, ManifestPrecedesWorkAndNumericalFailureIsExitThree) {
  const auto root = scratch("cli_nan");
  const std::string work = "--work " + root.string() + " --profile smoke ";
  ASSERT_EQ(cli(work + "gen-data --n-train 40 --n-test 4"), 0);
  io::write_file(root / "fast.cfg", "ld_epochs = 2\nfilm_epochs = 0\n");
  ASSERT_EQ(cli(work + "--config " + (root / "fast.cfg").string() + " train-surrogate"), 0);

  // A checkpoint that is well-formed but holds a NaN weight.
  auto ld = io::load_ld(root / "models/ld.ckpt");
  ld.params[0](0, 0) = std::nan("");
  io::save_ld(root / "models/ld.ckpt", ld);
  EXPECT_EQ(cli(work + "--workers 1 invert --method opt"), 3);
  const auto kv = io::read_key_values(root / "manifests/invert.txt");
  EXPECT_EQ(kv.get("status"), "started");
  EXPECT_NE(kv.get("input.1").find("ld.ckpt"), std::string::npos);
}
