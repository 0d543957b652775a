#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bwb/surrogate.hpp"

using namespace bwb;
using namespace bwb::surrogate;
using bwb::nn::Matrix;
using bwb::nn::RowVector;
using bwb::nn::Tape;
using bwb::nn::Var;

namespace {

std::vector<geom::DesignPoint> design(std::size_t n, std::uint64_t seed) {
  return geom::lhs_design(geom::ParamBox{}, geom::ConditionRanges{}, n, seed);
}

std::vector<FieldCase> field_cases(std::size_t n, std::uint64_t seed, std::size_t grid = 8) {
  std::vector<FieldCase> out;
  geom::LoftOptions lo;
  lo.n_chord = grid;
  lo.n_span = grid;
  for (const auto& d : design(n, seed)) {
    FieldCase c{d.planform, d.condition, geom::synthesize_surface(d.planform, lo)};
    oracle_fields(c.planform, c.condition, c.cloud);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<LdSample> ld_samples(std::size_t n, std::uint64_t seed) {
  std::vector<LdSample> out;
  for (const auto& d : design(n, seed)) out.push_back({d.planform, d.condition, oracle_aero(d.planform, d.condition).ld});
  return out;
}

FilmConfig small_film() {
  FilmConfig c;
  c.width = 32;
  c.hyper_width = 16;
  return c;
}

// Fitted identity scalers so an untrained model can be evaluated directly.
LdSurrogate untrained_ld(std::uint64_t seed) {
  LdSurrogate m = LdSurrogate::create(LdConfig{}, seed);
  Matrix rows(64, kLdFeatures);
  const auto pts = design(64, seed + 1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = ld_features(pts[i].planform, pts[i].condition);
  }
  m.inputs = Standardizer::fit(rows);
  m.out_mean = 5.0;
  m.out_std = 10.0;
  return m;
}

}  // namespace

// ---- oracle ----------------------------------------------------------------

TEST(Oracle, ZeroLiftAngleGivesZeroLiftAndPressure) {
  for (const auto& d : design(20, 3)) {
    auto fc = d.condition;
    fc.alpha_deg = zero_lift_angle_deg(d.planform);
    const auto a = oracle_aero(d.planform, fc);
    EXPECT_NEAR(a.cl, 0.0, 1e-14);
    auto cloud = geom::synthesize_surface(d.planform);
    oracle_fields(d.planform, fc, cloud);
    for (double cp : cloud.cp) EXPECT_EQ(cp, 0.0);
  }
}

TEST(Oracle, LiftDragRatioHasInteriorMaximumInAlpha) {
  for (const auto& p : geom::lhs_planforms(geom::ParamBox{}, 100, 11)) {
    double best = -1e300;
    int arg = -1;
    for (int k = 0; k <= 48; ++k) {
      const double alpha = -8.0 + 0.5 * k;
      const double ld = oracle_aero(p, geom::make_condition(10.0, 0.3, 2.0, alpha)).ld;
      if (ld > best) {
        best = ld;
        arg = k;
      }
    }
    EXPECT_GT(arg, 0);
    EXPECT_LT(arg, 48);
  }
}

TEST(Oracle, DragPositiveAndDeterministic) {
  for (const auto& d : design(500, 5)) {
    const auto a = oracle_aero(d.planform, d.condition);
    const auto b = oracle_aero(d.planform, d.condition);
    EXPECT_GT(a.cd, 0.0);
    EXPECT_EQ(a.ld, b.ld);
    EXPECT_EQ(a.cl, b.cl);
    EXPECT_EQ(a.cm, b.cm);
  }
}

TEST(Oracle, LiftSlopeMatchesFiniteWingFormula) {
  const auto p = geom::PlanformParams::from_array(geom::ParamBox{}.midpoint());
  const double ar = geom::aspect_ratio(p);
  const auto a1 = oracle_aero(p, geom::make_condition(0.0, 0.2, 1.0, 2.0));
  const auto a2 = oracle_aero(p, geom::make_condition(0.0, 0.2, 1.0, 3.0));
  const double slope = (a2.cl - a1.cl) / geom::planform_area(p) / geom::deg_to_rad(1.0);
  EXPECT_NEAR(slope, 2.0 * std::numbers::pi * ar / (ar + 2.0), 1e-10);
}

TEST(Oracle, FieldsNeedLoftingCoordinates) {
  auto cloud = geom::synthesize_surface(geom::PlanformParams::from_array(geom::ParamBox{}.midpoint()));
  cloud.xi.clear();
  EXPECT_THROW(oracle_fields(geom::PlanformParams::from_array(geom::ParamBox{}.midpoint()), geom::make_condition(0, 0.2, 1, 2), cloud),
               ArgumentError);
}

// ---- scalers ---------------------------------------------------------------

TEST(Scaler, RoundTrip) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(3.0, 50.0);
  Matrix x(200, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  x.col(4).setConstant(7.5);
  const auto s = Standardizer::fit(x);
  EXPECT_TRUE(s.flagged[4]);
  EXPECT_FALSE(s.flagged[0]);
  const Matrix back = s.denormalize(s.normalize(x));
  EXPECT_LE((back - x).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()));
}

TEST(Scaler, ZeroVarianceChannelKeepsRawError) {
  Matrix x = Matrix::Constant(10, 1, 4.0);
  const auto s = Standardizer::fit(x);
  EXPECT_EQ(s.std(0), 1.0);
  Matrix y = Matrix::Constant(1, 1, 4.25);
  EXPECT_DOUBLE_EQ(s.normalize(y)(0, 0) - s.normalize(x.topRows(1))(0, 0), 0.25);
}

TEST(Scaler, WidthMismatchAndUnfitted) {
  Standardizer empty;
  EXPECT_THROW(empty.normalize(Matrix::Zero(1, 2)), StateError);
  const auto s = Standardizer::fit(Matrix::Random(5, 3));
  EXPECT_THROW(s.normalize(Matrix::Zero(1, 2)), ArgumentError);
}

// ---- FiLM ------------------------------------------------------------------

TEST(Film, IdentityModulationReproducesBaseNetworkExactly) {
  FilmModel m = FilmModel::create(small_film(), 4);
  for (std::size_t l = 0; l < m.gamma.size(); ++l) {
    m.params[m.gamma[l].w].setZero();
    m.params[m.gamma[l].b].setOnes();
    m.params[m.beta[l].w].setZero();
    m.params[m.beta[l].b].setZero();
  }
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  Matrix s(50, kPointFeatures), mu(50, kFilmConditionWidth);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu.data()[i] = n(rng);
  std::vector<Eigen::Index> group(50);
  std::iota(group.begin(), group.end(), Eigen::Index{0});

  Tape t;
  const auto bound = nn::bind(t, m.params, false);
  const Var sv = t.leaf(s);
  const Matrix film = t.value(film_forward(t, bound, m, sv, t.leaf(mu), group));
  const Matrix base = t.value(film_base_forward(t, bound, m, sv));
  EXPECT_TRUE(film == base);
}

TEST(Film, ZeroGammaMakesOutputIndependentOfPoint) {
  FilmModel m = FilmModel::create(small_film(), 5);
  for (std::size_t l = 0; l < m.gamma.size(); ++l) {
    m.params[m.gamma[l].w].setZero();
    m.params[m.gamma[l].b].setZero();
  }
  const RowVector mu = RowVector::LinSpaced(kFilmConditionWidth, -1.0, 1.0);
  const auto ref = film_forward(m, RowVector::Zero(kPointFeatures), mu);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int k = 0; k < 20; ++k) {
    RowVector s(kPointFeatures);
    for (auto& v : s) v = n(rng);
    EXPECT_EQ(film_forward(m, s, mu), ref);
  }
}

TEST(Film, DifferentConditionsGiveDifferentOutputs) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const FilmModel m = FilmModel::create(small_film(), seed);
    RowVector s(kPointFeatures), a(kFilmConditionWidth), b(kFilmConditionWidth);
    for (auto& v : s) v = n(rng);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    EXPECT_NE(film_forward(m, s, a), film_forward(m, s, b)) << "seed " << seed;
  }
}

TEST(Film, WrongWidthsRejected) {
  const FilmModel m = FilmModel::create(small_film(), 1);
  EXPECT_THROW(film_forward(m, RowVector::Zero(5), RowVector::Zero(kFilmConditionWidth)), ArgumentError);
  EXPECT_THROW(film_forward(m, RowVector::Zero(kPointFeatures), RowVector::Zero(13)), ArgumentError);
}

TEST(Film, LossInvariantToPointPermutation) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Matrix pred(300, 3), tgt(300, 3);
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    pred.data()[i] = n(rng);
    tgt.data()[i] = n(rng);
  }
  const double ref = field_loss(pred, tgt);
  std::vector<Eigen::Index> perm(300);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix pp(300, 3), tp(300, 3);
    for (Eigen::Index i = 0; i < 300; ++i) {
      pp.row(i) = pred.row(perm[static_cast<std::size_t>(i)]);
      tp.row(i) = tgt.row(perm[static_cast<std::size_t>(i)]);
    }
    EXPECT_NEAR(field_loss(pp, tp), ref, 1e-12 * ref);
  }
}

TEST(Film, TrainingRejectsTooFewCases) {
  EXPECT_THROW(train_field_surrogate({}, small_film(), {}), ArgumentError);
  EXPECT_THROW(train_field_surrogate(field_cases(1, 1), small_film(), {}), ArgumentError);
}

TEST(Film, TrainingReducesLoss) {
  FilmTrainConfig tc;
  tc.max_epochs = 40;
  tc.groups_per_batch = 16;
  tc.patience = 1000;
  tc.lr = 2e-3;
  const auto r = train_field_surrogate(field_cases(48, 21, 6), small_film(), tc);
  ASSERT_EQ(r.history.train_loss.size(), 40u);
  EXPECT_LT(r.history.train_loss.back(), 0.5 * r.history.train_loss.front());
  EXPECT_GT(r.history.best_epoch, 0u);
}

TEST(Film, ConstantTargetsNormalizeToZero) {
  auto cases = field_cases(8, 2, 4);
  for (auto& c : cases) {
    std::fill(c.cloud.cp.begin(), c.cloud.cp.end(), 0.3);
    std::fill(c.cloud.cfx.begin(), c.cloud.cfx.end(), 0.004);
    std::fill(c.cloud.cfz.begin(), c.cloud.cfz.end(), -0.001);
  }
  FilmTrainConfig tc;
  tc.max_epochs = 60;
  tc.lr = 2e-3;
  const auto r = train_field_surrogate(cases, small_film(), tc);
  for (bool f : r.scaler.outputs.flagged) EXPECT_TRUE(f);
  EXPECT_LT(r.history.val_loss[r.history.best_epoch - 1], 1e-3);
  const auto& c = cases[r.validation_cases[0]];
  const Matrix pred = predict_fields(r.model, r.scaler, c.planform, c.condition, c.cloud);
  EXPECT_NEAR(pred(0, 0), 0.3, 0.05);
}

// Pilot threshold: pooled validation relative L2 on Cp for a 256-case oracle run.
TEST(Film, OracleRunCpRelativeL2Below15Percent) {
  FilmConfig cfg;
  cfg.width = 64;
  cfg.hyper_width = 32;
  FilmTrainConfig tc;
  tc.max_epochs = 90;
  tc.groups_per_batch = 32;
  tc.lr = 2e-3;
  tc.seed = 8;
  const auto cases = field_cases(256, 31);
  const auto r = train_field_surrogate(cases, cfg, tc);
  double num = 0.0, den = 0.0;
  for (auto i : r.validation_cases) {
    const auto& c = cases[i];
    const Matrix pred = predict_fields(r.model, r.scaler, c.planform, c.condition, c.cloud);
    const Matrix truth = field_targets(c.cloud);
    num += (pred.col(0) - truth.col(0)).squaredNorm();
    den += truth.col(0).squaredNorm();
  }
  const double rel = std::sqrt(num / den);
  RecordProperty("cp_rel_l2", std::to_string(rel));
  EXPECT_LT(rel, 0.15);
}

// ---- L/D surrogate --------------------------------------------------------

TEST(Ld, GradientMatchesFiniteDifferences) {
  const auto pts = design(50, 13);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const LdSurrogate m = untrained_ld(100 + i);
    const auto& p = pts[i].planform;
    const auto& fc = pts[i].condition;
    const auto pred = predict_ld(m, p, fc);
    const auto base = p.to_array();
    for (std::size_t j = 0; j < geom::kNumParams; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(base[j]));
      auto up = base, dn = base;
      up[j] += h;
      dn[j] -= h;
      const double fd = (predict_ld(m, geom::PlanformParams::from_array(up), fc).value -
                         predict_ld(m, geom::PlanformParams::from_array(dn), fc).value) /
                        (2.0 * h);
      const double g = pred.gradient[j];
      EXPECT_LE(std::abs(fd - g), 1e-5 * std::max(1.0, std::abs(g))) << "case " << i << " param " << j;
    }
  }
}

TEST(Ld, BatchOrderInvariant) {
  const LdSurrogate m = untrained_ld(4);
  const auto pts = geom::lhs_planforms(geom::ParamBox{}, 30, 8);
  const auto fc = geom::make_condition(20.0, 0.3, 3.0, 4.0);
  Matrix rows(30, geom::kNumParams), rev(30, geom::kNumParams);
  for (Eigen::Index i = 0; i < 30; ++i) {
    rows.row(i) = planform_row(pts[static_cast<std::size_t>(i)]);
    rev.row(29 - i) = rows.row(i);
  }
  const auto a = predict_ld_batch(m, rows, fc);
  const auto b = predict_ld_batch(m, rev, fc);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_NEAR(a[i], b[29 - i], 1e-12 * std::max(1.0, std::abs(a[i])));
    EXPECT_NEAR(a[i], predict_ld(m, pts[i], fc).value, 1e-12 * std::max(1.0, std::abs(a[i])));
  }
  EXPECT_THROW(predict_ld_batch(m, Matrix::Zero(2, 8), fc), ArgumentError);
}

TEST(Ld, TrainedModelFollowsOracleInAlpha) {
  LdTrainConfig tc;
  tc.max_epochs = 150;
  tc.seed = 1;
  const auto r = train_ld_surrogate(ld_samples(2000, 17), LdConfig{}, tc);
  EXPECT_LT(r.history.val_loss[r.history.best_epoch - 1], r.history.val_loss.front());
  int agree = 0;
  const auto pts = geom::lhs_planforms(geom::ParamBox{}, 50, 23);
  for (const auto& p : pts) {
    const auto lo = geom::make_condition(10.0, 0.3, 2.0, 0.0);
    const auto hi = geom::make_condition(10.0, 0.3, 2.0, 4.0);
    const double d_oracle = oracle_aero(p, hi).ld - oracle_aero(p, lo).ld;
    const double d_model = predict_ld(r.model, p, hi).value - predict_ld(r.model, p, lo).value;
    agree += (d_oracle > 0) == (d_model > 0);
  }
  EXPECT_EQ(agree, 50);
}

TEST(Ld, RelinkRejectsWrongShapes) {
  LdSurrogate m = untrained_ld(1);
  m.params[0] = Matrix::Zero(3, 3);
  EXPECT_THROW(m.relink(), SchemaError);
}
