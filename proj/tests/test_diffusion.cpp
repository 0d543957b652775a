#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "bwb/diffusion.hpp"
#include "bwb/surrogate/oracle.hpp"

using namespace bwb;
using namespace bwb::diffusion;

namespace {

RowVector random_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RowVector x(kGeomDim);
  for (auto& v : x) v = u(rng);
  return x;
}

DenoiserConfig tiny(int T) {
  DenoiserConfig c;
  c.width = 32;
  c.depth = 2;
  c.time_dim = 16;
  c.cond_dim = 16;
  c.T = T;
  return c;
}

std::vector<DiffusionSample> oracle_pairs(std::size_t n, std::uint64_t seed) {
  std::vector<DiffusionSample> out;
  for (const auto& d : geom::lhs_design(geom::ParamBox{}, geom::ConditionRanges{}, n, seed)) {
    out.push_back({d.planform, ConditionVector::from(d.condition, surrogate::oracle_aero(d.planform, d.condition).ld)});
  }
  return out;
}

// Untrained network with scalers fitted, for sampler plumbing checks.
DenoiserModel plumbing_model(int T, std::uint64_t seed) {
  DenoiserModel m = DenoiserModel::create(tiny(T), seed);
  m.geom_scaler = box_scaler(m.box);
  Matrix cond(16, kConditionDim);
  const auto pairs = oracle_pairs(16, seed + 1);
  for (Eigen::Index i = 0; i < 16; ++i) cond.row(i) = pairs[static_cast<std::size_t>(i)].condition.row();
  m.cond_scaler = Standardizer::fit(cond);
  return m;
}

const ConditionVector kMid{20.0, 6.5, 0.3, 4.0, 10.0};

}  // namespace

// ---- schedule ----------------------------------------------------------------

TEST(Schedule, RejectsShortHorizon) {
  EXPECT_THROW(cosine_schedule(1), ArgumentError);
  EXPECT_NO_THROW(cosine_schedule(2));
}

TEST(Schedule, Invariants) {
  for (int T : {2, 10, 50, 200, 1000}) {
    const auto sc = cosine_schedule(T);
    ASSERT_EQ(sc.beta.size(), static_cast<std::size_t>(T));
    EXPECT_LE(sc.alpha_bar[0], 1.0);
    for (int i = 0; i < T; ++i) {
      const auto k = static_cast<std::size_t>(i);
      EXPECT_GT(sc.beta[k], 0.0);
      EXPECT_LT(sc.beta[k], 1.0);
      if (i > 0) {
        EXPECT_LT(sc.alpha_bar[k], sc.alpha_bar[k - 1]);
        EXPECT_GT(sc.sigma2(i), 0.0);
        EXPECT_LE(sc.sigma2(i), sc.beta[k]);
      }
    }
    EXPECT_EQ(sc.sigma2(0), 0.0);
  }
}

TEST(Schedule, CumulativeProductRoundTrip) {
  const auto sc = cosine_schedule(1000);
  double prod = 1.0;
  for (std::size_t i = 0; i < sc.beta.size(); ++i) {
    prod *= 1.0 - sc.beta[i];
    EXPECT_NEAR(sc.alpha_bar[i], prod, 1e-12);
  }
}

TEST(Schedule, ClosedFormEndpoints) {
  const auto sc = cosine_schedule(1000);
  EXPECT_LT(sc.alpha_bar.back(), 0.01);
  // First level straight from the closed form: f(1)/f(0).
  const double s = 0.008;
  auto f = [&](double t) { return std::pow(std::cos((t / 1000.0 + s) / (1.0 + s) * std::numbers::pi / 2.0), 2); };
  EXPECT_NEAR(sc.alpha_bar[0], f(1.0) / f(0.0), 1e-15);
  EXPECT_NEAR(sc.alpha_bar[499], f(500.0) / f(0.0), 1e-9);
}

// ---- forward noising ---------------------------------------------------------

TEST(ForwardNoise, ZeroNoiseScalesSignal) {
  const auto sc = cosine_schedule(100);
  std::mt19937_64 rng(1);
  const RowVector x0 = random_unit(rng);
  for (int i : {0, 17, 99}) {
    const RowVector xt = forward_noise(x0, i, RowVector::Zero(kGeomDim), sc);
    EXPECT_LE((xt - std::sqrt(sc.alpha_bar[static_cast<std::size_t>(i)]) * x0).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(ForwardNoise, LastStepIsAlmostPureNoise) {
  const auto sc = cosine_schedule(1000);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    const RowVector x0 = random_unit(rng);
    RowVector eps(kGeomDim);
    for (auto& v : eps) v = n(rng);
    const RowVector xt = forward_noise(x0, 999, eps, sc);
    const double resid = (xt - std::sqrt(1.0 - sc.alpha_bar.back()) * eps).norm();
    EXPECT_LT(resid, 0.1 * x0.norm());
  }
}

TEST(ForwardNoise, MonteCarloMoments) {
  const auto sc = cosine_schedule(1000);
  std::mt19937_64 rng(3);
  const RowVector x0 = random_unit(rng);
  const int i = 400;
  const double ab = sc.alpha_bar[i];
  const Eigen::Index n = 100000;
  std::normal_distribution<double> normal;
  Matrix eps(n, kGeomDim);
  for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = normal(rng);
  const std::vector<int> steps(static_cast<std::size_t>(n), i);
  const Matrix xt = forward_noise(x0.replicate(n, 1), steps, eps, sc);
  const RowVector mean = xt.colwise().mean();
  const double band = 3.0 * std::sqrt((1.0 - ab) / static_cast<double>(n));
  for (Eigen::Index j = 0; j < kGeomDim; ++j) {
    EXPECT_NEAR(mean(j), std::sqrt(ab) * x0(j), band) << "coord " << j;
    const double var = (xt.col(j).array() - mean(j)).square().sum() / static_cast<double>(n - 1);
    EXPECT_NEAR(var / (1.0 - ab), 1.0, 0.05) << "coord " << j;
  }
}

TEST(ForwardNoise, StepOutOfRange) {
  const auto sc = cosine_schedule(10);
  const RowVector z = RowVector::Zero(kGeomDim);
  EXPECT_THROW(forward_noise(z, 10, z, sc), ArgumentError);
  EXPECT_THROW(forward_noise(z, -1, z, sc), ArgumentError);
}

// ---- reverse process -----------------------------------------------------------

TEST(Reverse, TrueNoiseRecoversSignal) {
  const auto sc = cosine_schedule(1000);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  for (int i : {0, 1, 100, 500, 900, 999}) {
    const RowVector x0 = random_unit(rng);
    RowVector eps(kGeomDim);
    for (auto& v : eps) v = n(rng);
    const Matrix xt = forward_noise(x0, i, eps, sc);
    const auto r = reverse_mean(sc, i, xt, eps, std::nullopt);
    EXPECT_LE((r.x0_hat - x0).cwiseAbs().maxCoeff(), 1e-10) << "step " << i;
  }
}

TEST(Reverse, FinalStepAddsNoNoise) {
  const auto sc = cosine_schedule(5);
  Matrix last_input;
  Matrix last_eps;
  auto predict = [&](const Matrix& x, int i) {
    Matrix e = 0.1 * x;
    if (i == 0) {
      last_input = x;
      last_eps = e;
    }
    return e;
  };
  const Matrix out = sample_scaled(sc, predict, 6, 11);
  const Matrix expect = reverse_mean(sc, 0, last_input, last_eps, kDefaultX0Clamp).mean;
  EXPECT_TRUE(out == expect);
}

TEST(Reverse, ChainsAreIndependentOfBatchSize) {
  const auto sc = cosine_schedule(20);
  auto predict = [](const Matrix& x, int) { return Matrix(0.5 * x); };
  const Matrix a = sample_scaled(sc, predict, 3, 99);
  const Matrix b = sample_scaled(sc, predict, 7, 99);
  EXPECT_TRUE(a == b.topRows(3));
  const Matrix c = sample_scaled(sc, predict, 3, 99);
  EXPECT_TRUE(a == c);
}

TEST(Reverse, PredictorShapeChecked) {
  const auto sc = cosine_schedule(4);
  auto bad = [](const Matrix& x, int) { return Matrix(x.leftCols(3)); };
  EXPECT_THROW(sample_scaled(sc, bad, 2, 0), ArgumentError);
}

// ---- sampler over the denoiser ----------------------------------------------------

TEST(Sampler, RequiresFittedScalers) {
  const DenoiserModel m = DenoiserModel::create(tiny(10), 0);
  EXPECT_THROW(sample(m, kMid, 2, 0), StateError);
}

TEST(Sampler, DistinctReproducibleAndInsideBox) {
  const DenoiserModel m = plumbing_model(10, 5);
  const auto a = sample(m, kMid, 64, 123);
  const auto b = sample(m, kMid, 64, 123);
  std::set<std::array<double, geom::kNumParams>> seen;
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k], b[k]);
    EXPECT_TRUE(m.box.contains(a[k]));
    seen.insert(a[k].to_array());
  }
  EXPECT_EQ(seen.size(), a.size());
}

TEST(Sampler, TenThousandSamplesStayInBox) {
  const DenoiserModel m = plumbing_model(8, 6);
  const auto out = sample(m, kMid, 10000, 7);
  ASSERT_EQ(out.size(), 10000u);
  for (const auto& p : out) ASSERT_TRUE(m.box.contains(p));
}

TEST(Sampler, EmbeddingShapeIndependentOfK) {
  const DenoiserModel m = plumbing_model(10, 8);
  for (std::size_t K : {1u, 5u, 33u}) {
    const Matrix x = Matrix::Zero(static_cast<Eigen::Index>(K), kGeomDim);
    const std::vector<int> steps(K, 3);
    const Matrix cond = Matrix::Zero(static_cast<Eigen::Index>(K), kConditionDim);
    const Matrix e = predict_eps(m, x, steps, cond);
    EXPECT_EQ(e.rows(), static_cast<Eigen::Index>(K));
    EXPECT_EQ(e.cols(), kGeomDim);
    for (Eigen::Index k = 1; k < e.rows(); ++k) EXPECT_TRUE(e.row(k) == e.row(0));
  }
}

// ---- training --------------------------------------------------------------------

TEST(Training, EmptyDatasetRejected) {
  EXPECT_THROW(train_denoiser({}, tiny(10), {}), ArgumentError);
}

TEST(Training, ZeroPredictorLossIsDimension) {
  DenoiserModel m = plumbing_model(100, 1);
  for (std::size_t i = 0; i < m.params.size(); ++i) m.params[i].setZero();
  const auto ev = evaluate_denoiser(m, oracle_pairs(500, 2), 3, 40);
  EXPECT_EQ(ev.model_loss, ev.zero_loss);
  EXPECT_NEAR(ev.zero_loss, 9.0, 0.1);
}

TEST(Training, BeatsZeroBaselineOnHeldOut) {
  DiffusionTrainConfig tc;
  tc.epochs = 30;
  tc.lr = 2e-3;
  tc.seed = 4;
  const auto r = train_denoiser(oracle_pairs(1000, 9), tiny(100), tc);
  const auto ev = evaluate_denoiser(r.model, oracle_pairs(200, 10), 5, 8);
  EXPECT_LT(ev.model_loss, ev.zero_loss);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Training, SingleDatapointOverfit) {
  const auto one = oracle_pairs(1, 12);
  const std::vector<DiffusionSample> data(64, one[0]);
  DiffusionTrainConfig tc;
  tc.epochs = 10000;
  tc.max_steps = 2000;
  tc.lr = 2e-3;
  tc.weight_decay = 0.0;
  DenoiserConfig cfg = tiny(100);
  cfg.width = 64;
  const auto r = train_denoiser(data, cfg, tc);
  const auto ev = evaluate_denoiser(r.model, one, 13, 512);
  RecordProperty("overfit_loss", std::to_string(ev.model_loss));
  EXPECT_LT(ev.model_loss, 0.1);
}

TEST(Training, ConditionalSamplesStayOffTheFaces) {
  DiffusionTrainConfig tc;
  tc.epochs = 40;
  tc.lr = 2e-3;
  tc.seed = 2;
  DenoiserConfig cfg = tiny(100);
  cfg.width = 64;
  const auto r = train_denoiser(oracle_pairs(2000, 14), cfg, tc);
  const auto out = sample(r.model, kMid, 1000, 15);
  const auto& box = r.model.box;
  for (std::size_t j = 0; j < geom::kNumParams; ++j) {
    double mean = 0.0;
    std::size_t on_lo = 0, on_hi = 0;
    for (const auto& p : out) {
      const double v = p.to_array()[j];
      mean += v;
      on_lo += v == box.lo[j];
      on_hi += v == box.hi[j];
    }
    mean /= static_cast<double>(out.size());
    EXPECT_GT(mean, box.lo[j]);
    EXPECT_LT(mean, box.hi[j]);
    EXPECT_LE(on_lo, 200u) << geom::kParamNames[j];
    EXPECT_LE(on_hi, 200u) << geom::kParamNames[j];
  }
}
