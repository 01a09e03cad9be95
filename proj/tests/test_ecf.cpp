#include <gtest/gtest.h>

#include "rpmix/ecf.hpp"
#include "rpmix/simulate.hpp"

#include <cmath>

using namespace rpmix;

namespace {

UnivariateMixture mix2(Family fam, double w1, double l1, double l2, double s1, double s2) {
  UnivariateMixture m{fam, Vector(2), Vector(2), Vector(2)};
  m.weights << w1, 1.0 - w1;
  m.locations << l1, l2;
  m.scales2 << s1, s2;
  return m;
}

std::vector<double> draw(const UnivariateMixture &m, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_univariate(m, n, rng);
}

} // namespace

TEST(EmpiricalCf, ZerosGiveUnitRealPart) {
  const std::vector<double> y(7, 0.0);
  const Vector z = empirical_cf(y, EcfGrid(0.3, 10));
  EXPECT_EQ(z.head(10), Vector::Ones(10));
  EXPECT_EQ(z.tail(10), Vector::Zero(10));
}

TEST(EmpiricalCf, SymmetricPairHasNoImaginaryPart) {
  const std::vector<double> y{1.7, -1.7};
  const EcfGrid g(0.25, 12);
  const Vector z = empirical_cf(y, g);
  for (int l = 0; l < 12; ++l) {
    EXPECT_NEAR(z[l], std::cos(g.at(l) * 1.7), 1e-15);
    EXPECT_NEAR(z[12 + l], 0.0, 1e-15);
  }
}

TEST(EmpiricalCf, StandardNormalAtOne) {
  Rng rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> y(10000);
  for (auto &v : y) v = n(rng);
  const Vector z = empirical_cf(y, EcfGrid(1.0, 1));
  EXPECT_NEAR(z[0], std::exp(-0.5), 0.05);
  EXPECT_NEAR(z[1], 0.0, 0.05);
}

TEST(EmpiricalCf, ConcentrationBand) {
  const UnivariateMixture truth = mix2(Family::student_t(3), 0.4, -1.0, 2.0, 1.0, 0.5);
  const std::size_t n = 400;
  const EcfGrid g(0.1, 20);
  const Vector zt = model_cf(truth, g);
  int inside = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Vector ze = empirical_cf(draw(truth, n, s), g);
    inside += (ze - zt).cwiseAbs().maxCoeff() < 4.0 / std::sqrt(static_cast<double>(n));
  }
  EXPECT_GE(inside, 190);
}

TEST(ModelCf, ClosedFormSpecialCases) {
  const UnivariateMixture g{Family::gaussian(), Vector::Ones(1), Vector::Zero(1), Vector::Ones(1)};
  const Vector zg = model_cf(g, EcfGrid(1.0, 1));
  EXPECT_DOUBLE_EQ(zg[0], std::exp(-0.5));
  EXPECT_DOUBLE_EQ(zg[1], 0.0);
  UnivariateMixture c = g;
  c.family = Family::student_t(1);
  const Vector zc = model_cf(c, EcfGrid(2.0, 1));
  EXPECT_NEAR(zc[0], std::exp(-2.0), 1e-15);
  EXPECT_DOUBLE_EQ(zc[1], 0.0);
}

TEST(ModelCf, SymmetricMixtureRotatesToReal) {
  const double c = 1.3;
  for (Family fam : {Family::gaussian(), Family::student_t(4)}) {
    UnivariateMixture m{fam, Vector(3), Vector(3), Vector(3)};
    m.weights << 0.25, 0.5, 0.25;
    m.locations << c - 2.0, c, c + 2.0;
    m.scales2 << 0.7, 1.5, 0.7;
    const EcfGrid grid(0.2, 25);
    const Vector z = model_cf(m, grid);
    for (int l = 0; l < 25; ++l) {
      const double t = grid.at(l);
      EXPECT_NEAR(z[25 + l] * std::cos(t * c) - z[l] * std::sin(t * c), 0.0, 1e-10);
    }
  }
}

TEST(Criterion, NonNegativeAndZeroAtOwnCf) {
  const UnivariateMixture m = mix2(Family::gaussian(), 0.3, 0.0, 3.0, 1.0, 0.4);
  const EcfGrid g(0.15, 20);
  EXPECT_DOUBLE_EQ(ecf_criterion(m, model_cf(m, g), g, WeightMatrix::identity()), 0.0);
  const Vector target = empirical_cf(draw(m, 300, 1), g);
  EXPECT_GT(ecf_criterion(m, target, g, WeightMatrix::identity()), 0.0);
  EXPECT_GT(ecf_criterion(m, target, g, WeightMatrix::damped(g)), 0.0);
}

TEST(Criterion, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const EcfGrid g(0.12, 20);
  int checked = 0;
  for (Family fam : {Family::gaussian(), Family::student_t(1), Family::student_t(4)}) {
    const UnivariateMixture truth = mix2(fam, 0.35, -1.0, 2.0, 0.8, 1.2);
    const Vector target = empirical_cf(draw(truth, 500, 3), g);
    for (bool free : {true, false}) {
      const EcfObjective obj(fam, g, target, WeightMatrix::damped(g).as_diagonal(g.points), truth, free);
      for (int rep = 0; rep < 20; ++rep) {
        Vector theta = obj.pack(truth);
        for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.5 * u(rng);
        Vector grad(theta.size());
        obj(theta, &grad);
        Vector fd(theta.size());
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
          Vector a = theta, b = theta;
          a[i] += 1e-6;
          b[i] -= 1e-6;
          fd[i] = (obj(a) - obj(b)) / 2e-6;
        }
        EXPECT_LT((grad - fd).norm(), 1e-5 * grad.norm()) << fam.name() << " free=" << free;
        ++checked;
      }
    }
  }
  EXPECT_EQ(checked, 120);
}

TEST(InitStep, SeparatedClusters) {
  std::vector<double> y;
  Rng rng(2);
  std::uniform_real_distribution<double> j(-1e-3, 1e-3);
  for (int i = 0; i < 50; ++i) y.push_back(j(rng));
  for (int i = 0; i < 50; ++i) y.push_back(10.0 + j(rng));
  const InitResult r = init_step(y, 2, Family::gaussian(), 5);
  EXPECT_TRUE(r.screen_passed);
  EXPECT_NEAR(r.mixture.locations[0], 0.0, 1e-3);
  EXPECT_NEAR(r.mixture.locations[1], 10.0, 1e-3);
  EXPECT_NEAR(r.mixture.weights[0], 0.5, 1e-6);
  EXPECT_NEAR(r.mixture.weights[1], 0.5, 1e-6);
  EXPECT_EQ(r.cluster_sizes, (std::vector<std::size_t>{50, 50}));
}

TEST(InitStep, ConstantDataFailsScreen) {
  const std::vector<double> y(100, 3.25);
  EXPECT_FALSE(init_step(y, 2, Family::gaussian(), 1).screen_passed);
  EXPECT_FALSE(init_step(y, 1, Family::gaussian(), 1).screen_passed);
}

TEST(InitStep, ExampleOneFirstAxisPassesScreen) {
  const MixtureModel m = two_t_model(2.0);
  Vector e1 = Vector::Zero(2);
  e1[0] = 1.0;
  int passed = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto y = project_sample(sample(m, 200, s).data, e1);
    passed += init_step(y, 2, m.family(), derive_seed(s, 1)).screen_passed;
  }
  EXPECT_GE(passed, 95);
}

TEST(InitStep, RejectsTooFewPoints) {
  EXPECT_THROW(init_step(std::vector<double>(15, 1.0), 2, Family::gaussian(), 0), InvalidArgument);
}

TEST(FitStep1, RecoversWellSeparatedGaussians) {
  const UnivariateMixture truth = mix2(Family::gaussian(), 0.3, 0.0, 4.0, 1.0, 1.0);
  const auto y = draw(truth, 2000, 21);
  const EcfGrid g = EcfGrid::scale_adaptive(y);
  const EcfFitResult r = fit_step1(y, 2, Family::gaussian(), g, WeightMatrix::identity(), 4);
  ASSERT_TRUE(r.screen_passed);
  EXPECT_NEAR(r.fitted.weights[0], 0.3, 0.05);
  EXPECT_NEAR(r.fitted.weights[1], 0.7, 0.05);
  EXPECT_NEAR(r.fitted.locations[0], 0.0, 0.15);
  EXPECT_NEAR(r.fitted.locations[1], 4.0, 0.15);
  EXPECT_GE(r.criterion, 0.0);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
}

TEST(FitStep1, SingleComponentTracksSampleMean) {
  const UnivariateMixture truth{Family::gaussian(), Vector::Ones(1), Vector::Constant(1, 2.5),
                                Vector::Constant(1, 4.0)};
  const auto y = draw(truth, 1000, 6);
  const EcfFitResult r =
      fit_step1(y, 1, Family::gaussian(), EcfGrid::scale_adaptive(y), WeightMatrix::identity(), 1);
  EXPECT_DOUBLE_EQ(r.fitted.weights[0], 1.0);
  EXPECT_NEAR(r.fitted.locations[0], mean_of(y), 3.0 * 2.0 / std::sqrt(1000.0));
}

TEST(FitStep1, StableAcrossInitSeeds) {
  const UnivariateMixture truth = mix2(Family::gaussian(), 0.4, -3.0, 3.0, 1.0, 1.0);
  const auto y = draw(truth, 1500, 9);
  const EcfGrid g = EcfGrid::scale_adaptive(y);
  const EcfFitResult a = fit_step1(y, 2, Family::gaussian(), g, WeightMatrix::identity(), 100);
  const EcfFitResult b = fit_step1(y, 2, Family::gaussian(), g, WeightMatrix::identity(), 200);
  ASSERT_EQ(a.screen_passed, b.screen_passed);
  EXPECT_NEAR(a.criterion, b.criterion, 1e-6);
}

TEST(FitStep1, StudentTTraceIsMonotone) {
  const UnivariateMixture truth = mix2(Family::student_t(4), 0.3, 0.0, 3.0, 1.0, 0.5);
  const auto y = draw(truth, 800, 33);
  const EcfFitResult r =
      fit_step1(y, 2, truth.family, EcfGrid::scale_adaptive(y), WeightMatrix::identity(), 2);
  ASSERT_TRUE(r.screen_passed);
  ASSERT_FALSE(r.trace.empty());
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
  EXPECT_NEAR(r.criterion, r.trace.back(), 1e-15);
  EXPECT_LE(r.evaluations, 3 * 500 + 3);
}

TEST(FitStep1, ScreenFailureIsReported) {
  const std::vector<double> y(60, 1.0);
  const EcfFitResult r = fit_step1(y, 2, Family::gaussian(), EcfGrid(0.1, 20), WeightMatrix::identity(), 0);
  EXPECT_FALSE(r.screen_passed);
}

TEST(FitStep1, RejectsCoarseGrid) {
  const std::vector<double> y(60, 1.0);
  EXPECT_THROW(fit_step1(y, 3, Family::gaussian(), EcfGrid(0.1, 3), WeightMatrix::identity(), 0),
               InvalidArgument);
}

TEST(FitStep2, KnownWeightsImproveLocations) {
  const UnivariateMixture truth = mix2(Family::gaussian(), 0.3, 0.0, 2.5, 1.0, 1.0);
  int better = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto y = draw(truth, 300, 1000 + s);
    const EcfGrid g = EcfGrid::scale_adaptive(y);
    const EcfFitResult r1 = fit_step1(y, 2, truth.family, g, WeightMatrix::identity(), s);
    const EcfFitResult r2 = fit_step2(y, truth.family, g, WeightMatrix::identity(), truth.weights, r1.fitted);
    const double e1 = (r1.fitted.locations - truth.locations).cwiseAbs().sum();
    const double e2 = (r2.fitted.locations - truth.locations).cwiseAbs().sum();
    better += e2 <= e1;
  }
  EXPECT_GE(better, 60);
}

TEST(FitStep2, SingleComponentEqualsStep1) {
  const UnivariateMixture truth{Family::student_t(3), Vector::Ones(1), Vector::Constant(1, -1.0),
                                Vector::Constant(1, 2.0)};
  const auto y = draw(truth, 500, 4);
  const EcfGrid g = EcfGrid::scale_adaptive(y);
  const EcfFitResult r1 = fit_step1(y, 1, truth.family, g, WeightMatrix::identity(), 8);
  const EcfFitResult r2 = fit_step2(y, truth.family, g, WeightMatrix::identity(), Vector::Ones(1), r1.initial);
  EXPECT_NEAR(r2.fitted.locations[0], r1.fitted.locations[0], 1e-10);
  EXPECT_NEAR(r2.fitted.scales2[0], r1.fitted.scales2[0], 1e-10);
  EXPECT_NEAR(r2.criterion, r1.criterion, 1e-10);
}

TEST(FitStep2, ZeroWeightComponentIsInert) {
  const UnivariateMixture truth{Family::gaussian(), Vector::Ones(1), Vector::Constant(1, 1.0),
                                Vector::Constant(1, 1.0)};
  const auto y = draw(truth, 400, 5);
  const EcfGrid g = EcfGrid::scale_adaptive(y);
  Vector w(2);
  w << 1.0, 0.0;
  UnivariateMixture init = mix2(Family::gaussian(), 1.0, 0.5, 7.0, 2.0, 3.3);
  init.weights = w;
  const double q = ecf_criterion(init, empirical_cf(y, g), g, WeightMatrix::identity());
  UnivariateMixture moved = init;
  moved.locations[1] = -40.0;
  moved.scales2[1] = 0.01;
  EXPECT_DOUBLE_EQ(ecf_criterion(moved, empirical_cf(y, g), g, WeightMatrix::identity()), q);
  const EcfFitResult r = fit_step2(y, Family::gaussian(), g, WeightMatrix::identity(), w, init);
  EXPECT_DOUBLE_EQ(r.fitted.scales2[1], 3.3);
  EXPECT_DOUBLE_EQ(r.fitted.locations[1], 7.0);
  EXPECT_EQ(r.fitted.weights, w);
}

TEST(Grid, ScaleAdaptiveSpan) {
  const std::vector<double> y{-2.0, 0.0, 2.0, 4.0};
  const EcfGrid g = EcfGrid::scale_adaptive(y, 20);
  EXPECT_NEAR(g.tau * g.points * sample_sd(y), 4.0, 1e-12);
  EXPECT_THROW(EcfGrid(0.0, 5), InvalidArgument);
  EXPECT_THROW(EcfGrid(0.1, 0), InvalidArgument);
}

TEST(Spread, RobustOnlyForVeryHeavyTails) {
  std::vector<double> y(1001);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i);
  y.back() = 1e9;
  EXPECT_DOUBLE_EQ(spread(y, Family::gaussian()), sample_sd(y));
  EXPECT_DOUBLE_EQ(spread(y, Family::student_t(4)), sample_sd(y));
  // Interquartile range 500 over 1.349.
  EXPECT_NEAR(spread(y, Family::student_t(2)), 500.0 / 1.349, 1.0);
}
