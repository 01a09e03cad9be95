#include <gtest/gtest.h>

#include "rpmix/agreement.hpp"
#include "rpmix/simulate.hpp"

#include <algorithm>
#include <cmath>

using namespace rpmix;

namespace {

// sup |F_a - F_b| evaluated at every pooled point, no merging.
double brute_ks(const std::vector<double> &a, const std::vector<double> &b) {
  auto cdf = [](const std::vector<double> &v, double t) {
    double c = 0.0;
    for (double x : v) c += x <= t;
    return c / static_cast<double>(v.size());
  };
  double best = 0.0;
  for (const auto *v : {&a, &b})
    for (double t : *v) best = std::max(best, std::abs(cdf(a, t) - cdf(b, t)));
  return best;
}

Matrix shuffled_rows(const Matrix &x, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

} // namespace

TEST(Ks, SmallCases) {
  EXPECT_DOUBLE_EQ(ks_statistic({1.0, 2.0, 2.0}, {2.0, 1.0, 2.0}), 0.0);
  EXPECT_DOUBLE_EQ(ks_statistic({0.0}, {1.0}), 1.0);
  EXPECT_DOUBLE_EQ(ks_statistic({1, 2, 3, 4}, {3, 4, 5, 6}), 0.5);
  EXPECT_THROW(ks_statistic({}, {1.0}), InvalidArgument);
}

TEST(Ks, MatchesBruteForceWithTies) {
  Rng rng(3);
  std::uniform_int_distribution<int> u(0, 12);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<double> a(static_cast<std::size_t>(1 + rep % 17)), b(static_cast<std::size_t>(1 + rep % 11));
    for (auto &x : a) x = rep % 2 ? u(rng) : z(rng);
    for (auto &x : b) x = rep % 2 ? u(rng) : z(rng) + 0.3;
    EXPECT_DOUBLE_EQ(ks_statistic(a, b), brute_ks(a, b));
  }
}

TEST(Agree, IdenticalSamplesGiveZero) {
  const Matrix x = sample(agreement_models(0, 0, 0).first, 300, 1).data;
  const AgreementResult r = agree_two_samples(x, x, sample_directions(2, 40, 2));
  EXPECT_EQ(r.d_k, 0.0);
  EXPECT_EQ(r.ma_k, 0.0);
  EXPECT_EQ(r.ks.size(), 40u);
}

TEST(Agree, NullScaleAtZeroPerturbation) {
  const auto [f1, f2] = agreement_models(0, 0, 0);
  std::vector<double> d;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const Matrix x = sample(f1, 500, derive_seed(s, 1)).data;
    const Matrix y = sample(f2, 500, derive_seed(s, 2)).data;
    const AgreementResult r = agree_two_samples(x, y, sample_directions(2, 100, derive_seed(s, 3)));
    EXPECT_LE(r.ma_k, r.d_k);
    EXPECT_GE(r.ma_k, 0.0);
    EXPECT_LE(r.d_k, 1.0);
    d.push_back(r.d_k);
  }
  EXPECT_LT(median_of(d), 0.12);
}

TEST(Agree, LocationShiftIsMonotone) {
  double prev = -1.0;
  for (double eta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const auto [f1, f2] = agreement_models(eta, 0, 0);
    std::vector<double> d;
    for (std::uint64_t s = 0; s < 40; ++s) {
      const Matrix x = sample(f1, 500, derive_seed(s, 1)).data;
      const Matrix y = sample(f2, 500, derive_seed(s, 2)).data;
      d.push_back(agree_two_samples(x, y, sample_directions(2, 100, derive_seed(s, 3))).d_k);
    }
    const double med = median_of(d);
    EXPECT_GT(med, prev) << "eta1 " << eta;
    prev = med;
  }
}

TEST(Agree, PooledIsRowOrderInvariant) {
  const auto [f1, f2] = agreement_models(0.5, 0.2, 0.1);
  const Matrix x = sample(f1, 333, 5).data, y = sample(f2, 271, 6).data;
  const DirectionSet dirs = sample_directions(2, 60, 7);
  const AgreementResult a = agree_two_samples(x, y, dirs);
  const AgreementResult b = agree_two_samples(shuffled_rows(x, 1), shuffled_rows(y, 2), dirs);
  EXPECT_EQ(a.ks, b.ks);
  EXPECT_EQ(a.d_k, b.d_k);
  EXPECT_EQ(a.ma_k, b.ma_k);
}

TEST(Agree, SplitBlocksPartitionRows) {
  for (std::size_t n : {10u, 17u, 500u})
    for (std::size_t k : {1u, 3u, 10u}) {
      const auto blocks = split_blocks(n, k);
      std::vector<int> hit(n, 0);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t r = blocks[i].begin; r < blocks[i].begin + blocks[i].size; ++r) ++hit[r];
        EXPECT_EQ(blocks[i].size, n / k + (i < n % k ? 1 : 0));
      }
      for (int h : hit) EXPECT_EQ(h, 1);
    }
  EXPECT_THROW(split_blocks(3, 4), InvalidArgument);
}

TEST(Agree, SplitModeUsesOneBlockPerDirection) {
  const auto [f1, f2] = agreement_models(0, 0, 0);
  const Matrix x = sample(f1, 103, 1).data, y = sample(f2, 99, 2).data;
  const DirectionSet dirs = sample_directions(2, 10, 3);
  const AgreementResult r = agree_two_samples(x, y, dirs, AgreementMode::split());
  const auto bx = split_blocks(103, 10), by = split_blocks(99, 10);
  for (std::size_t i = 0; i < 10; ++i) {
    const Vector u = dirs.direction(static_cast<Eigen::Index>(i));
    std::vector<double> a, b;
    for (std::size_t row = bx[i].begin; row < bx[i].begin + bx[i].size; ++row)
      a.push_back(x.row(static_cast<Eigen::Index>(row)).dot(u.transpose()));
    for (std::size_t row = by[i].begin; row < by[i].begin + by[i].size; ++row)
      b.push_back(y.row(static_cast<Eigen::Index>(row)).dot(u.transpose()));
    EXPECT_DOUBLE_EQ(r.ks[i], brute_ks(a, b));
  }
  EXPECT_THROW(agree_two_samples(x.topRows(5), y, dirs, AgreementMode::split()), InvalidArgument);
}

TEST(Agree, BootstrapQuantiles) {
  const auto [f1, f2] = agreement_models(0, 0, 0);
  const Matrix x = sample(f1, 200, 1).data, y = sample(f2, 200, 2).data;
  const DirectionSet dirs = sample_directions(2, 20, 3);
  const AgreementResult a = agree_two_samples(x, y, dirs, AgreementMode::bootstrap(99), 17);
  const AgreementResult b = agree_two_samples(x, y, dirs, AgreementMode::bootstrap(99), 17);
  ASSERT_TRUE(a.quantiles);
  EXPECT_EQ(a.quantiles->levels, (std::vector<double>{0.90, 0.95, 0.99}));
  EXPECT_EQ(a.quantiles->d_k, b.quantiles->d_k);
  for (std::size_t i = 1; i < 3; ++i) {
    EXPECT_GE(a.quantiles->d_k[i], a.quantiles->d_k[i - 1]);
    EXPECT_GE(a.quantiles->ma_k[i], a.quantiles->ma_k[i - 1]);
  }
  EXPECT_EQ(a.d_k, agree_two_samples(x, y, dirs).d_k);
  EXPECT_THROW(AgreementMode::bootstrap(0), InvalidArgument);
}

TEST(Prewhiten, UnitCovariance) {
  Matrix s(3, 3);
  s << 4.0, 1.0, 0.5, 1.0, 2.0, -0.3, 0.5, -0.3, 1.0;
  const MixtureModel m(Family::gaussian(), Vector::Ones(1), {Vector::Constant(3, 2.0)}, {s});
  const Matrix w = prewhiten(sample(m, 400, 3).data);
  const Matrix c = w.rowwise() - w.colwise().mean();
  const Matrix cov = c.transpose() * c / static_cast<double>(w.rows() - 1);
  EXPECT_LT((cov - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(w.colwise().mean().norm(), 1e-10);
  const Matrix again = prewhiten(w);
  const Matrix c2 = again.transpose() * again / static_cast<double>(again.rows() - 1);
  EXPECT_LT((c2 - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_THROW(prewhiten(Matrix::Ones(10, 2)), NumericalError);
}

TEST(Prewhiten, RemovesScaleDifference) {
  const auto [f1, f2] = agreement_models(0, 0, 0);
  std::vector<double> raw, white;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix x = sample(f1, 500, derive_seed(s, 1)).data;
    const Matrix y = 3.0 * sample(f1, 500, derive_seed(s, 2)).data;
    const DirectionSet dirs = sample_directions(2, 50, derive_seed(s, 3));
    raw.push_back(agree_two_samples(x, y, dirs).d_k);
    white.push_back(agree_two_samples(x, y, dirs, AgreementMode::pooled(), 0, true).d_k);
  }
  EXPECT_LT(median_of(white), 0.12);
  EXPECT_GT(median_of(raw), 0.3);
}

TEST(OneSampleTwoFits, EqualModels) {
  const auto [f1, f2] = agreement_models(0, 0, 0);
  const Matrix x = sample(f1, 50, 1).data;
  std::vector<double> ma;
  for (std::uint64_t s = 0; s < 5; ++s)
    ma.push_back(agree_one_sample_two_fits(x, f1, f2, sample_directions(2, 20, s), 10000, s).ma_k);
  EXPECT_LT(median_of(ma), 0.03);
}

TEST(OneSampleTwoFits, ComponentOrderDoesNotMatter) {
  const MixtureModel a = two_t_model(2.0);
  const MixtureModel b(a.family(), a.weights().reverse(), {a.means()[1], a.means()[0]},
                       {a.covariances()[1], a.covariances()[0]});
  const Matrix x = sample(a, 50, 1).data;
  const DirectionSet dirs = sample_directions(2, 15, 4);
  const AgreementResult r1 = agree_one_sample_two_fits(x, a, a, dirs, 2000, 9);
  const AgreementResult r2 = agree_one_sample_two_fits(x, a, b, dirs, 2000, 9);
  EXPECT_EQ(r1.ks, r2.ks);
}

TEST(OneSampleTwoFits, ShiftedMeansAreDetected) {
  const auto [f1, f2] = agreement_models(0, 0, 0);
  const Vector shift = Vector::Constant(2, 2.0 / std::sqrt(2.0));
  const MixtureModel moved(f1.family(), f1.weights(), {Vector(f1.means()[0] + shift), Vector(f1.means()[1] + shift)},
                           f1.covariances());
  const Matrix x = sample(f1, 50, 1).data;
  std::vector<double> same, shifted;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const DirectionSet dirs = sample_directions(2, 20, s);
    same.push_back(agree_one_sample_two_fits(x, f1, f2, dirs, 10000, s).ma_k);
    shifted.push_back(agree_one_sample_two_fits(x, f1, moved, dirs, 10000, s).ma_k);
  }
  EXPECT_GT(median_of(shifted), 5.0 * median_of(same));
}

TEST(OneSampleTwoFits, DimensionMismatch) {
  const Matrix x = Matrix::Zero(10, 2);
  EXPECT_THROW(agree_one_sample_two_fits(x, two_t_model(1.0), two_t_model(1.0), sample_directions(3, 4, 1)),
               InvalidArgument);
}
