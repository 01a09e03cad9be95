#include <gtest/gtest.h>

#include "rpmix/reconstruct.hpp"

#include <cmath>

using namespace rpmix;

namespace {

Matrix random_pd(Eigen::Index d, Rng &rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix b(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) b(i, j) = z(rng);
  return b * b.transpose() / static_cast<double>(d) + 0.1 * Matrix::Identity(d, d);
}

Vector random_vector(Eigen::Index d, Rng &rng, double scale = 3.0) {
  std::normal_distribution<double> z(0.0, scale);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = z(rng);
  return v;
}

ProjectedEstimates noiseless(const DirectionSet &dirs, const std::vector<Vector> &mu,
                             const std::vector<Matrix> &sigma) {
  const Eigen::Index k = dirs.size();
  const auto m = static_cast<Eigen::Index>(mu.size());
  ProjectedEstimates est{dirs, Matrix(k, m), Matrix(k, m), std::vector<bool>(static_cast<std::size_t>(k), true)};
  for (Eigen::Index r = 0; r < k; ++r) {
    const Vector u = dirs.direction(r);
    for (Eigen::Index j = 0; j < m; ++j) {
      est.locations(r, j) = u.dot(mu[static_cast<std::size_t>(j)]);
      est.scales2(r, j) = u.dot(sigma[static_cast<std::size_t>(j)] * u);
    }
  }
  return est;
}

// Zooming grid search for the 2x2 PSD least-squares problem.
Matrix grid_search_2x2(const DirectionSet &dirs, const Vector &s) {
  auto f = [&](double a, double b, double c) {
    if (a < 0.0 || b < 0.0 || a * b - c * c < 0.0) return std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (Eigen::Index r = 0; r < dirs.size(); ++r) {
      const Vector u = dirs.direction(r);
      const double q = a * u[0] * u[0] + b * u[1] * u[1] + 2.0 * c * u[0] * u[1];
      acc += (q - s[r]) * (q - s[r]);
    }
    return acc;
  };
  double ca = 2.0, cb = 2.0, cc = 0.0, half = 4.0;
  double best = f(ca, cb, cc);
  for (int level = 0; level < 60; ++level) {
    const int n = 10;
    double ba = ca, bb = cb, bc = cc;
    for (int i = -n; i <= n; ++i)
      for (int j = -n; j <= n; ++j)
        for (int l = -n; l <= n; ++l) {
          const double a = ca + half * i / n, b = cb + half * j / n, c = cc + half * l / n;
          const double v = f(a, b, c);
          if (v < best) {
            best = v;
            ba = a;
            bb = b;
            bc = c;
          }
        }
    ca = ba;
    cb = bb;
    cc = bc;
    half *= 0.6;
  }
  Matrix out(2, 2);
  out << ca, cc, cc, cb;
  return out;
}

} // namespace

TEST(ReconstructMeans, ExactRecovery) {
  for (Eigen::Index d : {2, 5, 10}) {
    Rng rng(static_cast<std::uint64_t>(d));
    for (std::uint64_t s = 0; s < 100; ++s) {
      const std::vector<Vector> mu{random_vector(d, rng), random_vector(d, rng)};
      const DirectionSet dirs = sample_directions(d, d, s);
      const auto got = reconstruct_means(noiseless(dirs, mu, {Matrix::Identity(d, d), Matrix::Identity(d, d)}));
      for (std::size_t j = 0; j < 2; ++j) EXPECT_LT((got[j] - mu[j]).norm(), 1e-10) << "d=" << d;
    }
  }
}

TEST(ReconstructMeans, AveragesNoise) {
  Rng rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  const std::vector<Vector> mu{random_vector(2, rng)};
  ProjectedEstimates est = noiseless(sample_directions(2, 50, 9), mu, {Matrix::Identity(2, 2)});
  for (Eigen::Index r = 0; r < 50; ++r) est.locations(r, 0) += noise(rng);
  EXPECT_LT((reconstruct_means(est)[0] - mu[0]).norm(), 0.01);
}

TEST(ReconstructMeans, ZeroTargets) {
  ProjectedEstimates est = noiseless(sample_directions(3, 8, 1), {Vector::Zero(3)}, {Matrix::Identity(3, 3)});
  EXPECT_EQ(reconstruct_means(est)[0], Vector::Zero(3));
}

TEST(ReconstructMeans, RankDeficientDesign) {
  Matrix v(3, 2);
  v << 1.0, 0.0, -1.0, 0.0, 1.0, 0.0;
  const ProjectedEstimates est = noiseless(DirectionSet(v), {Vector::Ones(2)}, {Matrix::Identity(2, 2)});
  EXPECT_THROW(reconstruct_means(est), EstimationFailure);
  ProjectedEstimates few = noiseless(sample_directions(3, 5, 2), {Vector::Ones(3)}, {Matrix::Identity(3, 3)});
  EXPECT_THROW(reconstruct_covariances(few), EstimationFailure);
  few.usable = {true, true, false, false, false};
  EXPECT_THROW(reconstruct_means(few), EstimationFailure);
}

TEST(ReconstructCovariances, ExactRecovery) {
  for (Eigen::Index d : {2, 4, 6}) {
    Rng rng(10 + static_cast<std::uint64_t>(d));
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Matrix sigma = random_pd(d, rng);
      const DirectionSet dirs = sample_directions(d, vecsym_size(d), 1000 + s);
      ASSERT_EQ(certify_sm_uniqueness(dirs, false).design_rank, vecsym_size(d));
      const auto got = reconstruct_covariances(noiseless(dirs, {Vector::Zero(d)}, {sigma}));
      EXPECT_LT((got[0] - sigma).norm(), 1e-8) << "d=" << d << " seed " << s;
    }
  }
}

TEST(ReconstructCovariances, IndefiniteTargetsGiveZero) {
  const DirectionSet dirs = sample_directions(2, 6, 4);
  const Matrix a = vecsym_design(dirs.vectors());
  const Vector s = Vector::Constant(6, -1.0);
  const CovarianceSolve c = solve_covariance(a, s, 2);
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.sigma);
  EXPECT_GE(es.eigenvalues().minCoeff(), 0.0);
  EXPECT_EQ(c.sigma, c.sigma.transpose());
  EXPECT_LE(c.objective, s.squaredNorm() + 1e-9);
  EXPECT_LT(c.sigma.norm(), 1e-6);
  EXPECT_EQ(c.tier, SolverTier::Barrier);
}

TEST(ReconstructCovariances, MatchesGridSearch) {
  Rng rng(77);
  std::normal_distribution<double> noise(0.0, 0.3);
  Matrix truth(2, 2);
  truth << 1.0, 0.4, 0.4, 0.6;
  Matrix thin(2, 2);
  thin << 1.0, 0.999, 0.999, 1.0;
  for (const Matrix &sigma : {truth, thin}) {
    const DirectionSet dirs = sample_directions(2, 50, 5);
    ProjectedEstimates est = noiseless(dirs, {Vector::Zero(2)}, {sigma});
    for (Eigen::Index r = 0; r < 50; ++r) est.scales2(r, 0) = std::abs(est.scales2(r, 0) + noise(rng)) + 1e-3;
    const CovarianceSolve c = reconstruct_covariances_detailed(est)[0];
    const Matrix oracle = grid_search_2x2(dirs, est.scales2.col(0));
    EXPECT_LT((c.sigma - oracle).norm(), 1e-4) << to_string(c.tier);
  }
}

TEST(ReconstructCovariances, BarrierPathIsStationary) {
  // Targets of diag(1, 0, 0) - 0.05 I put the unconstrained optimum outside the cone.
  const DirectionSet dirs = sample_directions(3, 30, 8);
  ProjectedEstimates est = noiseless(dirs, {Vector::Zero(3)}, {Matrix::Identity(3, 3)});
  for (Eigen::Index r = 0; r < 30; ++r) {
    const double u0 = dirs.direction(r)[0];
    est.scales2(r, 0) = std::max(1e-3, u0 * u0 - 0.05);
  }
  const CovarianceSolve c = reconstruct_covariances_detailed(est)[0];
  ASSERT_EQ(c.tier, SolverTier::Barrier);
  EXPECT_LT(c.gradient_residual, 1e-7);
  EXPECT_GT(c.barrier_iterations, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.sigma);
  EXPECT_GE(es.eigenvalues().minCoeff(), 0.0);
}

TEST(ReconstructRobust, CleanTargetsAgree) {
  Rng rng(6);
  const std::vector<Vector> mu{random_vector(3, rng), random_vector(3, rng)};
  const std::vector<Matrix> sig{random_pd(3, rng), random_pd(3, rng)};
  const ProjectedEstimates est = noiseless(sample_directions(3, 20, 6), mu, sig);
  const ReconstructionResult l2 = reconstruct(est), l1 = reconstruct_l1(est);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_LT((l1.means[j] - l2.means[j]).norm(), 1e-4);
    EXPECT_LT((l1.covariances[j] - l2.covariances[j]).norm(), 1e-4);
  }
}

TEST(ReconstructRobust, L1ResistsGrossOutliers) {
  Rng rng(12);
  std::normal_distribution<double> noise(0.0, 0.01);
  const std::vector<Vector> mu{Vector::Constant(2, 1.0)};
  const std::vector<Matrix> sig{Matrix::Identity(2, 2)};
  ProjectedEstimates clean = noiseless(sample_directions(2, 50, 3), mu, sig);
  for (Eigen::Index r = 0; r < 50; ++r) clean.locations(r, 0) += noise(rng);
  ProjectedEstimates dirty = clean;
  for (Eigen::Index r = 0; r < 50; r += 10) dirty.locations(r, 0) += 100.0;
  const double clean_err = (reconstruct_l1(clean).means[0] - mu[0]).norm();
  const double l1_err = (reconstruct_l1(dirty).means[0] - mu[0]).norm();
  const double l2_err = (reconstruct(dirty).means[0] - mu[0]).norm();
  EXPECT_LT(l1_err, 5.0 * clean_err);
  EXPECT_GT(l2_err, 1.0);
}

TEST(ReconstructRobust, L1ObjectiveIsMonotone) {
  Rng rng(14);
  std::normal_distribution<double> noise(0.0, 0.3);
  ProjectedEstimates est = noiseless(sample_directions(2, 40, 2), {Vector::Ones(2)}, {random_pd(2, rng)});
  for (Eigen::Index r = 0; r < 40; ++r) {
    est.locations(r, 0) += noise(rng);
    est.scales2(r, 0) = std::abs(est.scales2(r, 0) + noise(rng)) + 1e-3;
  }
  const ReconstructionResult res = reconstruct_l1(est);
  ASSERT_FALSE(res.objective_traces.empty());
  for (const auto &trace : res.objective_traces)
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
}

TEST(ReconstructRobust, MedianOfMeansIsSortedMiddle) {
  Rng rng(15);
  std::normal_distribution<double> noise(0.0, 0.2);
  const DirectionSet dirs = sample_directions(2, 12, 7);
  std::vector<ProjectedEstimates> splits;
  for (int l = 0; l < 5; ++l) {
    ProjectedEstimates e = noiseless(dirs, {Vector::Ones(2)}, {Matrix::Identity(2, 2)});
    for (Eigen::Index r = 0; r < 12; ++r) {
      e.locations(r, 0) += noise(rng);
      e.scales2(r, 0) += 0.1 * noise(rng);
    }
    splits.push_back(e);
  }
  const ReconstructionResult res = reconstruct_median_of_means(splits);
  std::vector<ReconstructionResult> parts;
  for (const auto &e : splits) parts.push_back(reconstruct(e));
  for (Eigen::Index a = 0; a < 2; ++a) {
    std::vector<double> v;
    for (const auto &p : parts) v.push_back(p.means[0][a]);
    std::sort(v.begin(), v.end());
    EXPECT_DOUBLE_EQ(res.means[0][a], v[2]);
  }
  Matrix med(2, 2);
  for (Eigen::Index a = 0; a < 2; ++a)
    for (Eigen::Index b = 0; b < 2; ++b) {
      std::vector<double> v;
      for (const auto &p : parts) v.push_back(p.covariances[0](a, b));
      std::sort(v.begin(), v.end());
      med(a, b) = v[2];
    }
  EXPECT_LT((res.covariances[0] - med).norm(), 1e-12);
  EXPECT_EQ(res.method.kind, ReconstructionMethod::Kind::MedianOfMeans);
}

TEST(ReconstructRobust, MedianOfMeansRepairsToPsd) {
  const DirectionSet dirs = sample_directions(2, 6, 3);
  std::vector<ProjectedEstimates> splits;
  Matrix a(2, 2), b(2, 2), c(2, 2);
  a << 1.0, 0.99, 0.99, 1.0;
  b << 1.0, -0.99, -0.99, 1.0;
  c << 0.01, 0.0, 0.0, 0.01;
  for (const Matrix &s : {a, b, c}) splits.push_back(noiseless(dirs, {Vector::Zero(2)}, {s}));
  const ReconstructionResult res = reconstruct_median_of_means(splits);
  Eigen::SelfAdjointEigenSolver<Matrix> es(res.covariances[0]);
  EXPECT_GE(es.eigenvalues().minCoeff(), 0.0);
}

TEST(ReconstructConstrained, PaperLevelsAndCorrelation) {
  const Eigen::Index d = 20;
  const double levels[3] = {0.0, 1.0, 3.0};
  std::vector<Vector> mu;
  std::vector<Matrix> sig;
  for (double l : levels) {
    mu.push_back(Vector::Constant(d, l));
    sig.push_back(compound_symmetry(d, 0.25));
  }
  const ConstrainedEstimate c = reconstruct_constrained(noiseless(sample_directions(d, 60, 4), mu, sig));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(c.levels[k], levels[k], 1e-8);
  EXPECT_NEAR(c.correlation, 0.25, 1e-8);
  EXPECT_FALSE(c.clamped);
  EXPECT_LT((c.scatter(d) - sig[0]).norm(), 1e-7);
}

TEST(ReconstructConstrained, L1ExactAndResistsGrossScales) {
  const Eigen::Index d = 20;
  const std::vector<double> levels{0.0, 1.0, 3.0};
  std::vector<Vector> mu;
  std::vector<Matrix> sig;
  for (double l : levels) {
    mu.push_back(Vector::Constant(d, l));
    sig.push_back(compound_symmetry(d, 0.25));
  }
  ProjectedEstimates est = noiseless(sample_directions(d, 200, 6), mu, sig);
  const ConstrainedEstimate exact = reconstruct_constrained(est, ReconstructionMethod::l1());
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(exact.levels[k], levels[k], 1e-10);
  EXPECT_NEAR(exact.correlation, 0.25, 1e-10);

  // Every 20th row gets an absurd scale, as a heavy-tailed projection can.
  for (Eigen::Index r = 0; r < 200; r += 20) est.scales2.row(r).setConstant(1e4);
  const ConstrainedEstimate l1 = reconstruct_constrained(est, ReconstructionMethod::l1());
  const ConstrainedEstimate l2 = reconstruct_constrained(est);
  EXPECT_NEAR(l1.correlation, 0.25, 0.02);
  EXPECT_GT(std::abs(l2.correlation - 0.25), 0.2);
}

TEST(WeightedMedian, MatchesSortedOracle) {
  EXPECT_DOUBLE_EQ(detail::weighted_median({{3.0, 1.0}, {1.0, 1.0}, {2.0, 1.0}}), 2.0);
  EXPECT_DOUBLE_EQ(detail::weighted_median({{0.0, 1.0}, {5.0, 3.0}}), 5.0);
  EXPECT_THROW(detail::weighted_median({}), EstimationFailure);
}

TEST(ReconstructConstrained, IdentityScatter) {
  const Eigen::Index d = 5;
  const ConstrainedEstimate c = reconstruct_constrained(
      noiseless(sample_directions(d, 30, 1), {Vector::Constant(d, 2.0)}, {Matrix::Identity(d, d)}));
  EXPECT_NEAR(c.correlation, 0.0, 1e-12);
  EXPECT_NEAR(c.levels[0], 2.0, 1e-12);
}

TEST(ReconstructConstrained, ClampsAtBoundary) {
  const DirectionSet dirs = sample_directions(2, 20, 2);
  ProjectedEstimates est = noiseless(dirs, {Vector::Zero(2)}, {Matrix::Identity(2, 2)});
  for (Eigen::Index r = 0; r < 20; ++r) {
    const double s = dirs.direction(r).sum();
    est.scales2(r, 0) = std::max(1e-6, 1.0 + (-1.0 - 1e-3) * (s * s - 1.0));
  }
  const ConstrainedEstimate c = reconstruct_constrained(est);
  EXPECT_GT(c.correlation, -1.0);
  EXPECT_LT(c.correlation, 1.0);
  EXPECT_TRUE(c.clamped);
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.scatter(2));
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(ReconstructConstrained, OrthogonalDirectionsFail) {
  const double r = 1.0 / std::sqrt(2.0);
  Matrix v(2, 2);
  v << r, -r, -r, r;
  EXPECT_THROW(reconstruct_constrained(noiseless(DirectionSet(v), {Vector::Zero(2)}, {Matrix::Identity(2, 2)})),
               EstimationFailure);
}

TEST(Psd, ClipIsSymmetricAndNonNegative) {
  Matrix m(2, 2);
  m << 1.0, 2.0, 2.0, 1.0;
  const Matrix c = psd_clip(m);
  EXPECT_EQ(c, c.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  EXPECT_GE(es.eigenvalues().minCoeff(), 0.0);
  EXPECT_NEAR(es.eigenvalues().maxCoeff(), 3.0, 1e-12);
}
