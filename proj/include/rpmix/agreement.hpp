#ifndef RPMIX_AGREEMENT_HPP
#define RPMIX_AGREEMENT_HPP

// Agreement between two samples (or two fitted models) through projected
// two-sample Kolmogorov-Smirnov distances.

#include "rpmix/directions.hpp"
#include "rpmix/model.hpp"

#include <optional>

namespace rpmix {

/// Exact two-sample KS statistic sup_t |F_a(t) - F_b(t)|. Both empirical
/// CDFs are evaluated at every pooled value, so ties are handled exactly.
inline double ks_statistic_sorted(std::span<const double> a, std::span<const double> b) {
  const std::size_t n1 = a.size(), n2 = b.size();
  if (n1 == 0 || n2 == 0) throw InvalidArgument("KS statistic needs two non-empty samples");
  std::size_t i = 0, j = 0;
  // Integer numerators keep the result independent of summation order.
  std::int64_t best = 0;
  const auto s1 = static_cast<std::int64_t>(n1), s2 = static_cast<std::int64_t>(n2);
  while (i < n1 && j < n2) {
    const double v = std::min(a[i], b[j]);
    while (i < n1 && a[i] == v) ++i;
    while (j < n2 && b[j] == v) ++j;
    const std::int64_t diff = static_cast<std::int64_t>(i) * s2 - static_cast<std::int64_t>(j) * s1;
    best = std::max(best, diff < 0 ? -diff : diff);
  }
  return static_cast<double>(best) / (static_cast<double>(n1) * static_cast<double>(n2));
}

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("KS statistic needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return ks_statistic_sorted(a, b);
}

struct AgreementMode {
  enum class Kind { Pooled, Split, Bootstrap };
  Kind kind = Kind::Pooled;
  int replicates = 0;  // B for bootstrap

  static AgreementMode pooled() { return {}; }
  static AgreementMode split() { return {Kind::Split, 0}; }
  static AgreementMode bootstrap(int b) {
    if (b < 1) throw InvalidArgument("bootstrap needs B >= 1");
    return {Kind::Bootstrap, b};
  }
  std::string name() const {
    switch (kind) {
    case Kind::Pooled: return "pooled";
    case Kind::Split: return "split";
    case Kind::Bootstrap: return "bootstrap:" + std::to_string(replicates);
    }
    return "unknown";
  }
};

struct BootstrapQuantiles {
  std::vector<double> levels{0.90, 0.95, 0.99};
  std::vector<double> d_k;
  std::vector<double> ma_k;
};

struct AgreementResult {
  double d_k = 0.0;
  double ma_k = 0.0;
  std::vector<double> ks;
  AgreementMode mode;
  std::optional<BootstrapQuantiles> quantiles;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// D_k = max KS(i), MA_k = mean KS(i) by pairwise summation.
inline void aggregate(AgreementResult &res) {
  if (res.ks.empty()) throw InvalidArgument("no KS values to aggregate");
  res.d_k = *std::max_element(res.ks.begin(), res.ks.end());
  res.ma_k = std::min(mean_of(res.ks), res.d_k);
}

struct Block {
  std::size_t begin = 0;
  std::size_t size = 0;
};

/// n rows cut into k contiguous blocks; the first n % k blocks get one extra row.
inline std::vector<Block> split_blocks(std::size_t n, std::size_t k) {
  if (k == 0 || n < k) throw InvalidArgument("split mode needs at least k rows per sample");
  std::vector<Block> out(k);
  const std::size_t base = n / k, extra = n % k;
  std::size_t at = 0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = {at, base + (i < extra ? 1 : 0)};
    at += out[i].size;
  }
  return out;
}

/// (X - mean) S^{-1/2} with S the sample covariance.
inline Matrix prewhiten(const Matrix &x) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n <= d) throw NumericalError("whitening needs more rows than columns");
  const Vector mu = x.colwise().mean().transpose();
  const Matrix c = x.rowwise() - mu.transpose();
  const Matrix s = (c.transpose() * c) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const Vector ev = es.eigenvalues();
  if (!(ev.minCoeff() > 1e-12 * ev.maxCoeff()))
    throw NumericalError("sample covariance is singular");
  const Matrix inv_sqrt =
      es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  return c * inv_sqrt;
}

namespace detail {

/// Column r holds the sorted projections onto direction r.
inline Matrix sorted_projections(const Matrix &x, const DirectionSet &dirs) {
  Matrix p = x * dirs.vectors().transpose();
  for (Eigen::Index r = 0; r < p.cols(); ++r) std::sort(p.col(r).begin(), p.col(r).end());
  return p;
}

inline std::vector<double> pooled_ks(const Matrix &px, const Matrix &py) {
  std::vector<double> ks(static_cast<std::size_t>(px.cols()));
  for (Eigen::Index r = 0; r < px.cols(); ++r)
    ks[static_cast<std::size_t>(r)] = ks_statistic_sorted(
        std::span<const double>(px.col(r).data(), static_cast<std::size_t>(px.rows())),
        std::span<const double>(py.col(r).data(), static_cast<std::size_t>(py.rows())));
  return ks;
}

} // namespace detail

/// Projected KS agreement between samples X (l x d) and Y (r x d).
/// Pooled: every direction sees the full samples. Split: block i of each
/// sample is projected only onto direction i. Bootstrap(B): pooled statistics
/// plus null quantiles of D_k and MA_k from B resamples of the concatenated
/// data. With `whiten`, each sample is pre-whitened by its own covariance.
inline AgreementResult agree_two_samples(const Matrix &x, const Matrix &y, const DirectionSet &dirs,
                                         AgreementMode mode = {}, std::uint64_t seed = 0,
                                         bool whiten = false) {
  if (x.cols() != dirs.dim() || y.cols() != dirs.dim())
    throw InvalidArgument("samples and directions disagree on dimension");
  if (x.rows() < 1 || y.rows() < 1) throw InvalidArgument("samples must be non-empty");
  const Matrix xw = whiten ? prewhiten(x) : x;
  const Matrix yw = whiten ? prewhiten(y) : y;
  const auto k = static_cast<std::size_t>(dirs.size());
  AgreementResult res;
  res.mode = mode;
  res.seed = seed;
  if (mode.kind == AgreementMode::Kind::Split) {
    const auto bx = split_blocks(static_cast<std::size_t>(xw.rows()), k);
    const auto by = split_blocks(static_cast<std::size_t>(yw.rows()), k);
    res.ks.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const Vector u = dirs.direction(static_cast<Eigen::Index>(i));
      const Vector a = xw.middleRows(static_cast<Eigen::Index>(bx[i].begin), static_cast<Eigen::Index>(bx[i].size)) * u;
      const Vector b = yw.middleRows(static_cast<Eigen::Index>(by[i].begin), static_cast<Eigen::Index>(by[i].size)) * u;
      res.ks[i] = ks_statistic({a.data(), a.data() + a.size()}, {b.data(), b.data() + b.size()});
    }
    aggregate(res);
    return res;
  }
  res.ks = detail::pooled_ks(detail::sorted_projections(xw, dirs), detail::sorted_projections(yw, dirs));
  aggregate(res);
  if (mode.kind != AgreementMode::Kind::Bootstrap) return res;

  Matrix pooled(xw.rows() + yw.rows(), xw.cols());
  pooled << xw, yw;
  const Matrix proj = pooled * dirs.vectors().transpose();
  const auto b_count = static_cast<std::size_t>(mode.replicates);
  std::vector<double> null_d(b_count), null_ma(b_count);
  parallel_for(b_count, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    std::uniform_int_distribution<Eigen::Index> pick(0, pooled.rows() - 1);
    auto draw = [&](Eigen::Index n) {
      Matrix out(n, proj.cols());
      for (Eigen::Index i = 0; i < n; ++i) out.row(i) = proj.row(pick(rng));
      for (Eigen::Index r = 0; r < out.cols(); ++r) std::sort(out.col(r).begin(), out.col(r).end());
      return out;
    };
    const Matrix px = draw(xw.rows());
    const Matrix py = draw(yw.rows());
    AgreementResult rep;
    rep.ks = detail::pooled_ks(px, py);
    aggregate(rep);
    null_d[b] = rep.d_k;
    null_ma[b] = rep.ma_k;
  });
  BootstrapQuantiles q;
  for (double level : q.levels) {
    q.d_k.push_back(quantile_of(null_d, level));
    q.ma_k.push_back(quantile_of(null_ma, level));
  }
  res.quantiles = std::move(q);
  return res;
}

/// Components sorted by (location, scale, weight) so that relabelled but
/// equal models project to identical mixtures.
inline UnivariateMixture canonical_order(const UnivariateMixture &mix) {
  const auto m = static_cast<Eigen::Index>(mix.components());
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::tie(mix.locations[a], mix.scales2[a], mix.weights[a]) <
           std::tie(mix.locations[b], mix.scales2[b], mix.weights[b]);
  });
  UnivariateMixture out = mix;
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index s = idx[static_cast<std::size_t>(j)];
    out.weights[j] = mix.weights[s];
    out.locations[j] = mix.locations[s];
    out.scales2[j] = mix.scales2[s];
  }
  return out;
}

/// Compares two fitted models through their projections: per direction, KS
/// between n_synth draws from each projected model. X only fixes the dimension.
inline AgreementResult agree_one_sample_two_fits(const Matrix &x, const MixtureModel &a,
                                                 const MixtureModel &b, const DirectionSet &dirs,
                                                 std::size_t n_synth = 10000,
                                                 std::uint64_t seed = 0) {
  if (a.dim() != b.dim() || a.dim() != dirs.dim() || x.cols() != a.dim())
    throw InvalidArgument("models, data and directions disagree on dimension");
  if (n_synth < 1) throw InvalidArgument("n_synth must be >= 1");
  const auto k = static_cast<std::size_t>(dirs.size());
  AgreementResult res;
  res.seed = seed;
  res.ks.resize(k);
  parallel_for(k, [&](std::size_t r) {
    const Vector u = dirs.direction(static_cast<Eigen::Index>(r));
    const UnivariateMixture pa = canonical_order(project_model(a, u));
    const UnivariateMixture pb = canonical_order(project_model(b, u));
    Rng ra(derive_seed(seed, r, 0)), rb(derive_seed(seed, r, 1));
    res.ks[r] = ks_statistic(sample_univariate(pa, n_synth, ra), sample_univariate(pb, n_synth, rb));
  });
  aggregate(res);
  return res;
}

} // namespace rpmix

#endif // RPMIX_AGREEMENT_HPP
