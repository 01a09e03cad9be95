#ifndef RPMIX_PIPELINE_HPP
#define RPMIX_PIPELINE_HPP

// End-to-end estimation: directions, per-direction fits, alignment, weight
// averaging, weight-pinned refits and reconstruction in R^d.

#include "rpmix/agreement.hpp"
#include "rpmix/align.hpp"
#include "rpmix/metrics.hpp"
#include "rpmix/reconstruct.hpp"

namespace rpmix {

struct EstimateConfig {
  std::size_t m = 2;
  Family family;
  std::optional<Eigen::Index> k;  // default required_directions(m, d)
  std::uint64_t seed = 1;
  std::optional<double> tau;      // default: scale-adaptive per direction
  int grid_points = 20;
  double grid_span = 4.0;  // tau * grid_points * sd(y) when tau is unset
  bool damped_weights = false;
  EcfOptions ecf;
  ReconstructionMethod robust;
  std::optional<Vector> known_weights;
  /// Constant-coordinate means with a shared compound-symmetry scatter.
  bool constrained = false;
  std::optional<DirectionSet> directions;
  AlignOptions align;
  /// Flip directions into the pivot's half-space (u . u_pivot >= 0) before
  /// alignment, mirroring their fits.
  bool orient_to_pivot = true;
  /// Projections whose k-means centroids are closer than this many sd(y)
  /// take no part in pivot choice or weight averaging (they are still
  /// aligned, refitted and used for reconstruction).
  double min_centroid_gap = 0.1;
  unsigned threads = 0;
};

struct EstimateResult {
  Vector weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;  // PSD, as reconstructed
  std::optional<ReconstructionResult> reconstruction;
  std::optional<ConstrainedEstimate> constrained;
  DirectionSet directions;  // as sampled or supplied
  ProjectedEstimates projected;
  std::vector<EcfFitResult> step1;
  std::vector<EcfFitResult> step2;
  AlignmentPlan plan;
  std::vector<std::string> warnings;
  Family family;

  /// Usable model: covariance eigenvalues floored at 1e-6 * largest.
  MixtureModel model() const {
    std::vector<Matrix> covs;
    for (const auto &s : covariances) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
      const double top = std::max(es.eigenvalues().maxCoeff(), 1e-12);
      const Vector ev = es.eigenvalues().cwiseMax(1e-6 * top);
      Matrix f = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      for (Eigen::Index i = 0; i < f.rows(); ++i)
        for (Eigen::Index j = i + 1; j < f.cols(); ++j) f(j, i) = f(i, j);
      covs.push_back(f);
    }
    Vector w = weights.cwiseMax(0.0);
    w /= w.sum();
    return MixtureModel(family, w, means, covs);
  }
};

namespace detail {

inline EcfGrid grid_for(std::span<const double> y, const EstimateConfig &cfg) {
  return cfg.tau ? EcfGrid(*cfg.tau, cfg.grid_points) : EcfGrid::scale_adaptive(y, cfg.grid_points, cfg.grid_span, cfg.family);
}

inline WeightMatrix weights_for(const EcfGrid &g, const EstimateConfig &cfg) {
  return cfg.damped_weights ? WeightMatrix::damped(g) : WeightMatrix::identity();
}

/// Step-2 fits on `x` for every usable direction, returning the projected
/// estimates in pivot slot order.
inline ProjectedEstimates refit(const Matrix &x, const DirectionSet &dirs, const AlignedFits &aligned,
                                const Vector &weights, const EstimateConfig &cfg,
                                std::vector<EcfFitResult> *fits_out) {
  const Eigen::Index k = dirs.size();
  const auto m = static_cast<Eigen::Index>(weights.size());
  ProjectedEstimates est;
  Matrix v = dirs.vectors();
  for (Eigen::Index r = 0; r < k; ++r)
    if (aligned.plan.reflected[static_cast<std::size_t>(r)]) v.row(r) *= -1.0;
  est.directions = DirectionSet(v);
  est.locations = Matrix::Zero(k, m);
  est.scales2 = Matrix::Ones(k, m);
  est.usable = aligned.plan.usable;
  std::vector<EcfFitResult> fits(static_cast<std::size_t>(k));
  parallel_for(static_cast<std::size_t>(k), [&](std::size_t r) {
    if (!est.usable[r]) return;
    const auto y = project_sample(x, est.directions.direction(static_cast<Eigen::Index>(r)));
    const EcfGrid g = grid_for(y, cfg);
    fits[r] = fit_step2(y, cfg.family, g, weights_for(g, cfg), weights, aligned.fits[r].fitted, cfg.ecf);
    fits[r].direction_index = r;
  }, cfg.threads);
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto rs = static_cast<std::size_t>(r);
    if (!est.usable[rs]) continue;
    est.locations.row(r) = fits[rs].fitted.locations.transpose();
    est.scales2.row(r) = fits[rs].fitted.scales2.transpose();
  }
  if (fits_out) *fits_out = std::move(fits);
  return est;
}

/// Smallest gap between k-means initial locations, in units of sd(y).
inline double centroid_gap(std::span<const double> y, std::size_t m, const Family &family, std::uint64_t seed) {
  if (m < 2) return std::numeric_limits<double>::infinity();
  const double sd = spread(y, family);
  if (!(sd > 0.0)) return 0.0;
  return init_step(y, m, family, seed).min_gap / sd;
}

/// Marks fits with gap below the threshold as failed, unless none would pass,
/// in which case the single best separated one survives.
inline void screen_by_gap(std::vector<EcfFitResult> &fits, const std::vector<double> &gap,
                          double threshold) {
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < fits.size(); ++r)
    if (fits[r].screen_passed && (!best || gap[r] > gap[*best])) best = r;
  for (std::size_t r = 0; r < fits.size(); ++r)
    if (r != best && gap[r] < threshold) fits[r].screen_passed = false;
}

} // namespace detail

/// Runs the two-step random-projection estimator on data x (N x d).
inline EstimateResult run_estimate(const Matrix &x, const EstimateConfig &cfg) {
  const Eigen::Index n = x.rows(), d = x.cols();
  const std::size_t m = cfg.m;
  if (m < 1) throw ConfigError("component count must be >= 1");
  if (d < 1 || static_cast<std::size_t>(n) < 10 * m)
    throw InvalidArgument("need at least 10 observations per component");
  EstimateResult res;
  res.family = cfg.family;
  if (cfg.directions) {
    if (cfg.directions->dim() != d) throw ConfigError("direction file has the wrong dimension");
    res.directions = *cfg.directions;
  } else {
    const Eigen::Index k = cfg.k ? *cfg.k : (d >= 2 ? static_cast<Eigen::Index>(required_directions(m, static_cast<std::size_t>(d))) : 1);
    if (k < 1) throw ConfigError("k must be >= 1");
    res.directions = sample_directions(d, k, derive_seed(cfg.seed, 0xD1ECULL));
  }
  const Eigen::Index k = res.directions.size();
  if (d >= 2 && static_cast<std::size_t>(k) < required_directions(m, static_cast<std::size_t>(d)))
    res.warnings.push_back("k = " + std::to_string(k) + " is below the identifiability bound " +
                           std::to_string(required_directions(m, static_cast<std::size_t>(d))));

  // Step 1 (or k-means initializations when the weights are known).
  std::vector<EcfFitResult> first(static_cast<std::size_t>(k));
  std::vector<double> gap(static_cast<std::size_t>(k), 0.0);
  parallel_for(static_cast<std::size_t>(k), [&](std::size_t r) {
    const auto y = project_sample(x, res.directions.direction(static_cast<Eigen::Index>(r)));
    gap[r] = detail::centroid_gap(y, m, cfg.family, derive_seed(cfg.seed, r, 1));
    const std::uint64_t s = derive_seed(cfg.seed, r, 1);
    if (cfg.known_weights) {
      const InitResult init = init_step(y, m, cfg.family, s);
      first[r].fitted = first[r].initial = init.mixture;
      first[r].screen_passed = init.screen_passed;
    } else {
      const EcfGrid g = detail::grid_for(y, cfg);
      first[r] = fit_step1(y, m, cfg.family, g, detail::weights_for(g, cfg), s, cfg.ecf);
    }
    first[r].direction_index = r;
  }, cfg.threads);

  std::vector<EcfFitResult> separated = first;
  detail::screen_by_gap(separated, gap, cfg.min_centroid_gap);
  AlignedFits aligned;
  if (cfg.constrained) {
    aligned = align_by_ones(first, res.directions, cfg.align);
  } else {
    const std::size_t pivot = choose_pivot(separated);
    std::vector<bool> flipped(static_cast<std::size_t>(k), false);
    if (cfg.orient_to_pivot) {
      const Vector up = res.directions.direction(static_cast<Eigen::Index>(pivot));
      for (std::size_t r = 0; r < first.size(); ++r)
        if (res.directions.direction(static_cast<Eigen::Index>(r)).dot(up) < 0.0) {
          flipped[r] = true;
          first[r].fitted = mirrored(first[r].fitted);
          first[r].initial = mirrored(first[r].initial);
        }
    }
    aligned = align(first, pivot, cfg.align);
    for (std::size_t r = 0; r < flipped.size(); ++r)
      aligned.plan.reflected[r] = aligned.plan.reflected[r] != flipped[r];
  }
  res.plan = aligned.plan;
  if (res.plan.low_separation) res.warnings.push_back("pivot direction is poorly separated");

  std::vector<EcfFitResult> averaged = aligned.fits;
  for (std::size_t r = 0; r < averaged.size(); ++r)
    averaged[r].screen_passed = averaged[r].screen_passed && separated[r].screen_passed;

  // Slot weights; with known weights, user component i goes to slot slot_of_user[i].
  const auto mm = static_cast<Eigen::Index>(m);
  std::vector<int> slot_of_user(m);
  std::iota(slot_of_user.begin(), slot_of_user.end(), 0);
  // Constant-coordinate means separate along u only through <u, 1>.
  std::vector<double> importance;
  if (cfg.constrained)
    for (Eigen::Index r = 0; r < k; ++r) importance.push_back(std::pow(res.directions.direction(r).sum(), 2));
  Vector slot_weights;
  if (cfg.known_weights) {
    const Vector &kw = *cfg.known_weights;
    if (kw.size() != mm || (kw.array() < 0.0).any() || std::abs(kw.sum() - 1.0) > 1e-12)
      throw ConfigError("known weights must be " + std::to_string(m) + " values on the simplex");
    const Vector avg = average_weights(averaged, importance);
    Matrix cost(mm, mm);
    for (Eigen::Index i = 0; i < mm; ++i)
      for (Eigen::Index b = 0; b < mm; ++b) cost(i, b) = (kw[i] - avg[b]) * (kw[i] - avg[b]);
    slot_of_user = hungarian(cost);
    slot_weights.resize(mm);
    for (Eigen::Index i = 0; i < mm; ++i) slot_weights[slot_of_user[static_cast<std::size_t>(i)]] = kw[i];
  } else {
    slot_weights = average_weights(averaged, importance);
  }
  res.step1 = aligned.fits;

  // Step 2 and reconstruction.
  const bool mom = cfg.robust.kind == ReconstructionMethod::Kind::MedianOfMeans;
  res.projected = detail::refit(x, res.directions, aligned, slot_weights, cfg, &res.step2);
  std::vector<Vector> slot_means;
  std::vector<Matrix> slot_covs;
  if (cfg.constrained) {
    const ConstrainedEstimate c = reconstruct_constrained(res.projected, cfg.robust);
    slot_means = c.means(d);
    slot_covs.assign(m, c.scatter(d));
    res.constrained = c;
  } else if (mom) {
    const auto l = static_cast<std::size_t>(cfg.robust.splits);
    if (static_cast<std::size_t>(n) / l < 10 * m)
      throw InvalidArgument("median of means with L = " + std::to_string(l) +
                            " leaves fewer than 10 observations per component in a split");
    std::vector<ProjectedEstimates> parts;
    const auto blocks = split_blocks(static_cast<std::size_t>(n), l);
    for (const auto &b : blocks)
      parts.push_back(detail::refit(x.middleRows(static_cast<Eigen::Index>(b.begin), static_cast<Eigen::Index>(b.size)),
                                    res.directions, aligned, slot_weights, cfg, nullptr));
    res.reconstruction = reconstruct_median_of_means(parts);
  } else if (cfg.robust.kind == ReconstructionMethod::Kind::L1) {
    res.reconstruction = reconstruct_l1(res.projected);
  } else {
    res.reconstruction = reconstruct(res.projected);
  }
  if (res.reconstruction) {
    slot_means = res.reconstruction->means;
    slot_covs = res.reconstruction->covariances;
  }
  // Report in user order for known weights, slot order otherwise.
  res.weights.resize(mm);
  for (std::size_t i = 0; i < m; ++i) {
    const auto s = static_cast<std::size_t>(slot_of_user[i]);
    res.weights[static_cast<Eigen::Index>(i)] = slot_weights[static_cast<Eigen::Index>(s)];
    res.means.push_back(slot_means[s]);
    res.covariances.push_back(slot_covs[s]);
  }
  return res;
}

struct EstimateMetrics {
  ParameterErrors errors;
  Matrix confusion;
  double ari = 0.0;
};

/// Errors against a known truth after matching components by mean distance;
/// confusion and ARI from MAP labels when true labels are available.
inline EstimateMetrics evaluate(const EstimateResult &res, const MixtureModel &truth,
                                const LabeledSample &sample) {
  EstimateMetrics out;
  out.errors = parameter_errors(res.weights, res.means, res.covariances, truth);
  if (sample.labels) {
    const auto pred = relabel(map_allocate(res.model(), sample.data), out.errors.est_of_truth);
    out.confusion = confusion_matrix(*sample.labels, pred, truth.components());
    out.ari = adjusted_rand_index(*sample.labels, pred);
  }
  return out;
}

} // namespace rpmix

#endif // RPMIX_PIPELINE_HPP
