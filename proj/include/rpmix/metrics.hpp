#ifndef RPMIX_METRICS_HPP
#define RPMIX_METRICS_HPP

#include "rpmix/assignment.hpp"
#include "rpmix/model.hpp"

#include <map>

namespace rpmix {

inline double choose2(double n) { return 0.5 * n * (n - 1.0); }

/// Adjusted Rand index from the contingency table of two labelings.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InvalidArgument("labelings have different lengths");
  if (a.size() < 2) throw InvalidArgument("ARI needs at least two points");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  double sij = 0.0, sa = 0.0, sb = 0.0;
  for (const auto &[key, c] : joint) sij += choose2(c);
  for (const auto &[key, c] : ra) sa += choose2(c);
  for (const auto &[key, c] : rb) sb += choose2(c);
  const double expected = sa * sb / choose2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;  // both partitions trivial and identical in shape
  return (sij - expected) / (max_index - expected);
}

/// m x m joint proportions; rows index the truth, columns the prediction.
inline Matrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                               std::size_t m) {
  if (truth.size() != predicted.size() || truth.empty())
    throw InvalidArgument("labelings must be non-empty and of equal length");
  const auto mm = static_cast<Eigen::Index>(m);
  Matrix c = Matrix::Zero(mm, mm);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= mm || predicted[i] < 0 || predicted[i] >= mm)
      throw InvalidArgument("label out of range");
    c(truth[i], predicted[i]) += 1.0;
  }
  return c / static_cast<double>(truth.size());
}

/// est_of_truth[t] = estimated component matched to true component t, by
/// minimum total Euclidean distance between means.
inline std::vector<int> match_components(const std::vector<Vector> &estimated,
                                         const std::vector<Vector> &truth) {
  if (estimated.size() != truth.size()) throw InvalidArgument("component counts differ");
  const auto m = static_cast<Eigen::Index>(truth.size());
  Matrix cost(m, m);
  for (Eigen::Index t = 0; t < m; ++t)
    for (Eigen::Index e = 0; e < m; ++e)
      cost(t, e) = (truth[static_cast<std::size_t>(t)] - estimated[static_cast<std::size_t>(e)]).norm();
  return hungarian(cost);
}

/// Estimated labels mapped onto the matched true component indices.
inline std::vector<int> relabel(std::span<const int> labels, const std::vector<int> &est_of_truth) {
  std::vector<int> truth_of_est(est_of_truth.size());
  for (std::size_t t = 0; t < est_of_truth.size(); ++t)
    truth_of_est[static_cast<std::size_t>(est_of_truth[t])] = static_cast<int>(t);
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = truth_of_est[static_cast<std::size_t>(labels[i])];
  return out;
}

struct ParameterErrors {
  double weight_error = 0.0;  // |lambda_1 hat - lambda_1| after matching
  std::vector<double> mean_errors;
  std::vector<double> cov_errors;
  std::vector<int> est_of_truth;
};

inline ParameterErrors parameter_errors(const Vector &weights, const std::vector<Vector> &means,
                                        const std::vector<Matrix> &covs, const MixtureModel &truth) {
  ParameterErrors out;
  out.est_of_truth = match_components(means, truth.means());
  for (std::size_t t = 0; t < truth.components(); ++t) {
    const auto e = static_cast<std::size_t>(out.est_of_truth[t]);
    out.mean_errors.push_back((means[e] - truth.means()[t]).norm());
    out.cov_errors.push_back((covs[e] - truth.covariances()[t]).norm());
  }
  out.weight_error = std::abs(weights[out.est_of_truth[0]] - truth.weights()[0]);
  return out;
}

/// Ranks with ties averaged (1-based).
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t p = i; p <= j; ++p) rank[idx[p]] = r;
    i = j + 1;
  }
  return rank;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("spearman needs paired data");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

} // namespace rpmix

#endif // RPMIX_METRICS_HPP
