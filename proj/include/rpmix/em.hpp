#ifndef RPMIX_EM_HPP
#define RPMIX_EM_HPP

// Plain multivariate EM baseline: Gaussian EM and Student-t ECM with fixed nu.

#include "rpmix/model.hpp"

#include <limits>

namespace rpmix {

struct EmOptions {
  int max_iterations = 300;
  double tolerance = 1e-8;  // absolute log-likelihood increase
  double ridge = 1e-8;      // times trace / d, added to every covariance
  int max_restarts = 5;
  int kmeans_iterations = 50;
};

struct EmResult {
  MixtureModel model;
  std::vector<double> loglik_trace;
  bool monotone = true;
  bool converged = false;
  int iterations = 0;
  int restarts_used = 0;
};

namespace detail {

/// Lloyd's algorithm with k-means++ seeding; returns labels.
inline std::vector<int> kmeans(const Matrix &x, std::size_t m, Rng &rng, int iterations) {
  const Eigen::Index n = x.rows();
  std::vector<Vector> centers;
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.push_back(x.row(first(rng)).transpose());
  std::vector<double> d2(static_cast<std::size_t>(n));
  while (centers.size() < m) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto &c : centers) best = std::min(best, (x.row(i).transpose() - c).squaredNorm());
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    if (!(total > 0.0)) {
      centers.push_back(centers.back());
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    const double target = u(rng);
    double acc = 0.0;
    Eigen::Index pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += d2[static_cast<std::size_t>(i)];
      if (acc >= target) {
        pick = i;
        break;
      }
    }
    centers.push_back(x.row(pick).transpose());
  }
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        const double dd = (x.row(i).transpose() - centers[j]).squaredNorm();
        if (dd < bd) {
          bd = dd;
          best = static_cast<int>(j);
        }
      }
      if (label[static_cast<std::size_t>(i)] != best) changed = true;
      label[static_cast<std::size_t>(i)] = best;
    }
    if (!changed) break;
    std::vector<Vector> sum(m, Vector::Zero(x.cols()));
    std::vector<int> cnt(m, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])] += x.row(i).transpose();
      ++cnt[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
    }
    for (std::size_t j = 0; j < m; ++j)
      if (cnt[j] > 0) centers[j] = sum[j] / cnt[j];
  }
  return label;
}

/// Log-likelihood and normalized responsibilities (n x m).
inline double e_step(const MixtureModel &model, const Matrix &x, Matrix &resp) {
  const Eigen::Index n = x.rows();
  const auto m = static_cast<Eigen::Index>(model.components());
  resp.resize(n, m);
  std::vector<double> rows(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector xi = x.row(i).transpose();
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      const double w = model.weights()[j];
      resp(i, j) = w > 0.0 ? std::log(w) + model.log_component_density(static_cast<std::size_t>(j), xi)
                           : -std::numeric_limits<double>::infinity();
      mx = std::max(mx, resp(i, j));
    }
    double s = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      resp(i, j) = std::exp(resp(i, j) - mx);
      s += resp(i, j);
    }
    resp.row(i) /= s;
    rows[static_cast<std::size_t>(i)] = mx + std::log(s);
  }
  return pairwise_sum(rows);
}

} // namespace detail

/// EM for a Gaussian mixture, or ECM for a Student-t mixture with the given
/// (fixed) nu. Starts from k-means; a degenerate start or fit (a cluster with
/// fewer than d+1 points, or a singular covariance) triggers a restart from a
/// derived seed, up to max_restarts times.
inline EmResult em_baseline(const Matrix &x, std::size_t m, const Family &family,
                            std::uint64_t seed, const EmOptions &opt = {}) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (m < 1) throw InvalidArgument("component count must be >= 1");
  if (static_cast<std::size_t>(n) < 10 * m)
    throw InvalidArgument("EM needs at least 10 observations per component");
  const auto mm = static_cast<Eigen::Index>(m);
  std::string last_error = "degenerate initialization";
  for (int attempt = 0; attempt <= opt.max_restarts; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    const std::vector<int> label = detail::kmeans(x, m, rng, opt.kmeans_iterations);
    Matrix resp = Matrix::Zero(n, mm);
    for (Eigen::Index i = 0; i < n; ++i) resp(i, label[static_cast<std::size_t>(i)]) = 1.0;
    if ((resp.colwise().sum().array() < static_cast<double>(d + 1)).any()) continue;

    Matrix u = Matrix::Ones(n, mm);  // t latent scale weights
    std::optional<MixtureModel> model;
    EmResult res{MixtureModel(family, Vector::Ones(1), {Vector::Zero(d)}, {Matrix::Identity(d, d)}),
                 {}, true, false, 0, attempt};
    bool failed = false;
    for (int it = 0; it <= opt.max_iterations; ++it) {
      // M-step from current responsibilities (and t weights).
      Vector w(mm);
      std::vector<Vector> means;
      std::vector<Matrix> covs;
      for (Eigen::Index j = 0; j < mm; ++j) {
        const double nj = resp.col(j).sum();
        w[j] = nj / static_cast<double>(n);
        const Vector cw = resp.col(j).cwiseProduct(u.col(j));
        const Vector mu = x.transpose() * cw / cw.sum();
        const Matrix c = x.rowwise() - mu.transpose();
        Matrix s = c.transpose() * cw.asDiagonal() * c / nj;
        s = (0.5 * (s + s.transpose())).eval();
        s.diagonal().array() += opt.ridge * s.trace() / static_cast<double>(d);
        means.push_back(mu);
        covs.push_back(s);
      }
      w /= w.sum();
      try {
        model.emplace(family, w, means, covs);
      } catch (const Error &e) {
        last_error = e.what();
        failed = true;
        break;
      }
      const double ll = detail::e_step(*model, x, resp);
      if (!std::isfinite(ll)) {
        last_error = "non-finite log-likelihood";
        failed = true;
        break;
      }
      if (family.is_t()) {
        const double nu = family.nu;
        for (Eigen::Index j = 0; j < mm; ++j) {
          const auto js = static_cast<std::size_t>(j);
          for (Eigen::Index i = 0; i < n; ++i) {
            const Vector z = model->cholesky(js).triangularView<Eigen::Lower>().solve(
                x.row(i).transpose() - model->means()[js]);
            u(i, j) = (nu + static_cast<double>(d)) / (nu + z.squaredNorm());
          }
        }
      }
      if (!res.loglik_trace.empty()) {
        const double prev = res.loglik_trace.back();
        // The ridge makes each M-step very slightly inexact.
        if (ll < prev - 1e-9 * (1.0 + std::abs(prev))) res.monotone = false;
        res.loglik_trace.push_back(ll);
        res.iterations = it;
        if (ll - prev < opt.tolerance) {
          res.converged = true;
          break;
        }
      } else {
        res.loglik_trace.push_back(ll);
      }
      if ((resp.colwise().sum().array() < 1e-8 * static_cast<double>(n)).any()) {
        last_error = "a component lost all of its responsibility";
        failed = true;
        break;
      }
    }
    if (failed || !model) continue;
    res.model = *model;
    return res;
  }
  throw EstimationFailure("EM baseline failed after " + std::to_string(opt.max_restarts) +
                          " restarts: " + last_error);
}

} // namespace rpmix

#endif // RPMIX_EM_HPP
