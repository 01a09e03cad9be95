#ifndef RPMIX_MODEL_HPP
#define RPMIX_MODEL_HPP

#include "rpmix/common.hpp"

#include <limits>
#include <optional>
#include <string>

namespace rpmix {

/// Component family of a mixture. Student-t carries a single model-level
/// degrees-of-freedom parameter shared by every component.
struct Family {
  enum class Kind { Gaussian, StudentT };
  Kind kind = Kind::Gaussian;
  int nu = 0;

  static Family gaussian() { return {}; }
  static Family student_t(int nu) {
    if (nu < 1) throw InvalidArgument("Student-t degrees of freedom must be >= 1");
    return {Kind::StudentT, nu};
  }
  bool is_t() const { return kind == Kind::StudentT; }
  std::string name() const { return is_t() ? "student_t" : "gaussian"; }
  friend bool operator==(const Family &, const Family &) = default;
};

/// Throws NumericalError unless `m` is exactly symmetric with
/// min eigenvalue > 1e-12 * max eigenvalue.
inline void require_symmetric_pd(const Matrix &m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw InvalidArgument("covariance must be a non-empty square matrix");
  if (!m.allFinite()) throw NumericalError("covariance has non-finite entries");
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (m(i, j) != m(j, i)) throw NumericalError("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || lo <= 1e-12 * hi)
    throw NumericalError("covariance is singular or not positive definite");
}

/// Multivariate Gaussian or Student-t mixture, immutable after construction.
class MixtureModel {
public:
  MixtureModel(Family family, Vector weights, std::vector<Vector> means,
               std::vector<Matrix> covariances)
      : family_(family), weights_(std::move(weights)), means_(std::move(means)),
        covs_(std::move(covariances)) {
    const auto m = static_cast<std::size_t>(weights_.size());
    if (m == 0) throw InvalidArgument("mixture needs at least one component");
    if (means_.size() != m || covs_.size() != m)
      throw InvalidArgument("weights, means and covariances disagree on component count");
    if (family_.is_t() && family_.nu < 1)
      throw InvalidArgument("Student-t degrees of freedom must be >= 1");
    if ((weights_.array() < 0.0).any() || !weights_.allFinite())
      throw InvalidArgument("mixture weights must be nonnegative");
    if (std::abs(weights_.sum() - 1.0) > 1e-12)
      throw InvalidArgument("mixture weights must sum to 1");
    dim_ = means_.front().size();
    if (dim_ < 1) throw InvalidArgument("dimension must be >= 1");
    chol_.reserve(m);
    log_det_.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
      if (means_[j].size() != dim_ || covs_[j].rows() != dim_)
        throw InvalidArgument("component " + std::to_string(j + 1) +
                              " has the wrong dimension");
      require_symmetric_pd(covs_[j]);
      Eigen::LLT<Matrix> llt(covs_[j]);
      if (llt.info() != Eigen::Success)
        throw NumericalError("Cholesky factorization failed");
      Matrix l = llt.matrixL();
      log_det_.push_back(2.0 * l.diagonal().array().log().sum());
      chol_.push_back(std::move(l));
    }
  }

  const Family &family() const { return family_; }
  Eigen::Index dim() const { return dim_; }
  std::size_t components() const { return static_cast<std::size_t>(weights_.size()); }
  const Vector &weights() const { return weights_; }
  const std::vector<Vector> &means() const { return means_; }
  const std::vector<Matrix> &covariances() const { return covs_; }
  const Matrix &cholesky(std::size_t j) const { return chol_[j]; }

  /// log f_j(x) for component j, without the mixture weight.
  double log_component_density(std::size_t j, const Eigen::Ref<const Vector> &x) const {
    if (x.size() != dim_) throw InvalidArgument("point has the wrong dimension");
    const Vector z = chol_[j].triangularView<Eigen::Lower>().solve(x - means_[j]);
    const double q = z.squaredNorm();
    const double d = static_cast<double>(dim_);
    if (!family_.is_t())
      return -0.5 * d * std::log(2.0 * kPi) - 0.5 * log_det_[j] - 0.5 * q;
    const double nu = family_.nu;
    return std::lgamma(0.5 * (nu + d)) - std::lgamma(0.5 * nu) -
           0.5 * d * std::log(nu * kPi) - 0.5 * log_det_[j] -
           0.5 * (nu + d) * std::log1p(q / nu);
  }

  double log_density(const Eigen::Ref<const Vector> &x) const {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(components());
    for (std::size_t j = 0; j < components(); ++j) {
      terms[j] = std::log(weights_[j]) + log_component_density(j, x);
      best = std::max(best, terms[j]);
    }
    if (!std::isfinite(best)) return best;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s);
  }

  double density(const Eigen::Ref<const Vector> &x) const { return std::exp(log_density(x)); }

private:
  Family family_;
  Vector weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covs_;
  std::vector<Matrix> chol_;
  std::vector<double> log_det_;
  Eigen::Index dim_ = 0;
};

/// One-dimensional projected mixture: weights, locations and squared scales.
struct UnivariateMixture {
  Family family;
  Vector weights;
  Vector locations;
  Vector scales2;

  std::size_t components() const { return static_cast<std::size_t>(weights.size()); }

  void validate() const {
    const auto m = weights.size();
    if (m == 0 || locations.size() != m || scales2.size() != m)
      throw InvalidArgument("univariate mixture has inconsistent sizes");
    if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12)
      throw InvalidArgument("univariate mixture weights are not on the simplex");
    if (!(scales2.array() > 0.0).all() || !scales2.allFinite() || !locations.allFinite())
      throw InvalidArgument("univariate mixture scales must be positive and finite");
  }

  /// Component-wise variance (scale^2 for Gaussian, scale^2 nu/(nu-2) for t).
  double component_variance(std::size_t j) const {
    if (!family.is_t()) return scales2[j];
    if (family.nu <= 2) return std::numeric_limits<double>::infinity();
    return scales2[j] * family.nu / (family.nu - 2.0);
  }

  double mean() const { return weights.dot(locations); }

  double variance() const {
    const double mu = mean();
    double v = 0.0;
    for (std::size_t j = 0; j < components(); ++j)
      v += weights[j] * (component_variance(j) + (locations[j] - mu) * (locations[j] - mu));
    return v;
  }
};

/// Univariate component density f_j(y), without the weight.
inline double univariate_component_density(const UnivariateMixture &mix, std::size_t j,
                                           double y) {
  const double s2 = mix.scales2[j];
  const double r2 = (y - mix.locations[j]) * (y - mix.locations[j]) / s2;
  if (!mix.family.is_t()) return std::exp(-0.5 * r2) / std::sqrt(2.0 * kPi * s2);
  const double nu = mix.family.nu;
  const double logc = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                      0.5 * std::log(nu * kPi * s2);
  return std::exp(logc - 0.5 * (nu + 1.0) * std::log1p(r2 / nu));
}

inline double univariate_density(const UnivariateMixture &mix, double y) {
  double s = 0.0;
  for (std::size_t j = 0; j < mix.components(); ++j)
    s += mix.weights[j] * univariate_component_density(mix, j, y);
  return s;
}

/// Observations (rows) with optional 0-based component labels.
struct LabeledSample {
  Matrix data;
  std::optional<std::vector<int>> labels;

  Eigen::Index size() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }

  void validate(std::size_t m = 0) const {
    if (data.rows() < 1) throw InvalidArgument("sample must contain at least one row");
    if (!labels) return;
    if (static_cast<Eigen::Index>(labels->size()) != data.rows())
      throw InvalidArgument("label count does not match row count");
    for (int l : *labels)
      if (l < 0 || (m > 0 && static_cast<std::size_t>(l) >= m))
        throw InvalidArgument("label out of range");
  }
};

namespace detail {

inline Vector standard_normal_vector(Eigen::Index d, Rng &rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = z(rng);
  return v;
}

/// sqrt(chi2_nu / nu), the mixing variable of the Gaussian scale-mixture form.
inline double t_mixing_scale(int nu, Rng &rng) {
  std::chi_squared_distribution<double> chi(nu);
  double c = 0.0;
  do {
    c = chi(rng);
  } while (c <= 0.0);
  return std::sqrt(c / nu);
}

} // namespace detail

/// Draws n labeled observations; deterministic per seed.
inline LabeledSample sample(const MixtureModel &model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample size must be >= 1");
  Rng rng(seed);
  const std::vector<double> w(model.weights().data(),
                              model.weights().data() + model.weights().size());
  std::discrete_distribution<int> pick(w.begin(), w.end());
  LabeledSample out;
  out.data.resize(static_cast<Eigen::Index>(n), model.dim());
  out.labels = std::vector<int>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int j = pick(rng);
    (*out.labels)[i] = j;
    Vector z = detail::standard_normal_vector(model.dim(), rng);
    Vector x = model.cholesky(static_cast<std::size_t>(j)) * z;
    if (model.family().is_t()) x /= detail::t_mixing_scale(model.family().nu, rng);
    out.data.row(static_cast<Eigen::Index>(i)) =
        (model.means()[static_cast<std::size_t>(j)] + x).transpose();
  }
  return out;
}

/// Draws n values from a univariate mixture.
inline std::vector<double> sample_univariate(const UnivariateMixture &mix, std::size_t n,
                                             Rng &rng) {
  const std::vector<double> w(mix.weights.data(), mix.weights.data() + mix.weights.size());
  std::discrete_distribution<int> pick(w.begin(), w.end());
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> out(n);
  for (auto &y : out) {
    const auto j = static_cast<Eigen::Index>(pick(rng));
    double e = z(rng) * std::sqrt(mix.scales2[j]);
    if (mix.family.is_t()) e /= detail::t_mixing_scale(mix.family.nu, rng);
    y = mix.locations[j] + e;
  }
  return out;
}

inline void require_unit(const Eigen::Ref<const Vector> &u, double tol = 1e-10) {
  if (std::abs(u.norm() - 1.0) > tol)
    throw InvalidArgument("projection direction must have unit norm");
}

/// Law of <u, X> for X ~ model: locations <u, mu_j>, squared scales u' Sigma_j u.
inline UnivariateMixture project_model(const MixtureModel &model,
                                       const Eigen::Ref<const Vector> &u) {
  if (u.size() != model.dim()) throw InvalidArgument("direction has the wrong dimension");
  require_unit(u);
  const auto m = static_cast<Eigen::Index>(model.components());
  UnivariateMixture out{model.family(), model.weights(), Vector(m), Vector(m)};
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto js = static_cast<std::size_t>(j);
    out.locations[j] = u.dot(model.means()[js]);
    out.scales2[j] = u.dot(model.covariances()[js] * u);
  }
  return out;
}

inline std::vector<double> project_sample(const Matrix &data,
                                          const Eigen::Ref<const Vector> &u) {
  if (u.size() != data.cols()) throw InvalidArgument("direction has the wrong dimension");
  require_unit(u);
  const Vector y = data * u;
  return {y.data(), y.data() + y.size()};
}

/// MAP allocation argmax_j lambda_j f_j(x_i), evaluated in the log domain;
/// ties go to the smallest index.
inline std::vector<int> map_allocate(const MixtureModel &model, const Matrix &data) {
  if (data.cols() != model.dim()) throw InvalidArgument("data has the wrong dimension");
  std::vector<int> labels(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const Vector x = data.row(i).transpose();
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < model.components(); ++j) {
      const double s = std::log(model.weights()[static_cast<Eigen::Index>(j)]) +
                       model.log_component_density(j, x);
      if (s > best_score) {
        best_score = s;
        best = static_cast<int>(j);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

} // namespace rpmix

#endif // RPMIX_MODEL_HPP
