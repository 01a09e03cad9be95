#ifndef RPMIX_ECF_HPP
#define RPMIX_ECF_HPP

// Per-direction fitting of a univariate mixture by matching its
// characteristic function to the empirical one on a finite grid.

#include "rpmix/common.hpp"
#include "rpmix/model.hpp"
#include "rpmix/optim.hpp"
#include "rpmix/special.hpp"

#include <limits>
#include <optional>

namespace rpmix {

/// Equally spaced grid t_l = tau * l, l = 1..points.
struct EcfGrid {
  double tau = 0.1;
  int points = 20;

  EcfGrid() = default;
  EcfGrid(double tau_, int points_) : tau(tau_), points(points_) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("grid spacing must be positive");
    if (points < 1) throw InvalidArgument("grid needs at least one point");
  }

  double at(int l) const { return tau * (l + 1); }

  /// tau * points = span / spread(y); unit spread for constant data.
  static EcfGrid scale_adaptive(std::span<const double> y, int points = 20, double span = 4.0,
                                const Family &family = Family::gaussian());
};

/// Scale of a projected sample: the sample sd, or IQR / 1.349 for t
/// families with nu <= 2, whose variance is infinite.
inline double spread(std::span<const double> y, const Family &family) {
  if (!(family.is_t() && family.nu <= 2) || y.size() < 2) return sample_sd(y);
  const std::vector<double> v(y.begin(), y.end());
  return (quantile_of(v, 0.75) - quantile_of(v, 0.25)) / 1.349;
}

inline EcfGrid EcfGrid::scale_adaptive(std::span<const double> y, int points, double span, const Family &family) {
  double sd = spread(y, family);
  if (!(sd > 0.0) || !std::isfinite(sd)) sd = 1.0;
  return {span / (points * sd), points};
}

/// Positive semidefinite weighting of the 2M moment coordinates.
struct WeightMatrix {
  enum class Mode { Identity, Diagonal };
  Mode mode = Mode::Identity;
  Vector diagonal;  // length 2M when mode == Diagonal

  static WeightMatrix identity() { return {}; }

  /// Diagonal 1 / (1 + t_l^2), applied to both the real and imaginary parts.
  static WeightMatrix damped(const EcfGrid &grid) {
    Vector w(2 * grid.points);
    for (int l = 0; l < grid.points; ++l)
      w[l] = w[grid.points + l] = 1.0 / (1.0 + grid.at(l) * grid.at(l));
    return {Mode::Diagonal, std::move(w)};
  }

  Vector as_diagonal(int points) const {
    if (mode == Mode::Identity) return Vector::Ones(2 * points);
    if (diagonal.size() != 2 * points) throw InvalidArgument("weight matrix size mismatch");
    if ((diagonal.array() <= 0.0).any()) throw InvalidArgument("weights must be positive");
    return diagonal;
  }
};

/// (Re psi(t_1..t_M), Im psi(t_1..t_M)) of the empirical law of y.
inline Vector empirical_cf(std::span<const double> y, const EcfGrid &grid) {
  if (y.empty()) throw InvalidArgument("empirical CF needs at least one value");
  const int mm = grid.points;
  Vector z = Vector::Zero(2 * mm);
  for (int l = 0; l < mm; ++l) {
    const double t = grid.at(l);
    double re = 0.0, im = 0.0;
    for (double v : y) {
      re += std::cos(t * v);
      im += std::sin(t * v);
    }
    z[l] = re / static_cast<double>(y.size());
    z[mm + l] = im / static_cast<double>(y.size());
  }
  return z;
}

namespace detail {

/// Modulus c_j(t) of a component CF and d c_j / d log(scale^2).
inline std::pair<double, double> cf_modulus(const Family &family, double scale2, double t) {
  if (!family.is_t()) {
    const double c = std::exp(-0.5 * t * t * scale2);
    return {c, -0.5 * t * t * scale2 * c};
  }
  const double z = std::sqrt(family.nu * scale2) * std::abs(t);
  const TKernel k = t_cf_kernel(family.nu, z);
  return {k.value, 0.5 * z * k.derivative};
}

} // namespace detail

/// Model moment vector of a univariate Gaussian or Student-t mixture.
inline Vector model_cf(const UnivariateMixture &mix, const EcfGrid &grid) {
  mix.validate();
  const int mm = grid.points;
  Vector z = Vector::Zero(2 * mm);
  for (int l = 0; l < mm; ++l) {
    const double t = grid.at(l);
    for (std::size_t j = 0; j < mix.components(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double c = detail::cf_modulus(mix.family, mix.scales2[jj], t).first;
      z[l] += mix.weights[jj] * c * std::cos(t * mix.locations[jj]);
      z[mm + l] += mix.weights[jj] * c * std::sin(t * mix.locations[jj]);
    }
  }
  return z;
}

/// Q = (target - Z)' W (target - Z) for a diagonal W.
inline double ecf_criterion(const UnivariateMixture &mix, const Vector &target,
                            const EcfGrid &grid, const WeightMatrix &w) {
  const Vector r = target - model_cf(mix, grid);
  return (w.as_diagonal(grid.points).array() * r.array().square()).sum();
}

/// Q as a smooth function of an unconstrained parameter vector:
///   [softmax logits a_1..a_{m-1} (a_m = 0), if weights are free]
///   [locations of active components] [log scale^2 of active components].
/// Inactive components (zero fixed weight) keep the values in `base`.
class EcfObjective {
public:
  EcfObjective(Family family, EcfGrid grid, Vector target, Vector wdiag,
               UnivariateMixture base, bool free_weights)
      : family_(family), grid_(grid), target_(std::move(target)), w_(std::move(wdiag)),
        base_(std::move(base)), free_weights_(free_weights) {
    const auto m = base_.components();
    for (std::size_t j = 0; j < m; ++j)
      if (free_weights_ || base_.weights[static_cast<Eigen::Index>(j)] > 0.0) active_.push_back(j);
    t_.resize(static_cast<std::size_t>(grid_.points));
    for (int l = 0; l < grid_.points; ++l) t_[static_cast<std::size_t>(l)] = grid_.at(l);
  }

  Eigen::Index size() const {
    return static_cast<Eigen::Index>((free_weights_ ? base_.components() - 1 : 0) + 2 * active_.size());
  }
  const std::vector<std::size_t> &active() const { return active_; }
  bool free_weights() const { return free_weights_; }

  Vector pack(const UnivariateMixture &mix) const {
    Vector theta(size());
    Eigen::Index p = 0;
    const auto m = static_cast<Eigen::Index>(mix.components());
    if (free_weights_) {
      const double last = std::max(mix.weights[m - 1], 1e-8);
      for (Eigen::Index j = 0; j + 1 < m; ++j)
        theta[p++] = std::log(std::max(mix.weights[j], 1e-8) / last);
    }
    for (auto j : active_) theta[p++] = mix.locations[static_cast<Eigen::Index>(j)];
    for (auto j : active_) theta[p++] = std::log(mix.scales2[static_cast<Eigen::Index>(j)]);
    return theta;
  }

  UnivariateMixture unpack(const Vector &theta) const {
    UnivariateMixture mix = base_;
    mix.family = family_;
    Eigen::Index p = 0;
    const auto m = static_cast<Eigen::Index>(mix.components());
    if (free_weights_) {
      Vector a = Vector::Zero(m);
      for (Eigen::Index j = 0; j + 1 < m; ++j) a[j] = theta[p++];
      const double amax = a.maxCoeff();
      a = (a.array() - amax).exp();
      mix.weights = a / a.sum();
    }
    for (auto j : active_) mix.locations[static_cast<Eigen::Index>(j)] = theta[p++];
    for (auto j : active_) mix.scales2[static_cast<Eigen::Index>(j)] = std::exp(theta[p++]);
    return mix;
  }

  double operator()(const Vector &theta, Vector *grad = nullptr) const {
    const UnivariateMixture mix = unpack(theta);
    const int mm = grid_.points;
    const auto m = static_cast<Eigen::Index>(mix.components());
    // A scale so wide that its CF vanishes on the whole grid is unidentified.
    const double cap = 1e4 / (t_.front() * t_.front());
    for (Eigen::Index j = 0; j < m; ++j)
      if (!(mix.scales2[j] > 0.0) || !(mix.scales2[j] < cap))
        return std::numeric_limits<double>::infinity();
    // Per (l, j): modulus, its log-scale derivative, cos and sin.
    Matrix c(mm, m), dc(mm, m), co(mm, m), si(mm, m);
    Vector r = target_;
    for (int l = 0; l < mm; ++l) {
      const double t = t_[static_cast<std::size_t>(l)];
      for (Eigen::Index j = 0; j < m; ++j) {
        const auto [cv, dcv] = detail::cf_modulus(family_, mix.scales2[j], t);
        c(l, j) = cv;
        dc(l, j) = dcv;
        co(l, j) = std::cos(t * mix.locations[j]);
        si(l, j) = std::sin(t * mix.locations[j]);
        r[l] -= mix.weights[j] * cv * co(l, j);
        r[mm + l] -= mix.weights[j] * cv * si(l, j);
      }
    }
    const double q = (w_.array() * r.array().square()).sum();
    if (grad == nullptr) return q;
    // dQ/dZ = -2 W r
    const Vector gz = -2.0 * (w_.array() * r.array()).matrix();
    Vector g_lambda = Vector::Zero(m), g_loc = Vector::Zero(m), g_ls = Vector::Zero(m);
    for (int l = 0; l < mm; ++l) {
      const double t = t_[static_cast<std::size_t>(l)];
      const double gr = gz[l], gi = gz[mm + l];
      for (Eigen::Index j = 0; j < m; ++j) {
        const double lam = mix.weights[j];
        g_lambda[j] += gr * c(l, j) * co(l, j) + gi * c(l, j) * si(l, j);
        g_loc[j] += lam * c(l, j) * t * (-gr * si(l, j) + gi * co(l, j));
        g_ls[j] += lam * dc(l, j) * (gr * co(l, j) + gi * si(l, j));
      }
    }
    grad->resize(size());
    Eigen::Index p = 0;
    if (free_weights_) {
      const double avg = mix.weights.dot(g_lambda);
      for (Eigen::Index j = 0; j + 1 < m; ++j) (*grad)[p++] = mix.weights[j] * (g_lambda[j] - avg);
    }
    for (auto j : active_) (*grad)[p++] = g_loc[static_cast<Eigen::Index>(j)];
    for (auto j : active_) (*grad)[p++] = g_ls[static_cast<Eigen::Index>(j)];
    return q;
  }

private:
  Family family_;
  EcfGrid grid_;
  Vector target_;
  Vector w_;
  UnivariateMixture base_;
  bool free_weights_;
  std::vector<std::size_t> active_;
  std::vector<double> t_;
};

enum class OptimizerKind { Auto, Bfgs, NelderMead };

struct EcfOptions {
  int max_gradient_steps = 200;
  int max_evaluations = 500;
  int restarts = 3;
  OptimizerKind optimizer = OptimizerKind::Auto;
};

struct EcfFitResult {
  std::size_t direction_index = 0;
  UnivariateMixture fitted;
  UnivariateMixture initial;
  double criterion = 0.0;
  bool converged = false;
  bool screen_passed = false;
  int iterations = 0;
  int evaluations = 0;
  std::vector<double> trace;
};

struct InitResult {
  UnivariateMixture mixture;
  bool screen_passed = false;
  std::vector<std::size_t> cluster_sizes;
  double min_gap = 0.0;
};

namespace detail {

/// 1-D k-means with k-means++ seeding; returns centroids sorted ascending.
inline std::vector<double> kmeans_1d(std::span<const double> y, std::size_t m, Rng &rng,
                                     int max_iterations = 50) {
  const std::size_t n = y.size();
  std::vector<double> centers;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centers.push_back(y[first(rng)]);
  std::vector<double> d2(n);
  while (centers.size() < m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (y[i] - c) * (y[i] - c));
      d2[i] = best;
      total += best;
    }
    if (!(total > 0.0)) {
      centers.push_back(centers.back());
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng), acc = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= target) {
        pick = i;
        break;
      }
    }
    centers.push_back(y[pick]);
  }
  std::vector<std::size_t> assign(n, 0);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < m; ++j)
        if (std::abs(y[i] - centers[j]) < std::abs(y[i] - centers[best])) best = j;
      if (best != assign[i]) changed = true;
      assign[i] = best;
    }
    std::vector<double> sum(m, 0.0);
    std::vector<std::size_t> cnt(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += y[i];
      ++cnt[assign[i]];
    }
    for (std::size_t j = 0; j < m; ++j)
      if (cnt[j] > 0) centers[j] = sum[j] / static_cast<double>(cnt[j]);
    if (!changed) break;
  }
  std::sort(centers.begin(), centers.end());
  return centers;
}

} // namespace detail

/// k-means initialization and screening for one projected sample: locations
/// are within-cluster means, squared scales within-cluster variances floored
/// at (0.05 sd)^2, weights cluster proportions refined by one soft-EM pass.
/// Screening requires every cluster to hold >= max(5, 0.02 N) points and all
/// centroid gaps >= 0.1 sd.
inline InitResult init_step(std::span<const double> y, std::size_t m, const Family &family,
                            std::uint64_t seed) {
  const std::size_t n = y.size();
  if (m < 1) throw InvalidArgument("component count must be >= 1");
  if (n < 10 * m) throw InvalidArgument("need at least 10 observations per component");
  const double sd = spread(y, family);
  Rng rng(seed);
  // Heavy tails: cluster a winsorized copy so single outliers cannot take a center.
  std::vector<double> clipped(y.begin(), y.end());
  if (family.is_t() && family.nu <= 2 && sd > 0.0) {
    const double mid = median_of(clipped);
    for (double &v : clipped) v = std::clamp(v, mid - 6.0 * sd, mid + 6.0 * sd);
  }
  y = clipped;
  const std::vector<double> centers = detail::kmeans_1d(y, m, rng);
  std::vector<double> sum(m, 0.0), sum2(m, 0.0);
  std::vector<std::size_t> cnt(m, 0);
  for (double v : y) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m; ++j)
      if (std::abs(v - centers[j]) < std::abs(v - centers[best])) best = j;
    sum[best] += v;
    sum2[best] += v * v;
    ++cnt[best];
  }
  InitResult out;
  const auto mm = static_cast<Eigen::Index>(m);
  out.mixture = {family, Vector(mm), Vector(mm), Vector(mm)};
  const double floor2 = std::max(0.05 * sd * 0.05 * sd, 1e-300);
  const double t_factor = family.is_t() && family.nu > 2 ? (family.nu - 2.0) / family.nu : 1.0;
  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double c = static_cast<double>(cnt[j]);
    const double mean = cnt[j] > 0 ? sum[j] / c : centers[j];
    const double var = cnt[j] > 1 ? std::max(0.0, sum2[j] / c - mean * mean) * c / (c - 1.0) : 0.0;
    out.mixture.locations[jj] = mean;
    out.mixture.scales2[jj] = std::max(var * t_factor, floor2);
    out.mixture.weights[jj] = c / static_cast<double>(n);
  }
  out.cluster_sizes = cnt;
  out.min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j < m; ++j)
    out.min_gap = std::min(out.min_gap, out.mixture.locations[static_cast<Eigen::Index>(j)] -
                                            out.mixture.locations[static_cast<Eigen::Index>(j - 1)]);
  const double min_count = std::max(5.0, 0.02 * static_cast<double>(n));
  out.screen_passed = sd > 0.0 && std::isfinite(sd);
  for (auto c : cnt)
    if (static_cast<double>(c) < min_count) out.screen_passed = false;
  if (m > 1 && !(out.min_gap >= 0.1 * sd)) out.screen_passed = false;

  if (m > 1 && sd > 0.0) {
    // One soft-EM responsibility pass for the weights only.
    Vector acc = Vector::Zero(mm);
    Vector logp(mm);
    UnivariateMixture &mix = out.mixture;
    for (double v : y) {
      for (Eigen::Index j = 0; j < mm; ++j) {
        const double f = univariate_component_density(mix, static_cast<std::size_t>(j), v);
        logp[j] = mix.weights[j] > 0.0 && f > 0.0 ? std::log(mix.weights[j]) + std::log(f)
                                                  : -std::numeric_limits<double>::infinity();
      }
      const double mx = logp.maxCoeff();
      if (!std::isfinite(mx)) continue;
      const Vector p = (logp.array() - mx).exp();
      acc += p / p.sum();
    }
    if (acc.sum() > 0.0) mix.weights = acc / acc.sum();
  }
  out.mixture.weights /= out.mixture.weights.sum();
  return out;
}

namespace detail {

inline OptimResult run_optimizer(const EcfObjective &obj, const Vector &theta0, double sd,
                                 const EcfOptions &opt) {
  OptimizerKind kind = opt.optimizer;
  if (kind == OptimizerKind::Auto)
    kind = obj.unpack(theta0).family.is_t() ? OptimizerKind::NelderMead : OptimizerKind::Bfgs;
  if (kind == OptimizerKind::Bfgs)
    return minimize_bfgs([&](const Vector &x, Vector *g) { return obj(x, g); }, theta0,
                         opt.max_gradient_steps);
  Vector step(theta0.size());
  Eigen::Index p = 0;
  const auto na = static_cast<Eigen::Index>(obj.active().size());
  if (obj.free_weights())
    for (; p < theta0.size() - 2 * na; ++p) step[p] = 0.5;
  for (Eigen::Index j = 0; j < na; ++j) step[p++] = 0.1 * (sd > 0.0 ? sd : 1.0);
  for (Eigen::Index j = 0; j < na; ++j) step[p++] = 0.3;
  return minimize_nelder_mead([&](const Vector &x) { return obj(x); }, theta0, step,
                              opt.max_evaluations);
}

inline void sort_by_location(UnivariateMixture &mix) {
  const auto m = static_cast<Eigen::Index>(mix.components());
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return mix.locations[a] < mix.locations[b];
  });
  UnivariateMixture out = mix;
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto s = idx[static_cast<std::size_t>(j)];
    out.weights[j] = mix.weights[s];
    out.locations[j] = mix.locations[s];
    out.scales2[j] = mix.scales2[s];
  }
  mix = std::move(out);
}

inline void fill_result(EcfFitResult &res, const EcfObjective &obj, const OptimResult &o) {
  res.fitted = obj.unpack(o.x);
  res.criterion = o.value;
  res.converged = o.converged;
  res.iterations = o.iterations;
  res.evaluations = o.evaluations;
  res.trace = o.trace;
}

} // namespace detail

/// Step 1: minimize Q over weights, locations and squared scales, starting
/// from the k-means initialization (plus perturbed restarts when m > 1).
/// A screen failure returns the initialization unoptimized.
inline EcfFitResult fit_step1(std::span<const double> y, std::size_t m, const Family &family,
                              const EcfGrid &grid, const WeightMatrix &w, std::uint64_t init_seed,
                              const EcfOptions &opt = {}) {
  if (grid.points * 2 < static_cast<int>(3 * m - 1))
    throw InvalidArgument("grid has fewer moment coordinates than free parameters");
  const InitResult init = init_step(y, m, family, init_seed);
  const Vector target = empirical_cf(y, grid);
  const Vector wdiag = w.as_diagonal(grid.points);
  const double sd = spread(y, family);
  EcfFitResult res;
  res.initial = init.mixture;
  res.screen_passed = init.screen_passed;
  if (!init.screen_passed) {
    res.fitted = init.mixture;
    res.criterion = ecf_criterion(init.mixture, target, grid, w);
    res.trace = {res.criterion};
    return res;
  }
  const bool free_weights = m > 1;
  const int starts = m > 1 ? std::max(1, opt.restarts) : 1;
  bool have = false;
  for (int s = 0; s < starts; ++s) {
    UnivariateMixture start = init.mixture;
    if (s > 0) {
      const std::uint64_t seed_s = derive_seed(init_seed, static_cast<std::uint64_t>(s));
      start = init_step(y, m, family, seed_s).mixture;
      Rng rng(derive_seed(seed_s, 0xA11CEULL));
      std::normal_distribution<double> z(0.0, 1.0);
      for (Eigen::Index j = 0; j < start.locations.size(); ++j) start.locations[j] += 0.1 * sd * z(rng);
    }
    const EcfObjective obj(family, grid, target, wdiag, start, free_weights);
    const OptimResult o = detail::run_optimizer(obj, obj.pack(start), sd, opt);
    if (!have || o.value < res.criterion) {
      detail::fill_result(res, obj, o);
      have = true;
    }
  }
  detail::sort_by_location(res.fitted);
  return res;
}

/// Step 2: weights pinned at `weights_fixed`; minimize Q over the locations
/// and squared scales of components with positive weight, starting at `init`.
/// Component order of `init` is preserved.
inline EcfFitResult fit_step2(std::span<const double> y, const Family &family, const EcfGrid &grid,
                              const WeightMatrix &w, const Vector &weights_fixed,
                              const UnivariateMixture &init, const EcfOptions &opt = {}) {
  const auto m = static_cast<std::size_t>(weights_fixed.size());
  if (init.components() != m) throw InvalidArgument("initial mixture has the wrong component count");
  if (y.size() < 10 * m) throw InvalidArgument("need at least 10 observations per component");
  UnivariateMixture base = init;
  base.family = family;
  base.weights = weights_fixed;
  base.validate();
  const Vector target = empirical_cf(y, grid);
  const EcfObjective obj(family, grid, target, w.as_diagonal(grid.points), base, false);
  const OptimResult o = detail::run_optimizer(obj, obj.pack(base), spread(y, family), opt);
  EcfFitResult res;
  res.initial = base;
  res.screen_passed = true;
  detail::fill_result(res, obj, o);
  return res;
}

} // namespace rpmix

#endif // RPMIX_ECF_HPP
