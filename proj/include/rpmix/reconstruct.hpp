#ifndef RPMIX_RECONSTRUCT_HPP
#define RPMIX_RECONSTRUCT_HPP

// Recovery of mean vectors and covariance matrices in R^d from per-direction
// projected locations and squared scales.

#include "rpmix/directions.hpp"

#include <limits>

namespace rpmix {

struct ProjectedEstimates {
  DirectionSet directions;
  Matrix locations;  // k x m
  Matrix scales2;    // k x m
  std::vector<bool> usable;

  Eigen::Index components() const { return locations.cols(); }

  void validate() const {
    const Eigen::Index k = directions.size();
    if (locations.rows() != k || scales2.rows() != k || locations.cols() != scales2.cols() ||
        static_cast<Eigen::Index>(usable.size()) != k)
      throw InvalidArgument("projected estimates have inconsistent shapes");
    for (Eigen::Index r = 0; r < k; ++r)
      if (usable[static_cast<std::size_t>(r)] && !(scales2.row(r).array() > 0.0).all())
        throw InvalidArgument("usable rows need positive squared scales");
  }

  std::vector<Eigen::Index> usable_rows() const {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index r = 0; r < directions.size(); ++r)
      if (usable[static_cast<std::size_t>(r)]) rows.push_back(r);
    return rows;
  }
};

enum class SolverTier { Unconstrained, Clipped, Barrier };

inline const char *to_string(SolverTier t) {
  switch (t) {
  case SolverTier::Unconstrained: return "unconstrained";
  case SolverTier::Clipped: return "clipped";
  case SolverTier::Barrier: return "barrier";
  }
  return "unknown";
}

struct ReconstructionMethod {
  enum class Kind { L2, L1, MedianOfMeans };
  Kind kind = Kind::L2;
  int splits = 0;  // L for median of means

  static ReconstructionMethod l2() { return {}; }
  static ReconstructionMethod l1() { return {Kind::L1, 0}; }
  static ReconstructionMethod median_of_means(int l) {
    if (l < 1) throw InvalidArgument("median of means needs L >= 1");
    return {Kind::MedianOfMeans, l};
  }
  std::string name() const {
    switch (kind) {
    case Kind::L2: return "l2";
    case Kind::L1: return "l1";
    case Kind::MedianOfMeans: return "mom:" + std::to_string(splits);
    }
    return "unknown";
  }
};

struct CovarianceSolve {
  Matrix sigma;
  SolverTier tier = SolverTier::Unconstrained;
  double raw_min_eigenvalue = 0.0;
  int barrier_iterations = 0;  // Newton steps summed over the path
  double gradient_residual = 0.0;
  double objective = 0.0;
};

struct ReconstructionResult {
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  std::vector<double> mean_residuals;
  std::vector<double> covariance_residuals;
  std::vector<SolverTier> tiers;
  std::vector<int> barrier_iterations;
  ReconstructionMethod method;
  std::vector<std::vector<double>> objective_traces;  // L1 only, per component
};

/// Symmetrize and clip negative eigenvalues to zero; result is exactly symmetric.
inline Matrix psd_clip(const Matrix &m) {
  Matrix s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.eigenvalues().minCoeff() < 0.0) {
    const Vector ev = es.eigenvalues().cwiseMax(0.0);
    s = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = i + 1; j < s.cols(); ++j) s(j, i) = s(i, j) = 0.5 * (s(i, j) + s(j, i));
  return s;
}

inline Matrix compound_symmetry(Eigen::Index d, double x) {
  return (1.0 - x) * Matrix::Identity(d, d) + x * Matrix::Ones(d, d);
}

namespace detail {

inline Matrix select_rows(const Matrix &a, const std::vector<Eigen::Index> &rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = a.row(rows[i]);
  return out;
}

inline Vector select(const Vector &v, const std::vector<Eigen::Index> &rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

inline Vector weighted_ls(const Matrix &a, const Vector &b, const Vector *w) {
  if (w == nullptr) return a.colPivHouseholderQr().solve(b);
  const Vector sw = w->array().sqrt();
  return (sw.asDiagonal() * a).colPivHouseholderQr().solve(sw.asDiagonal() * b);
}

inline void require_mean_design(const Matrix &u) {
  const Eigen::Index d = u.cols();
  if (u.rows() < d)
    throw EstimationFailure("mean reconstruction needs at least d = " + std::to_string(d) +
                            " usable directions, got " + std::to_string(u.rows()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(u.transpose() * u, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo >= 1e12)
    throw EstimationFailure("direction matrix U is rank deficient (cond(U'U) >= 1e12)");
}

inline void require_covariance_design(const Matrix &a, Eigen::Index d) {
  const Eigen::Index cols = vecsym_size(d);
  if (a.rows() < cols || numerical_rank(a) != cols)
    throw EstimationFailure(
        "covariance reconstruction is not unique: the outer products u u' of the usable "
        "directions do not span the symmetric matrices (design rank < d(d+1)/2)");
}

} // namespace detail

/// Least-squares recovery of mu from <u_r, mu> ~ v_r (optionally weighted).
inline Vector solve_mean(const Matrix &u, const Vector &v, const Vector *w = nullptr) {
  detail::require_mean_design(u);
  return detail::weighted_ls(u, v, w);
}

/// argmin over the PSD cone of sum_r w_r (u_r' S u_r - s_r)^2 with design
/// A = vecsym_design(U). Tiers: unconstrained least squares; eigenvalue clip
/// when the optimum is PSD up to -1e-8 ||S||; otherwise a log-det barrier
/// path t f(S) - log det S with Newton steps, doubling t from 1 until d/t < 1e-9.
inline CovarianceSolve solve_covariance(const Matrix &a, const Vector &s, Eigen::Index d,
                                        const Vector *w = nullptr) {
  const Eigen::Index cols = vecsym_size(d);
  if (a.cols() != cols || a.rows() != s.size()) throw InvalidArgument("design shape mismatch");
  const Vector wv = w ? *w : Vector::Ones(a.rows());
  auto objective = [&](const Vector &theta) {
    return (wv.array() * (a * theta - s).array().square()).sum();
  };
  CovarianceSolve out;
  const Vector theta_ls = detail::weighted_ls(a, s, w);
  Matrix sigma = unvecsym(theta_ls, d);
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma, Eigen::EigenvaluesOnly);
  out.raw_min_eigenvalue = es.eigenvalues().minCoeff();
  const double norm2 = es.eigenvalues().cwiseAbs().maxCoeff();
  if (out.raw_min_eigenvalue >= -1e-8 * norm2) {
    out.tier = out.raw_min_eigenvalue >= 0.0 ? SolverTier::Unconstrained : SolverTier::Clipped;
    out.sigma = psd_clip(sigma);
    out.objective = objective(vecsym(out.sigma));
    return out;
  }

  out.tier = SolverTier::Barrier;
  const Matrix ata = a.transpose() * wv.asDiagonal() * a;
  const Vector atb = a.transpose() * (wv.array() * s.array()).matrix();
  // Basis matrices E_c = unvecsym(e_c).
  std::vector<Matrix> basis;
  for (Eigen::Index c = 0; c < cols; ++c) basis.push_back(unvecsym(Vector::Unit(cols, c), d));
  double scale = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) scale = std::max(scale, s[i]);
  scale = scale > 0.0 ? scale : 1.0;
  Vector theta = vecsym(scale * Matrix::Identity(d, d));
  double t = 1.0;
  auto barrier = [&](const Vector &th, double tt, double &value) -> bool {
    Eigen::LLT<Matrix> llt(unvecsym(th, d));
    if (llt.info() != Eigen::Success) return false;
    const Matrix l = llt.matrixL();
    if ((l.diagonal().array() <= 0.0).any()) return false;
    value = tt * objective(th) - 2.0 * l.diagonal().array().log().sum();
    return std::isfinite(value);
  };
  Vector grad(cols);
  for (int outer = 0; outer < 200; ++outer) {
    for (int inner = 0; inner < 100; ++inner) {
      const Matrix sig = unvecsym(theta, d);
      const Matrix inv = sig.llt().solve(Matrix::Identity(d, d));
      grad = 2.0 * t * (ata * theta - atb) - vecsym(inv);
      Matrix h = 2.0 * t * ata;
      for (Eigen::Index c = 0; c < cols; ++c) h.col(c) += vecsym(inv * basis[static_cast<std::size_t>(c)] * inv);
      const Vector step = -h.ldlt().solve(grad);
      const double decrement = -grad.dot(step);
      if (!(decrement > 1e-14)) break;
      double f0 = 0.0;
      barrier(theta, t, f0);
      double alpha = 1.0, f1 = 0.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vector cand = theta + alpha * step;
        if (barrier(cand, t, f1) && f1 <= f0 - 0.25 * alpha * decrement) {
          theta = cand;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      ++out.barrier_iterations;
      if (!moved) break;
    }
    if (static_cast<double>(d) / t < 1e-9) break;
    t *= 2.0;
  }
  {
    const Matrix inv = unvecsym(theta, d).llt().solve(Matrix::Identity(d, d));
    out.gradient_residual = (2.0 * (ata * theta - atb) - vecsym(inv) / t).norm();
  }
  out.sigma = psd_clip(unvecsym(theta, d));
  out.objective = objective(vecsym(out.sigma));
  return out;
}

inline std::vector<Vector> reconstruct_means(const ProjectedEstimates &est) {
  est.validate();
  const auto rows = est.usable_rows();
  const Matrix u = detail::select_rows(est.directions.vectors(), rows);
  detail::require_mean_design(u);
  std::vector<Vector> out;
  for (Eigen::Index j = 0; j < est.components(); ++j)
    out.push_back(detail::weighted_ls(u, detail::select(est.locations.col(j), rows), nullptr));
  return out;
}

inline std::vector<CovarianceSolve> reconstruct_covariances_detailed(const ProjectedEstimates &est) {
  est.validate();
  const auto rows = est.usable_rows();
  const Eigen::Index d = est.directions.dim();
  const Matrix a = vecsym_design(detail::select_rows(est.directions.vectors(), rows));
  detail::require_covariance_design(a, d);
  std::vector<CovarianceSolve> out;
  for (Eigen::Index j = 0; j < est.components(); ++j)
    out.push_back(solve_covariance(a, detail::select(est.scales2.col(j), rows), d));
  return out;
}

inline std::vector<Matrix> reconstruct_covariances(const ProjectedEstimates &est) {
  std::vector<Matrix> out;
  for (auto &c : reconstruct_covariances_detailed(est)) out.push_back(std::move(c.sigma));
  return out;
}

/// Least-squares reconstruction of every component.
inline ReconstructionResult reconstruct(const ProjectedEstimates &est) {
  ReconstructionResult res;
  res.method = ReconstructionMethod::l2();
  res.means = reconstruct_means(est);
  const auto rows = est.usable_rows();
  const Matrix u = detail::select_rows(est.directions.vectors(), rows);
  const Matrix a = vecsym_design(u);
  for (auto &c : reconstruct_covariances_detailed(est)) {
    res.covariances.push_back(c.sigma);
    res.tiers.push_back(c.tier);
    res.barrier_iterations.push_back(c.barrier_iterations);
  }
  for (Eigen::Index j = 0; j < est.components(); ++j) {
    const auto jj = static_cast<std::size_t>(j);
    res.mean_residuals.push_back((u * res.means[jj] - detail::select(est.locations.col(j), rows)).norm());
    res.covariance_residuals.push_back(
        (a * vecsym(res.covariances[jj]) - detail::select(est.scales2.col(j), rows)).norm());
  }
  return res;
}

/// Least-absolute-deviation reconstruction by iteratively reweighted least
/// squares (weights 1/max(|residual|, 1e-8), up to 100 iterations). Each
/// covariance iterate is the weighted PSD-constrained solve.
inline ReconstructionResult reconstruct_l1(const ProjectedEstimates &est, int iterations = 100) {
  est.validate();
  const auto rows = est.usable_rows();
  const Eigen::Index d = est.directions.dim();
  const Matrix u = detail::select_rows(est.directions.vectors(), rows);
  detail::require_mean_design(u);
  const Matrix a = vecsym_design(u);
  detail::require_covariance_design(a, d);
  ReconstructionResult res;
  res.method = ReconstructionMethod::l1();
  auto irls = [&](const Matrix &design, const Vector &target, auto &&solve,
                  std::vector<double> &trace) {
    Vector theta = solve(nullptr);
    double obj = (design * theta - target).cwiseAbs().sum();
    trace.push_back(obj);
    for (int it = 0; it < iterations; ++it) {
      const Vector w = (design * theta - target).cwiseAbs().cwiseMax(1e-8).cwiseInverse();
      const Vector next = solve(&w);
      const double next_obj = (design * next - target).cwiseAbs().sum();
      if (next_obj > obj) break;  // rounding-level stall
      theta = next;
      const double change = obj - next_obj;
      obj = next_obj;
      trace.push_back(obj);
      if (change <= 1e-13 * (1.0 + obj)) break;
    }
    return theta;
  };
  for (Eigen::Index j = 0; j < est.components(); ++j) {
    const Vector v = detail::select(est.locations.col(j), rows);
    const Vector s2 = detail::select(est.scales2.col(j), rows);
    std::vector<double> mtrace, ctrace;
    const Vector mu = irls(u, v, [&](const Vector *w) { return detail::weighted_ls(u, v, w); }, mtrace);
    SolverTier tier = SolverTier::Unconstrained;
    int barrier_its = 0;
    const Vector theta = irls(a, s2, [&](const Vector *w) {
      CovarianceSolve c = solve_covariance(a, s2, d, w);
      tier = c.tier;
      barrier_its += c.barrier_iterations;
      return vecsym(c.sigma);
    }, ctrace);
    res.means.push_back(mu);
    res.covariances.push_back(psd_clip(unvecsym(theta, d)));
    res.tiers.push_back(tier);
    res.barrier_iterations.push_back(barrier_its);
    res.mean_residuals.push_back((u * mu - v).cwiseAbs().sum());
    res.covariance_residuals.push_back((a * theta - s2).cwiseAbs().sum());
    res.objective_traces.push_back(std::move(ctrace));
    res.objective_traces.push_back(std::move(mtrace));
  }
  return res;
}

/// Coordinatewise median of L independent least-squares reconstructions,
/// one per disjoint data split. Covariance medians are taken entrywise and
/// repaired to PSD by eigenvalue clipping.
inline ReconstructionResult reconstruct_median_of_means(std::span<const ProjectedEstimates> splits) {
  if (splits.empty()) throw InvalidArgument("median of means needs at least one split");
  std::vector<ReconstructionResult> parts;
  for (const auto &e : splits) parts.push_back(reconstruct(e));
  const std::size_t m = parts.front().means.size();
  const Eigen::Index d = splits.front().directions.dim();
  ReconstructionResult res;
  res.method = ReconstructionMethod::median_of_means(static_cast<int>(splits.size()));
  for (std::size_t j = 0; j < m; ++j) {
    Vector mu(d);
    Matrix sig(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
      std::vector<double> vals;
      for (const auto &p : parts) vals.push_back(p.means[j][a]);
      mu[a] = median_of(vals);
      for (Eigen::Index b = 0; b < d; ++b) {
        std::vector<double> cv;
        for (const auto &p : parts) cv.push_back(p.covariances[j](a, b));
        sig(a, b) = median_of(cv);
      }
    }
    res.means.push_back(mu);
    res.covariances.push_back(psd_clip(sig));
    res.tiers.push_back(parts.front().tiers[j]);
    res.barrier_iterations.push_back(0);
    double mr = 0.0, cr = 0.0;
    for (const auto &p : parts) {
      mr += p.mean_residuals[j];
      cr += p.covariance_residuals[j];
    }
    res.mean_residuals.push_back(mr / static_cast<double>(parts.size()));
    res.covariance_residuals.push_back(cr / static_cast<double>(parts.size()));
  }
  return res;
}

namespace detail {
/// Lower weighted median of (value, weight) pairs.
inline double weighted_median(std::vector<std::pair<double, double>> vw) {
  if (vw.empty()) throw EstimationFailure("weighted median of an empty set");
  std::sort(vw.begin(), vw.end());
  double total = 0.0;
  for (const auto &p : vw) total += p.second;
  double acc = 0.0;
  for (const auto &p : vw) {
    acc += p.second;
    if (acc >= 0.5 * total) return p.first;
  }
  return vw.back().first;
}
} // namespace detail

/// Parameters of the constrained family mu_k = level_k 1_d with a shared
/// compound-symmetry scatter (1 - x) I + x 1 1'.
struct ConstrainedEstimate {
  Vector levels;
  double correlation = 0.0;
  bool clamped = false;

  std::vector<Vector> means(Eigen::Index d) const {
    std::vector<Vector> out;
    for (Eigen::Index k = 0; k < levels.size(); ++k) out.push_back(Vector::Constant(d, levels[k]));
    return out;
  }
  Matrix scatter(Eigen::Index d) const { return compound_symmetry(d, correlation); }
};

/// Closed-form least squares under the constant-mean / compound-symmetry
/// constraints. With s_r = <u_r, 1>: level_k = sum s_r v_rk / sum s_r^2 and,
/// from u' S(x) u = 1 + x (s_r^2 - 1), x pooled over components and
/// directions, clamped 1e-6 inside (-1/(d-1), 1).
/// With an L1 method both fits become least absolute deviations through the
/// origin, i.e. weighted medians of the per-direction ratios. Heavy tails
/// leave a few projections with huge scales that swamp the LS estimate of x.
/// Median of means falls back to LS here.
inline ConstrainedEstimate reconstruct_constrained(const ProjectedEstimates &est,
                                                   const ReconstructionMethod &method = {}) {
  est.validate();
  const auto rows = est.usable_rows();
  const Eigen::Index d = est.directions.dim();
  if (d < 2) throw InvalidArgument("compound symmetry needs d >= 2");
  const Matrix u = detail::select_rows(est.directions.vectors(), rows);
  const Vector s = u.rowwise().sum();
  const double ss = s.squaredNorm();
  if (rows.empty() || ss < 1e-12 * static_cast<double>(rows.size()))
    throw EstimationFailure("all usable directions are orthogonal to the ones vector");
  const bool l1 = method.kind == ReconstructionMethod::Kind::L1;
  ConstrainedEstimate out;
  out.levels.resize(est.components());
  double num = 0.0, den = 0.0;
  std::vector<std::pair<double, double>> xs;
  for (Eigen::Index k = 0; k < est.components(); ++k) {
    const Vector v = detail::select(est.locations.col(k), rows);
    const Vector s2 = detail::select(est.scales2.col(k), rows);
    if (l1) {
      std::vector<std::pair<double, double>> ls;
      for (Eigen::Index r = 0; r < s.size(); ++r)
        if (s[r] != 0.0) ls.emplace_back(v[r] / s[r], std::abs(s[r]));
      out.levels[k] = detail::weighted_median(ls);
    } else {
      out.levels[k] = s.dot(v) / ss;
    }
    for (Eigen::Index r = 0; r < s.size(); ++r) {
      const double g = s[r] * s[r] - 1.0;
      num += g * (s2[r] - 1.0);
      den += g * g;
      if (g != 0.0) xs.emplace_back((s2[r] - 1.0) / g, std::abs(g));
    }
  }
  if (!(den > 0.0)) throw EstimationFailure("compound-symmetry correlation is not identifiable");
  const double x = l1 ? detail::weighted_median(xs) : num / den;
  const double lo = -1.0 / static_cast<double>(d - 1) + 1e-6, hi = 1.0 - 1e-6;
  out.correlation = std::clamp(x, lo, hi);
  out.clamped = out.correlation != x;
  return out;
}

} // namespace rpmix

#endif // RPMIX_RECONSTRUCT_HPP
