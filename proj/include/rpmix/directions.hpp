#ifndef RPMIX_DIRECTIONS_HPP
#define RPMIX_DIRECTIONS_HPP

#include "rpmix/common.hpp"

#include <optional>

namespace rpmix {

/// Outcome of the subset-sampling strongness check.
enum class Strongness { NotRequested, NotApplicable, Verified, Failed };

inline const char *to_string(Strongness s) {
  switch (s) {
  case Strongness::NotRequested: return "not_requested";
  case Strongness::NotApplicable: return "not_applicable";
  case Strongness::Verified: return "verified";
  case Strongness::Failed: return "failed";
  }
  return "unknown";
}

struct Certificate {
  Eigen::Index design_rank = 0;
  Eigen::Index required_rank = 0;
  bool is_sm_unique = false;
  Strongness strongness = Strongness::NotRequested;
  std::size_t subsets_checked = 0;
  std::size_t subsets_failed = 0;
  bool exhaustive = false;
};

/// k unit vectors in R^d stored as rows.
class DirectionSet {
public:
  DirectionSet() = default;
  explicit DirectionSet(Matrix vectors) : vectors_(std::move(vectors)) {
    if (vectors_.rows() < 1 || vectors_.cols() < 1)
      throw InvalidArgument("direction set needs k >= 1 and d >= 1");
    for (Eigen::Index r = 0; r < vectors_.rows(); ++r)
      if (std::abs(vectors_.row(r).norm() - 1.0) > 1e-10)
        throw InvalidArgument("direction " + std::to_string(r + 1) + " is not a unit vector");
  }

  Eigen::Index dim() const { return vectors_.cols(); }
  Eigen::Index size() const { return vectors_.rows(); }
  const Matrix &vectors() const { return vectors_; }
  Vector direction(Eigen::Index r) const { return vectors_.row(r).transpose(); }

  /// Negates row r (u and -u span the same line).
  void reflect(Eigen::Index r) { vectors_.row(r) *= -1.0; }

  std::optional<Certificate> certificate;

private:
  Matrix vectors_;
};

inline Eigen::Index vecsym_size(Eigen::Index d) { return d * (d + 1) / 2; }

/// Isometric half-vectorization: diagonal entries first, then sqrt(2) M_ij
/// for i < j in row-major order.
inline Vector vecsym(const Matrix &m) {
  const Eigen::Index d = m.rows();
  Vector v(vecsym_size(d));
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < d; ++i) v[p++] = m(i, i);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) v[p++] = std::sqrt(2.0) * m(i, j);
  return v;
}

inline Matrix unvecsym(const Vector &v, Eigen::Index d) {
  if (v.size() != vecsym_size(d)) throw InvalidArgument("vecsym length mismatch");
  Matrix m(d, d);
  Eigen::Index p = 0;
  for (Eigen::Index i = 0; i < d; ++i) m(i, i) = v[p++];
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) m(i, j) = m(j, i) = v[p++] / std::sqrt(2.0);
  return m;
}

/// Row r is vecsym(u_r u_r'), so that (A vecsym(S))_r = u_r' S u_r.
inline Matrix vecsym_design(const Matrix &directions) {
  const Eigen::Index k = directions.rows();
  const Eigen::Index d = directions.cols();
  Matrix a(k, vecsym_size(d));
  for (Eigen::Index r = 0; r < k; ++r) {
    const Vector u = directions.row(r).transpose();
    a.row(r) = vecsym(u * u.transpose()).transpose();
  }
  return a;
}

/// Numerical rank with cutoff max(rows, cols) * sigma_max * 1e-12.
inline Eigen::Index numerical_rank(const Matrix &a) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto &s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  const double cutoff = static_cast<double>(std::max(a.rows(), a.cols())) * s[0] * 1e-12;
  return (s.array() > cutoff).count();
}

/// Smallest direction count for which the Cramer-Wold theorem for
/// m-component Gaussian / t mixtures applies: (2m-1)(d^2+d-2)/2 + 1.
inline std::size_t required_directions(std::size_t m, std::size_t d) {
  if (m < 1) throw InvalidArgument("component count must be >= 1");
  if (d < 2) throw InvalidArgument("finite Cramer-Wold systems need d >= 2");
  // (d^2+d-2) = (d+2)(d-1) is always even.
  return (2 * m - 1) * (d * d + d - 2) / 2 + 1;
}

/// Minimum size of an sm-uniqueness set for one measure: (d^2+d)/2.
inline std::size_t single_measure_directions(std::size_t d) {
  if (d < 2) throw InvalidArgument("finite Cramer-Wold systems need d >= 2");
  return (d * d + d) / 2;
}

/// k iid uniform directions on the sphere (normalized standard Gaussians).
inline DirectionSet sample_directions(Eigen::Index d, Eigen::Index k, std::uint64_t seed) {
  if (d < 1 || k < 1) throw InvalidArgument("need d >= 1 and k >= 1");
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix v(k, d);
  for (Eigen::Index r = 0; r < k; ++r) {
    double n2 = 0.0;
    do {
      for (Eigen::Index c = 0; c < d; ++c) v(r, c) = z(rng);
      n2 = v.row(r).squaredNorm();
    } while (n2 < 1e-300);
    v.row(r) /= std::sqrt(n2);
  }
  return DirectionSet(std::move(v));
}

/// Checks rank(A) = d(d+1)/2 for the vecsym design. With strong=true and
/// enough directions, also checks up to 200 subsets of size d(d+1)/2
/// (all of them when there are at most 200).
inline Certificate certify_sm_uniqueness(const DirectionSet &dirs, bool strong,
                                         std::uint64_t seed = 0) {
  const Eigen::Index d = dirs.dim();
  const Eigen::Index cols = vecsym_size(d);
  const Matrix a = vecsym_design(dirs.vectors());
  Certificate cert;
  cert.required_rank = cols;
  cert.design_rank = numerical_rank(a);
  cert.is_sm_unique = cert.design_rank == cols;
  if (!strong) return cert;
  const Eigen::Index k = dirs.size();
  if (k < cols) {
    cert.strongness = Strongness::NotApplicable;
    return cert;
  }
  constexpr std::size_t kCap = 200;
  auto check = [&](const std::vector<Eigen::Index> &rows) {
    Matrix sub(cols, cols);
    for (Eigen::Index i = 0; i < cols; ++i) sub.row(i) = a.row(rows[static_cast<std::size_t>(i)]);
    ++cert.subsets_checked;
    if (numerical_rank(sub) != cols) ++cert.subsets_failed;
  };
  // Count subsets, saturating above the cap.
  double count = 1.0;
  for (Eigen::Index i = 0; i < cols; ++i)
    count = count * static_cast<double>(k - i) / static_cast<double>(i + 1);
  if (count <= static_cast<double>(kCap)) {
    cert.exhaustive = true;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(cols));
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      check(idx);
      Eigen::Index i = cols - 1;
      while (i >= 0 && idx[static_cast<std::size_t>(i)] == k - cols + i) --i;
      if (i < 0) break;
      ++idx[static_cast<std::size_t>(i)];
      for (Eigen::Index j = i + 1; j < cols; ++j)
        idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  } else {
    Rng rng(seed);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(k));
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t s = 0; s < kCap; ++s) {
      std::vector<Eigen::Index> pick;
      std::sample(all.begin(), all.end(), std::back_inserter(pick), cols, rng);
      check(pick);
    }
  }
  cert.strongness = cert.subsets_failed == 0 ? Strongness::Verified : Strongness::Failed;
  return cert;
}

} // namespace rpmix

#endif // RPMIX_DIRECTIONS_HPP
