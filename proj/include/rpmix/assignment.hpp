#ifndef RPMIX_ASSIGNMENT_HPP
#define RPMIX_ASSIGNMENT_HPP

#include "rpmix/common.hpp"

#include <limits>

namespace rpmix {

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method,
/// O(n^3) shortest augmenting path form). Returns col_of_row.
inline std::vector<int> hungarian(const Matrix &cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.rows() != cost.cols()) throw InvalidArgument("assignment needs a square cost matrix");
  if (!cost.allFinite()) throw InvalidArgument("assignment costs must be finite");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] is the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n);
  for (std::size_t j = 1; j <= n; ++j) col_of_row[p[j] - 1] = static_cast<int>(j - 1);
  return col_of_row;
}

inline double assignment_cost(const Matrix &cost, const std::vector<int> &col_of_row) {
  double s = 0.0;
  for (std::size_t i = 0; i < col_of_row.size(); ++i)
    s += cost(static_cast<Eigen::Index>(i), col_of_row[i]);
  return s;
}

} // namespace rpmix

#endif // RPMIX_ASSIGNMENT_HPP
