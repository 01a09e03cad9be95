#ifndef RPMIX_ALIGN_HPP
#define RPMIX_ALIGN_HPP

// Label alignment of independently fitted projected mixtures against a
// pivot direction.

#include "rpmix/assignment.hpp"
#include "rpmix/directions.hpp"
#include "rpmix/ecf.hpp"

namespace rpmix {

struct AlignmentPlan {
  std::size_t pivot_index = 0;
  double pivot_separation = 0.0;
  bool low_separation = false;
  /// permutations[r][b] = component of fit r placed in pivot slot b.
  std::vector<std::vector<int>> permutations;
  std::vector<double> costs;
  std::vector<bool> reflected;
  std::vector<bool> usable;

  std::size_t usable_count() const {
    return static_cast<std::size_t>(std::count(usable.begin(), usable.end(), true));
  }
};

struct AlignOptions {
  double weight_lambda = 1.0;
  double weight_location = 1.0;
  double weight_scale = 1.0;
  /// Also try the mirrored fit (direction -u) and keep the cheaper match.
  bool allow_reflection = false;
  /// Pivot separations below this are flagged as low.
  double low_separation_threshold = 1.0;
};

/// min_{j != j'} |loc_j - loc_j'| / sqrt(mean scale^2); 0 for one component.
inline double separation(const UnivariateMixture &mix) {
  const auto m = static_cast<Eigen::Index>(mix.components());
  if (m < 2) return 0.0;
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a + 1; b < m; ++b)
      gap = std::min(gap, std::abs(mix.locations[a] - mix.locations[b]));
  return gap / std::sqrt(mix.scales2.mean());
}

/// Usable fit with the largest separation; ties go to the smallest index.
inline std::size_t choose_pivot(std::span<const EcfFitResult> fits) {
  std::optional<std::size_t> best;
  double best_sep = -1.0;
  for (std::size_t r = 0; r < fits.size(); ++r) {
    if (!fits[r].screen_passed) continue;
    const double s = separation(fits[r].fitted);
    if (!best || s > best_sep) {
      best = r;
      best_sep = s;
    }
  }
  if (!best) throw EstimationFailure("no usable direction: every projection failed screening");
  return *best;
}

inline UnivariateMixture mirrored(const UnivariateMixture &mix) {
  UnivariateMixture out = mix;
  out.locations = -mix.locations;
  return out;
}

inline UnivariateMixture permuted(const UnivariateMixture &mix, const std::vector<int> &perm) {
  UnivariateMixture out = mix;
  for (std::size_t b = 0; b < perm.size(); ++b) {
    const auto bb = static_cast<Eigen::Index>(b);
    out.weights[bb] = mix.weights[perm[b]];
    out.locations[bb] = mix.locations[perm[b]];
    out.scales2[bb] = mix.scales2[perm[b]];
  }
  return out;
}

/// cost(a, b) of placing component a of `mix` into prototype slot b.
inline Matrix alignment_costs(const UnivariateMixture &mix, const UnivariateMixture &proto,
                              const AlignOptions &opt = {}) {
  const auto m = static_cast<Eigen::Index>(proto.components());
  const double s_loc = std::max(proto.locations.maxCoeff() - proto.locations.minCoeff(), 1e-6);
  const double s_sc = std::max(proto.scales2.maxCoeff() - proto.scales2.minCoeff(), 1e-6);
  Matrix c(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) {
      const double dl = mix.weights[a] - proto.weights[b];
      const double du = (mix.locations[a] - proto.locations[b]) / s_loc;
      const double ds = (mix.scales2[a] - proto.scales2[b]) / s_sc;
      c(a, b) = opt.weight_lambda * dl * dl + opt.weight_location * du * du +
                opt.weight_scale * ds * ds;
    }
  return c;
}

struct AlignedFits {
  std::vector<EcfFitResult> fits;
  AlignmentPlan plan;
};

/// Reorders every usable fit to the pivot's components (sorted by increasing
/// location) by exact minimum-cost assignment. Screen-failed fits are passed
/// through untouched and marked unusable.
inline AlignedFits align(std::span<const EcfFitResult> fits, std::size_t pivot,
                         const AlignOptions &opt = {}) {
  if (pivot >= fits.size() || !fits[pivot].screen_passed)
    throw InvalidArgument("pivot must index a usable fit");
  const std::size_t m = fits[pivot].fitted.components();
  AlignedFits out;
  out.fits.assign(fits.begin(), fits.end());
  AlignmentPlan &plan = out.plan;
  plan.pivot_index = pivot;
  plan.pivot_separation = separation(fits[pivot].fitted);
  plan.low_separation = m > 1 && plan.pivot_separation < opt.low_separation_threshold;
  plan.permutations.assign(fits.size(), {});
  plan.costs.assign(fits.size(), 0.0);
  plan.reflected.assign(fits.size(), false);
  plan.usable.assign(fits.size(), false);

  std::vector<int> pivot_order(m);
  std::iota(pivot_order.begin(), pivot_order.end(), 0);
  const UnivariateMixture &pf = fits[pivot].fitted;
  std::stable_sort(pivot_order.begin(), pivot_order.end(),
                   [&](int a, int b) { return pf.locations[a] < pf.locations[b]; });
  const UnivariateMixture proto = permuted(pf, pivot_order);

  for (std::size_t r = 0; r < fits.size(); ++r) {
    std::vector<int> identity(m);
    std::iota(identity.begin(), identity.end(), 0);
    plan.permutations[r] = identity;
    if (!fits[r].screen_passed) continue;
    if (fits[r].fitted.components() != m)
      throw InvalidArgument("all fits must have the same number of components");
    plan.usable[r] = true;
    if (r == pivot) {
      plan.permutations[r] = pivot_order;
      out.fits[r].fitted = proto;
      continue;
    }
    auto solve = [&](const UnivariateMixture &mix) {
      const Matrix c = alignment_costs(mix, proto, opt);
      std::vector<int> col = hungarian(c);
      std::vector<int> perm(m);
      for (std::size_t a = 0; a < m; ++a) perm[static_cast<std::size_t>(col[a])] = static_cast<int>(a);
      return std::pair{perm, assignment_cost(c, col)};
    };
    auto [perm, cost] = solve(fits[r].fitted);
    bool reflect = false;
    if (opt.allow_reflection) {
      auto [perm_m, cost_m] = solve(mirrored(fits[r].fitted));
      if (cost_m < cost) {
        perm = perm_m;
        cost = cost_m;
        reflect = true;
      }
    }
    plan.permutations[r] = perm;
    plan.costs[r] = cost;
    plan.reflected[r] = reflect;
    const UnivariateMixture base = reflect ? mirrored(fits[r].fitted) : fits[r].fitted;
    out.fits[r].fitted = permuted(base, perm);
  }
  return out;
}

/// Alignment when every mean is a multiple of the ones vector. Reflecting
/// u_r so that <u_r, 1> >= 0 makes each projected location order follow the
/// level order, so sorting aligns all fits without a pivot match. The
/// reported pivot is the usable direction closest to the ones vector.
inline AlignedFits align_by_ones(std::span<const EcfFitResult> fits, const DirectionSet &dirs,
                                 const AlignOptions &opt = {}) {
  if (static_cast<Eigen::Index>(fits.size()) != dirs.size())
    throw InvalidArgument("one fit per direction is required");
  AlignedFits out;
  out.fits.assign(fits.begin(), fits.end());
  AlignmentPlan &plan = out.plan;
  plan.permutations.assign(fits.size(), {});
  plan.costs.assign(fits.size(), 0.0);
  plan.reflected.assign(fits.size(), false);
  plan.usable.assign(fits.size(), false);
  std::optional<std::size_t> pivot;
  double best = -1.0;
  for (std::size_t r = 0; r < fits.size(); ++r) {
    const std::size_t m = fits[r].fitted.components();
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    plan.permutations[r] = order;
    if (!fits[r].screen_passed) continue;
    const double s = dirs.direction(static_cast<Eigen::Index>(r)).sum();
    UnivariateMixture mix = fits[r].fitted;
    if (s < 0.0) {
      mix = mirrored(mix);
      plan.reflected[r] = true;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return mix.locations[a] < mix.locations[b]; });
    plan.permutations[r] = order;
    out.fits[r].fitted = permuted(mix, order);
    plan.usable[r] = true;
    if (std::abs(s) > best) {
      best = std::abs(s);
      pivot = r;
    }
  }
  if (!pivot) throw EstimationFailure("no usable direction: every projection failed screening");
  plan.pivot_index = *pivot;
  plan.pivot_separation = separation(out.fits[*pivot].fitted);
  plan.low_separation = out.fits[*pivot].fitted.components() > 1 && plan.pivot_separation < opt.low_separation_threshold;
  return out;
}

/// Mean of the aligned weight vectors over usable fits, renormalized.
/// Optional per-fit importances turn it into a weighted mean.
inline Vector average_weights(std::span<const EcfFitResult> aligned, std::span<const double> importance = {}) {
  if (!importance.empty() && importance.size() != aligned.size())
    throw InvalidArgument("one importance per fit is required");
  Vector sum;
  double total = 0.0;
  for (std::size_t r = 0; r < aligned.size(); ++r) {
    const auto &f = aligned[r];
    if (!f.screen_passed) continue;
    const double w = importance.empty() ? 1.0 : importance[r];
    if (sum.size() == 0) sum = Vector::Zero(f.fitted.weights.size());
    sum += w * f.fitted.weights;
    total += w;
  }
  if (!(total > 0.0)) throw EstimationFailure("no usable direction to average weights over");
  sum /= total;
  return sum / sum.sum();
}

} // namespace rpmix

#endif // RPMIX_ALIGN_HPP
