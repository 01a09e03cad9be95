#ifndef RPMIX_OPTIM_HPP
#define RPMIX_OPTIM_HPP

#include "rpmix/common.hpp"

#include <limits>

namespace rpmix {

struct OptimResult {
  Vector x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> trace;  // best value after each iteration, non-increasing
};

/// BFGS with Armijo backtracking. `f(x, grad)` returns the objective and,
/// when grad is non-null, writes the gradient. Stops when one step decreases
/// the objective by less than `ftol`.
template <class Objective>
OptimResult minimize_bfgs(Objective &&f, Vector x0, int max_steps, double ftol = 1e-10) {
  const Eigen::Index n = x0.size();
  OptimResult out;
  out.x = std::move(x0);
  Vector g(n);
  out.value = f(out.x, &g);
  ++out.evaluations;
  out.trace.push_back(out.value);
  if (n == 0) {
    out.converged = true;
    return out;
  }
  Matrix h = Matrix::Identity(n, n);
  Vector g_new(n);
  for (int it = 0; it < max_steps; ++it) {
    if (!g.allFinite() || g.norm() < 1e-12) {
      out.converged = g.allFinite();
      break;
    }
    Vector p = -h * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      h.setIdentity();
      p = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    double f_new = 0.0;
    Vector x_new;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = out.x + step * p;
      f_new = f(x_new, &g_new);
      ++out.evaluations;
      if (std::isfinite(f_new) && f_new <= out.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++out.iterations;
    if (!accepted) {
      out.converged = true;  // no further decrease available along the search ray
      break;
    }
    const double decrease = out.value - f_new;
    const Vector s = x_new - out.x;
    const Vector y = g_new - g;
    out.x = x_new;
    out.value = f_new;
    g = g_new;
    out.trace.push_back(out.value);
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (it == 0) h *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Matrix i_rho = Matrix::Identity(n, n) - rho * s * y.transpose();
      h = i_rho * h * i_rho.transpose() + rho * s * s.transpose();
    }
    if (decrease < ftol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// Nelder-Mead simplex search with standard coefficients. `step` sets the
/// initial simplex edge per coordinate. Stops when the spread of values
/// across the simplex drops below `ftol` or after `max_evaluations`.
template <class Objective>
OptimResult minimize_nelder_mead(Objective &&f, const Vector &x0, const Vector &step,
                                 int max_evaluations, double ftol = 1e-10) {
  const Eigen::Index n = x0.size();
  OptimResult out;
  std::vector<Vector> pts;
  std::vector<double> vals;
  auto eval = [&](const Vector &x) {
    ++out.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  pts.push_back(x0);
  vals.push_back(eval(x0));
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector x = x0;
    x[i] += step[i];
    pts.push_back(x);
    vals.push_back(eval(x));
  }
  std::vector<std::size_t> order(pts.size());
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<Vector> p2;
    std::vector<double> v2;
    for (auto i : order) {
      p2.push_back(pts[i]);
      v2.push_back(vals[i]);
    }
    pts.swap(p2);
    vals.swap(v2);
  };
  sort_simplex();
  out.trace.push_back(vals.front());
  const auto nn = static_cast<std::size_t>(n);
  while (n > 0 && out.evaluations < max_evaluations) {
    if (vals[nn] - vals[0] < ftol) {
      out.converged = true;
      break;
    }
    Vector centroid = Vector::Zero(n);
    for (std::size_t i = 0; i < nn; ++i) centroid += pts[i];
    centroid /= static_cast<double>(n);
    const Vector xr = centroid + (centroid - pts[nn]);
    const double fr = eval(xr);
    if (fr < vals[0]) {
      const Vector xe = centroid + 2.0 * (centroid - pts[nn]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[nn] = xe;
        vals[nn] = fe;
      } else {
        pts[nn] = xr;
        vals[nn] = fr;
      }
    } else if (fr < vals[nn - 1]) {
      pts[nn] = xr;
      vals[nn] = fr;
    } else {
      const bool outside = fr < vals[nn];
      const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                : Vector(centroid + 0.5 * (pts[nn] - centroid));
      const double fc = eval(xc);
      if (fc < (outside ? fr : vals[nn])) {
        pts[nn] = xc;
        vals[nn] = fc;
      } else {
        for (std::size_t i = 1; i <= nn; ++i) {
          pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
          vals[i] = eval(pts[i]);
        }
      }
    }
    sort_simplex();
    ++out.iterations;
    out.trace.push_back(vals.front());
  }
  if (n == 0) out.converged = true;
  out.x = pts.front();
  out.value = vals.front();
  return out;
}

} // namespace rpmix

#endif // RPMIX_OPTIM_HPP
