#ifndef RPMIX_SPECIAL_HPP
#define RPMIX_SPECIAL_HPP

#include "rpmix/common.hpp"

namespace rpmix {

namespace detail {

inline constexpr double kEulerGamma = 0.57721566490153286061;

// K_0 and K_1 by their ascending series; accurate to rounding for 0 < z <= 2.
inline std::pair<double, double> bessel_k01_series(double z) {
  const double q = 0.25 * z * z;
  const double lg = std::log(0.5 * z);
  double i0 = 0.0, i1 = 0.0, s0 = 0.0, s1 = 0.0;
  double t0 = 1.0;  // q^k / (k!)^2
  double t1 = 1.0;  // q^k / (k! (k+1)!)
  double hk = 0.0;  // harmonic number H_k
  for (int k = 0; k < 200; ++k) {
    const double hk1 = hk + 1.0 / (k + 1);
    i0 += t0;
    i1 += t1;
    s0 += hk * t0;
    s1 += (hk + hk1 - 2.0 * kEulerGamma) * t1;
    if (t0 < 1e-18 * std::abs(i0) && k > 2) break;
    t0 *= q / ((k + 1.0) * (k + 1.0));
    t1 *= q / ((k + 1.0) * (k + 2.0));
    hk = hk1;
  }
  i1 *= 0.5 * z;
  const double k0 = -(lg + kEulerGamma) * i0 + s0;
  const double k1 = 1.0 / z + lg * i1 - 0.25 * z * s1;
  return {k0, k1};
}

// K_0 and K_1 via Steed's continued fraction (Temme's CF2) for z > 2.
inline std::pair<double, double> bessel_k01_cf(double z) {
  double b = 2.0 * (1.0 + z);
  double d = 1.0 / b;
  double h = d, delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25;
  double q = a1, c = a1, a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 1; i < 10000; ++i) {
    a -= 2 * i;
    c = -a * c / (i + 1.0);
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < 1e-17) break;
  }
  h *= a1;
  const double k0 = std::sqrt(kPi / (2.0 * z)) * std::exp(-z) / s;
  const double k1 = k0 * (z + 0.5 - h) / z;
  return {k0, k1};
}

} // namespace detail

/// Returns {K_a(z), K_{a-1}(z)} for order a = twice_order / 2 >= 1/2, z > 0.
/// Integer orders start from K_0, K_1; half-integer orders from the
/// elementary K_{1/2}; both then use upward recurrence, which is stable for K.
inline std::pair<double, double> bessel_k_pair(int twice_order, double z) {
  if (twice_order < 1) throw InvalidArgument("Bessel K order must be >= 1/2");
  if (!(z > 0.0)) throw InvalidArgument("Bessel K argument must be positive");
  double prev = 0.0, cur = 0.0, v = 0.0;
  if (twice_order % 2 == 1) {
    cur = std::sqrt(kPi / (2.0 * z)) * std::exp(-z);
    prev = cur;  // K_{-1/2} = K_{1/2}
    v = 0.5;
  } else {
    const auto [k0, k1] = z <= 2.0 ? detail::bessel_k01_series(z) : detail::bessel_k01_cf(z);
    prev = k0;
    cur = k1;
    v = 1.0;
  }
  const double target = 0.5 * twice_order;
  while (v < target - 0.25) {
    const double next = prev + (2.0 * v / z) * cur;
    prev = cur;
    cur = next;
    v += 1.0;
  }
  return {cur, prev};
}

inline double bessel_k(double order, double z) {
  const double twice = 2.0 * std::abs(order);
  const auto n = static_cast<int>(std::lround(twice));
  if (std::abs(twice - n) > 1e-12)
    throw InvalidArgument("only integer and half-integer Bessel K orders are supported");
  if (n == 0) {
    if (!(z > 0.0)) throw InvalidArgument("Bessel K argument must be positive");
    return z <= 2.0 ? detail::bessel_k01_series(z).first : detail::bessel_k01_cf(z).first;
  }
  return bessel_k_pair(n, z).first;
}

/// Standardized Student-t characteristic-function kernel
///   phi(z) = z^a K_a(z) / (Gamma(a) 2^(a-1)),  a = nu/2,  z = sqrt(nu) sigma |t|,
/// together with dphi/dz = -z^a K_{a-1}(z) / (Gamma(a) 2^(a-1)).
struct TKernel {
  double value;
  double derivative;
};

inline TKernel t_cf_kernel(int nu, double z) {
  if (nu < 1) throw InvalidArgument("Student-t degrees of freedom must be >= 1");
  if (nu == 1) return {std::exp(-z), -std::exp(-z)};
  if (z < 1e-12) return {1.0, 0.0};
  if (z > 745.0) return {0.0, 0.0};
  const double a = 0.5 * nu;
  const auto [ka, kam1] = bessel_k_pair(nu, z);
  const double lognorm = a * std::log(z) - std::lgamma(a) - (a - 1.0) * std::log(2.0);
  const double scale = std::exp(lognorm);
  return {scale * ka, -scale * kam1};
}

} // namespace rpmix

#endif // RPMIX_SPECIAL_HPP
