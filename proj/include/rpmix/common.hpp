#ifndef RPMIX_COMMON_HPP
#define RPMIX_COMMON_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rpmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// Error taxonomy shared by every module. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidArgument : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct EstimationFailure : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string &what, std::size_t line_, std::size_t column_)
      : Error(what + " (line " + std::to_string(line_) + ", column " +
              std::to_string(column_) + ")"),
        line(line_), column(column_) {}
  std::size_t line;
  std::size_t column;
};

inline constexpr double kPi = 3.14159265358979323846;

/// SplitMix64 finalizer; used to derive independent per-task seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) {
  return mix_seed(mix_seed(seed) ^ mix_seed(a + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

/// Pairwise (cascade) summation; result does not depend on thread scheduling.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("mean of empty range");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

/// Median with the usual midpoint rule for even sizes.
inline double median_of(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of empty range");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Linear-interpolation sample quantile (Hyndman-Fan type 7).
inline double quantile_of(std::vector<double> v, double p) {
  if (v.empty()) throw InvalidArgument("quantile of empty range");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double sample_sd(std::span<const double> y) {
  if (y.size() < 2) return 0.0;
  const double mu = mean_of(y);
  double ss = 0.0;
  for (double v : y) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(y.size() - 1));
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled exactly once; callers write results into pre-sized slots so the
/// outcome is independent of scheduling.
template <class Body>
void parallel_for(std::size_t n, Body &&body, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

} // namespace rpmix

#endif // RPMIX_COMMON_HPP
