#pragma once

// Small statistical helpers shared by the interval methods.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "hcdpi/error.hpp"

namespace hcdpi {

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::DomainError, "normal quantile needs 0 < p < 1");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_cdf(double x) {
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

/// 1-based nearest-rank index ceil(p*n), clamped to [1, n].
inline std::size_t nearest_rank_index(double p, std::size_t n) {
  // Guard against 0.95 * 2000 = 1900.0000000000002 style round-off.
  const double scaled = p * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(scaled - 1e-9 * std::max(1.0, scaled)));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Nearest-rank empirical quantile of an already sorted sample.
template <typename T>
T sorted_quantile(std::span<const T> sorted, double p) {
  if (sorted.empty()) fail(ErrorCode::InvalidArgument, "quantile of empty sample");
  return sorted[nearest_rank_index(p, sorted.size()) - 1];
}

template <typename T>
T empirical_quantile(std::vector<T> values, double p) {
  std::sort(values.begin(), values.end());
  return sorted_quantile<T>(values, p);
}

template <typename T>
double mean_of(std::span<const T> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : v) s += static_cast<double>(x);
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for n < 2.
template <typename T>
double sd_of(std::span<const T> v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (const auto& x : v) {
    const double d = static_cast<double>(x) - mu;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Ranks 1..n (1 = smallest); ties broken by position, so the result is
/// always a permutation.
template <typename T>
std::vector<std::size_t> stable_ranks(std::span<const T> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<std::size_t> ranks(values.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) ranks[order[pos]] = pos + 1;
  return ranks;
}

/// Normal-approximation binomial half-width 1.96*sqrt(p(1-p)/n).
inline double mc_error(double p, std::size_t n) {
  if (n == 0) return 0.0;
  return 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace hcdpi
