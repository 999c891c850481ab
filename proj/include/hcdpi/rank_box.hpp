#pragma once

// Rank-based rectangular simultaneous sets. Used on studentized bootstrap
// residuals and, unchanged, on raw posterior predictive counts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hcdpi/error.hpp"
#include "hcdpi/matrix.hpp"
#include "hcdpi/stats.hpp"

namespace hcdpi {

struct RankSummary {
  Matrix<std::size_t> ranks;          // r[b][c], column-wise permutations of 1..B
  std::vector<std::size_t> extremeness;  // w[b]
  std::size_t critical_index = 0;     // k, 1-based
  std::size_t tau_star = 0;
};

/// k = integer nearest to (1 - alpha) B, halves rounded up, clamped to [1, B].
inline std::size_t critical_rank_position(double alpha, std::size_t B) {
  const double scaled = (1.0 - alpha) * static_cast<double>(B);
  auto k = static_cast<std::size_t>(std::floor(scaled + 0.5 + 1e-9));
  return std::clamp<std::size_t>(k, 1, B);
}

template <typename T>
RankSummary rank_summary(const Matrix<T>& values, double alpha) {
  const std::size_t B = values.rows();
  const std::size_t C = values.cols();
  if (B == 0 || C == 0) fail(ErrorCode::InvalidArgument, "rank summary of an empty matrix");
  RankSummary out;
  out.ranks = Matrix<std::size_t>(B, C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto col = values.column(c);
    const auto r = stable_ranks<T>(col);
    for (std::size_t b = 0; b < B; ++b) out.ranks(b, c) = r[b];
  }
  out.extremeness.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = out.ranks.row(b);
    const std::size_t hi = *std::max_element(row.begin(), row.end());
    const std::size_t lo = *std::min_element(row.begin(), row.end());
    out.extremeness[b] = std::max(hi, B + 1 - lo);
  }
  auto sorted = out.extremeness;
  std::sort(sorted.begin(), sorted.end());
  out.critical_index = critical_rank_position(alpha, B);
  out.tau_star = sorted[out.critical_index - 1];
  return out;
}

/// Per-category order statistics at positions B + 1 - tau* and tau*.
template <typename T>
struct RankBox {
  std::vector<T> lower;
  std::vector<T> upper;
  std::size_t tau_star = 0;
};

template <typename T>
RankBox<T> rank_box(const Matrix<T>& values, double alpha) {
  const auto summary = rank_summary(values, alpha);
  const std::size_t B = values.rows();
  RankBox<T> box;
  box.tau_star = summary.tau_star;
  for (std::size_t c = 0; c < values.cols(); ++c) {
    auto col = values.column(c);
    std::sort(col.begin(), col.end());
    box.lower.push_back(col[B - summary.tau_star]);  // position B + 1 - tau*, 1-based
    box.upper.push_back(col[summary.tau_star - 1]);
  }
  return box;
}

}  // namespace hcdpi
