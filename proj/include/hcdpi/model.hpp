#pragma once

// Quasi-multinomial model for historical control data: the count table,
// the pooled fit with its Pearson-based dispersion estimate, and the
// prediction standard errors every interval method scales.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hcdpi/error.hpp"
#include "hcdpi/matrix.hpp"

namespace hcdpi {

/// K x C table of historical counts, one row per study (cluster).
class HistoricalDataset {
 public:
  HistoricalDataset() = default;

  explicit HistoricalDataset(Matrix<count_t> counts, std::vector<std::string> labels = {})
      : counts_(std::move(counts)), labels_(std::move(labels)) {
    if (labels_.empty()) {
      for (std::size_t c = 0; c < counts_.cols(); ++c) labels_.push_back("cat" + std::to_string(c + 1));
    }
    if (labels_.size() != counts_.cols()) {
      fail(ErrorCode::ValidationError, "number of labels does not match number of categories");
    }
    sizes_.assign(counts_.rows(), 0);
    for (std::size_t k = 0; k < counts_.rows(); ++k) {
      for (std::size_t c = 0; c < counts_.cols(); ++c) {
        const count_t x = counts_(k, c);
        if (x < 0) {
          fail(ErrorCode::ValidationError, "negative count at study " + std::to_string(k + 1) +
                                               ", category '" + labels_[c] + "'");
        }
        sizes_[k] += x;
      }
      if (sizes_[k] < 1) {
        fail(ErrorCode::ValidationError, "study " + std::to_string(k + 1) + " has no units");
      }
    }
  }

  static HistoricalDataset from_rows(const std::vector<std::vector<count_t>>& rows,
                                     std::vector<std::string> labels = {}) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    Matrix<count_t> m(rows.size(), cols);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].size() != cols) fail(ErrorCode::ValidationError, "ragged count rows");
      for (std::size_t c = 0; c < cols; ++c) m(k, c) = rows[k][c];
    }
    return HistoricalDataset(std::move(m), std::move(labels));
  }

  std::size_t clusters() const noexcept { return counts_.rows(); }
  std::size_t categories() const noexcept { return counts_.cols(); }
  const Matrix<count_t>& counts() const noexcept { return counts_; }
  count_t count(std::size_t k, std::size_t c) const noexcept { return counts_(k, c); }
  const std::vector<count_t>& cluster_sizes() const noexcept { return sizes_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  count_t total() const noexcept { return std::accumulate(sizes_.begin(), sizes_.end(), count_t{0}); }

  count_t min_cluster_size() const noexcept {
    return sizes_.empty() ? 0 : *std::min_element(sizes_.begin(), sizes_.end());
  }

  std::vector<count_t> category_totals() const {
    std::vector<count_t> totals(categories(), 0);
    for (std::size_t k = 0; k < clusters(); ++k)
      for (std::size_t c = 0; c < categories(); ++c) totals[c] += counts_(k, c);
    return totals;
  }

  friend bool operator==(const HistoricalDataset&, const HistoricalDataset&) = default;

 private:
  Matrix<count_t> counts_;
  std::vector<std::string> labels_;
  std::vector<count_t> sizes_;
};

struct ModelFit {
  std::vector<double> pi_hat;
  double phi_hat = 1.01;  // clamped
  double phi_raw = 0.0;
  double chi_square = 0.0;
  double df = 0.0;
  double s_bar = 0.0;
  std::size_t parameters = 0;  // P = C - 1
  count_t n_hist = 0;
  count_t min_cluster_size = 0;
};

struct FutureSpec {
  count_t m = 1;
  double alpha = 0.05;

  void validate() const {
    if (m < 1) fail(ErrorCode::InvalidArgument, "future sample size m must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  }
};

struct PredictionPoint {
  std::vector<double> y_hat;
  std::vector<double> sep;
};

/// Per-category bounds produced by one method. Multipliers are NaN for
/// methods that read bounds straight off a predictive sample.
struct PredictionIntervalSet {
  std::string method;
  std::vector<std::string> labels;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> y_hat;
  std::vector<double> sep;
  std::vector<double> multiplier_lower;
  std::vector<double> multiplier_upper;
  double alpha = 0.05;
  count_t m = 0;
  std::vector<std::string> diagnostics;

  std::size_t categories() const noexcept { return lower.size(); }

  bool contains(std::span<const count_t> y) const {
    if (y.size() != lower.size()) fail(ErrorCode::InvalidArgument, "future vector has wrong length");
    for (std::size_t c = 0; c < y.size(); ++c) {
      const auto v = static_cast<double>(y[c]);
      if (v < lower[c] || v > upper[c]) return false;
    }
    return true;
  }
};

inline void validate_probabilities(std::span<const double> pi, const char* what = "probability vector") {
  double sum = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::InvalidArgument, std::string(what) + " has entries outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::InvalidArgument, std::string(what) + " does not sum to 1");
}

/// Rescales nonnegative weights onto the simplex.
inline std::vector<double> normalize_probabilities(std::vector<double> w) {
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorCode::InvalidArgument, "probabilities must be finite and nonnegative");
    sum += v;
  }
  if (!(sum > 0.0)) fail(ErrorCode::InvalidArgument, "probabilities sum to zero");
  for (double& v : w) v /= sum;
  return w;
}

inline double pearson_chi_square(const HistoricalDataset& data, std::span<const double> pi) {
  if (pi.size() != data.categories()) fail(ErrorCode::InvalidArgument, "pi has wrong length");
  for (double p : pi)
    if (!(p > 0.0)) fail(ErrorCode::ZeroProbability, "Pearson statistic needs strictly positive probabilities");
  double chi = 0.0;
  for (std::size_t k = 0; k < data.clusters(); ++k) {
    const auto n = static_cast<double>(data.cluster_sizes()[k]);
    for (std::size_t c = 0; c < data.categories(); ++c) {
      const double expected = n * pi[c];
      const double r = static_cast<double>(data.count(k, c)) - expected;
      chi += r * r / expected;
    }
  }
  return chi;
}

/// Mean relative residual sum_k sum_c ((x - n pi) / (n pi)) / (KC - K).
inline double bias_correction_term(const HistoricalDataset& data, std::span<const double> pi) {
  for (double p : pi)
    if (!(p > 0.0)) fail(ErrorCode::ZeroProbability, "bias correction needs strictly positive probabilities");
  const std::size_t K = data.clusters();
  const std::size_t C = data.categories();
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto n = static_cast<double>(data.cluster_sizes()[k]);
    for (std::size_t c = 0; c < C; ++c) {
      const double expected = n * pi[c];
      s += (static_cast<double>(data.count(k, c)) - expected) / expected;
    }
  }
  return s / static_cast<double>(K * C - K);
}

inline double residual_df(std::size_t K, std::size_t C) {
  return static_cast<double>(K * C - K - (C - 1));
}

/// Afroz-Fletcher estimate (chi^2/df)/(1 + s_bar). Unclamped; may fall
/// below 1 (or to 0) for underdispersed samples.
inline double afroz_fletcher_dispersion(const HistoricalDataset& data, std::span<const double> pi) {
  const double df = residual_df(data.clusters(), data.categories());
  if (!(df > 0.0)) fail(ErrorCode::DegenerateDesign, "residual degrees of freedom must be positive");
  const double chi = pearson_chi_square(data, pi);
  const double s_bar = bias_correction_term(data, pi);
  return (chi / df) / (1.0 + s_bar);
}

/// Maps a raw dispersion estimate into the range a Dirichlet-multinomial
/// draw of the given size can represent: 1.01 if phi_raw <= 1 and
/// 0.975 * size_bound if phi_raw reaches that ceiling.
inline double clamp_dispersion(double phi_raw, double size_bound) {
  if (!(size_bound >= 2.0)) fail(ErrorCode::InvalidArgument, "dispersion size bound must be >= 2");
  if (!(phi_raw > 1.0)) return 1.01;  // NaN lands here too
  const double ceiling = 0.975 * size_bound;
  if (phi_raw >= ceiling) return ceiling;
  return phi_raw;
}

inline double prediction_se(double pi_c, double phi, double m, double n_hist) {
  if (!(pi_c >= 0.0 && pi_c <= 1.0)) fail(ErrorCode::InvalidArgument, "pi_c must lie in [0, 1]");
  if (!(phi > 0.0)) fail(ErrorCode::InvalidArgument, "phi must be positive");
  if (!(n_hist > 0.0)) fail(ErrorCode::InvalidArgument, "N_hist must be positive");
  const double var_future = phi * m * pi_c * (1.0 - pi_c);
  const double var_estimate = phi * m * m * pi_c * (1.0 - pi_c) / n_hist;
  return std::sqrt(var_future + var_estimate);
}

inline ModelFit fit_model(const HistoricalDataset& data) {
  const std::size_t K = data.clusters();
  const std::size_t C = data.categories();
  if (K < 2 || C < 2) {
    fail(ErrorCode::DegenerateDesign,
         "need at least 2 studies and 2 categories (got K=" + std::to_string(K) + ", C=" + std::to_string(C) + ")");
  }
  const auto totals = data.category_totals();
  for (std::size_t c = 0; c < C; ++c) {
    if (totals[c] == 0) {
      fail(ErrorCode::ZeroCategory, "category '" + data.labels()[c] +
                                        "' has zero counts in every study; consider the zero-column repair rule");
    }
  }
  ModelFit fit;
  fit.n_hist = data.total();
  fit.min_cluster_size = data.min_cluster_size();
  fit.parameters = C - 1;
  fit.df = residual_df(K, C);
  fit.pi_hat.resize(C);
  for (std::size_t c = 0; c < C; ++c)
    fit.pi_hat[c] = static_cast<double>(totals[c]) / static_cast<double>(fit.n_hist);
  fit.chi_square = pearson_chi_square(data, fit.pi_hat);
  fit.s_bar = bias_correction_term(data, fit.pi_hat);
  fit.phi_raw = (fit.chi_square / fit.df) / (1.0 + fit.s_bar);
  // Studies of a single unit cannot carry overdispersion; keep the bound valid.
  const double bound = std::max<double>(2.0, static_cast<double>(fit.min_cluster_size));
  fit.phi_hat = clamp_dispersion(fit.phi_raw, bound);
  return fit;
}

inline PredictionPoint predict_point(const ModelFit& fit, count_t m) {
  PredictionPoint point;
  const std::size_t C = fit.pi_hat.size();
  point.y_hat.resize(C);
  point.sep.resize(C);
  const auto md = static_cast<double>(m);
  for (std::size_t c = 0; c < C; ++c) {
    point.y_hat[c] = md * fit.pi_hat[c];
    point.sep[c] = prediction_se(fit.pi_hat[c], fit.phi_hat, md, static_cast<double>(fit.n_hist));
  }
  return point;
}

/// Builds [y_hat - qL*sep, y_hat + qU*sep] per category, clipped to [0, m].
inline PredictionIntervalSet make_interval_set(std::string method, const PredictionPoint& point,
                                               std::vector<double> q_lower, std::vector<double> q_upper,
                                               const FutureSpec& spec, std::vector<std::string> labels = {}) {
  PredictionIntervalSet out;
  out.method = std::move(method);
  out.labels = std::move(labels);
  out.alpha = spec.alpha;
  out.m = spec.m;
  const std::size_t C = point.y_hat.size();
  const auto md = static_cast<double>(spec.m);
  out.lower.resize(C);
  out.upper.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double lo = point.y_hat[c] - q_lower[c] * point.sep[c];
    const double hi = point.y_hat[c] + q_upper[c] * point.sep[c];
    out.lower[c] = std::clamp(lo, 0.0, md);
    out.upper[c] = std::clamp(hi, 0.0, md);
    if (out.lower[c] > out.upper[c]) {
      out.diagnostics.push_back("category " + std::to_string(c + 1) + ": lower bound above upper bound, collapsed");
      out.lower[c] = out.upper[c];
    }
  }
  out.y_hat = point.y_hat;
  out.sep = point.sep;
  out.multiplier_lower = std::move(q_lower);
  out.multiplier_upper = std::move(q_upper);
  return out;
}

}  // namespace hcdpi
