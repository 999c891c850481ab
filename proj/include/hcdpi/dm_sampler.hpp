#pragma once

// Dirichlet-multinomial generation with a target mean vector and a target
// dispersion factor phi = (n + eta0) / (1 + eta0).

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hcdpi/error.hpp"
#include "hcdpi/matrix.hpp"
#include "hcdpi/model.hpp"
#include "hcdpi/rng.hpp"

namespace hcdpi {

/// Dirichlet precision giving dispersion phi at draw size n.
inline double derive_eta0(double n, double phi) {
  if (!(phi > 1.0) || !(phi < n)) {
    fail(ErrorCode::InvalidDispersion, "need 1 < phi < n (phi=" + std::to_string(phi) +
                                           ", n=" + std::to_string(n) + ")");
  }
  return (n - phi) / (phi - 1.0);
}

inline double dm_dispersion(double n, double eta0) { return (n + eta0) / (1.0 + eta0); }

struct DMParams {
  std::vector<double> pi_target;
  double phi = 0.0;
  double eta0 = 0.0;
  std::vector<double> eta;
  count_t n = 0;

  static DMParams make(count_t n, std::span<const double> pi, double phi) {
    DMParams p;
    p.n = n;
    p.phi = phi;
    p.pi_target.assign(pi.begin(), pi.end());
    p.eta0 = derive_eta0(static_cast<double>(n), phi);
    p.eta.resize(pi.size());
    for (std::size_t c = 0; c < pi.size(); ++c) p.eta[c] = p.eta0 * pi[c];
    return p;
  }
};

/// log of a Gamma(shape, 1) variate. Shapes below one use
/// G = G' * U^(1/shape) with G' ~ Gamma(shape + 1) and stay in log space,
/// which keeps tiny shapes (rare categories, strong overdispersion) from
/// underflowing to zero.
inline double sample_log_gamma(double shape, RngStream& rng) {
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    return std::log(g(rng));
  }
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  return std::log(g(rng)) + std::log(rng.uniform()) / shape;
}

/// Dirichlet draw as normalized Gamma variates. Zero entries of eta give
/// structural zeros; at least one entry must be positive.
inline std::vector<double> sample_dirichlet(std::span<const double> eta, RngStream& rng) {
  const std::size_t C = eta.size();
  std::vector<double> logs(C, -std::numeric_limits<double>::infinity());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < C; ++c) {
    if (eta[c] < 0.0 || !std::isfinite(eta[c])) fail(ErrorCode::DomainError, "Dirichlet parameters must be finite and >= 0");
    if (eta[c] == 0.0) continue;
    logs[c] = sample_log_gamma(eta[c], rng);
    max_log = std::max(max_log, logs[c]);
  }
  if (!std::isfinite(max_log)) fail(ErrorCode::DomainError, "Dirichlet needs at least one positive parameter");
  std::vector<double> p(C, 0.0);
  double sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    if (eta[c] == 0.0) continue;
    p[c] = std::exp(logs[c] - max_log);
    sum += p[c];
  }
  for (double& v : p) v /= sum;
  return p;
}

/// Multinomial draw by sequential conditional binomials.
inline std::vector<count_t> sample_multinomial(count_t n, std::span<const double> pi, RngStream& rng) {
  const std::size_t C = pi.size();
  std::vector<count_t> x(C, 0);
  count_t left = n;
  double mass = 1.0;
  for (std::size_t c = 0; c + 1 < C && left > 0; ++c) {
    if (pi[c] <= 0.0) continue;
    const double p = mass > 0.0 ? std::min(1.0, pi[c] / mass) : 1.0;
    std::binomial_distribution<count_t> bin(left, p);
    x[c] = bin(rng);
    left -= x[c];
    mass -= pi[c];
  }
  x[C - 1] += left;
  return x;
}

/// One DM count vector of size n. A single unit carries no overdispersion
/// (DM with n = 1 is the categorical law for every eta0), so n = 1 is drawn
/// as a plain multinomial whatever phi is.
inline std::vector<count_t> sample_dm_vector(count_t n, std::span<const double> pi, double phi, RngStream& rng) {
  if (n < 1) fail(ErrorCode::InvalidArgument, "draw size must be >= 1");
  if (n == 1) return sample_multinomial(n, pi, rng);
  const double eta0 = derive_eta0(static_cast<double>(n), phi);
  std::vector<double> eta(pi.size());
  for (std::size_t c = 0; c < pi.size(); ++c) eta[c] = eta0 * pi[c];
  const auto latent = sample_dirichlet(eta, rng);
  return sample_multinomial(n, latent, rng);
}

/// K independent DM rows with the given cluster sizes. With repair on,
/// every all-zero category receives one extra count in a uniformly chosen
/// study (that study's size grows by one).
inline HistoricalDataset generate_dataset(std::span<const count_t> sizes, std::span<const double> pi, double phi,
                                          RngStream& rng, bool repair_zero_columns,
                                          std::vector<std::string> labels = {}) {
  validate_probabilities(pi);
  const std::size_t K = sizes.size();
  const std::size_t C = pi.size();
  Matrix<count_t> counts(K, C);
  for (std::size_t k = 0; k < K; ++k) {
    const auto row = sample_dm_vector(sizes[k], pi, phi, rng);
    for (std::size_t c = 0; c < C; ++c) counts(k, c) = row[c];
  }
  if (repair_zero_columns && K > 0) {
    std::uniform_int_distribution<std::size_t> pick(0, K - 1);
    for (std::size_t c = 0; c < C; ++c) {
      count_t total = 0;
      for (std::size_t k = 0; k < K; ++k) total += counts(k, c);
      if (total == 0) counts(pick(rng), c) += 1;
    }
  }
  return HistoricalDataset(std::move(counts), std::move(labels));
}

inline HistoricalDataset generate_dataset(std::size_t K, count_t n, std::span<const double> pi, double phi,
                                          RngStream& rng, bool repair_zero_columns,
                                          std::vector<std::string> labels = {}) {
  const std::vector<count_t> sizes(K, n);
  return generate_dataset(sizes, pi, phi, rng, repair_zero_columns, std::move(labels));
}

}  // namespace hcdpi
