#pragma once

// Hierarchical Dirichlet-multinomial model for historical control data.
//
//   pi_k | pi_global, eta0 ~ Dirichlet(eta0 * pi_global)
//   x_k  | pi_k            ~ Multinomial(n_k, pi_k)
//   pi_global ~ Dirichlet(1),  eta0 ~ half-Cauchy(0, 5)  or  rho = 1/(1+eta0) ~ Beta(1, 10)
//
// The study-level pi_k are integrated out, leaving a (C+1)-parameter
// posterior over (pi_global, eta0) that is sampled by adaptive
// random-walk Metropolis on an unconstrained scale: additive log-ratios
// of pi_global against the last category, and log eta0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hcdpi/dm_sampler.hpp"
#include "hcdpi/error.hpp"
#include "hcdpi/matrix.hpp"
#include "hcdpi/model.hpp"
#include "hcdpi/parallel.hpp"
#include "hcdpi/rank_box.hpp"
#include "hcdpi/rng.hpp"
#include "hcdpi/stats.hpp"

namespace hcdpi {

struct PriorChoice {
  enum class Kind { HalfCauchy, BetaRho };
  Kind kind = Kind::HalfCauchy;
  double scale = 5.0;  // half-Cauchy scale on eta0
  double a = 1.0;      // Beta(a, b) on rho
  double b = 10.0;

  static PriorChoice half_cauchy(double scale = 5.0) { return {Kind::HalfCauchy, scale, 1.0, 10.0}; }
  static PriorChoice beta_rho(double a = 1.0, double b = 10.0) { return {Kind::BetaRho, 5.0, a, b}; }

  std::string name() const { return kind == Kind::HalfCauchy ? "cauchy" : "beta"; }

  void validate() const {
    if (kind == Kind::HalfCauchy && !(scale > 0.0)) fail(ErrorCode::InvalidArgument, "half-Cauchy scale must be > 0");
    if (kind == Kind::BetaRho && !(a > 0.0 && b > 0.0)) fail(ErrorCode::InvalidArgument, "Beta parameters must be > 0");
  }

  /// Log prior density of eta0 (including the rho -> eta0 Jacobian for the Beta variant).
  double log_density_eta0(double eta0) const {
    if (!(eta0 > 0.0) || !std::isfinite(eta0)) return -std::numeric_limits<double>::infinity();
    if (kind == Kind::HalfCauchy) {
      const double u = eta0 / scale;
      return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p(u * u);
    }
    // rho = 1/(1+eta0), |d rho / d eta0| = 1/(1+eta0)^2.
    const double log1p_eta = std::log1p(eta0);
    const double log_rho = -log1p_eta;
    const double log_1m_rho = std::log(eta0) - log1p_eta;
    const double log_beta_fn = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    return (a - 1.0) * log_rho + (b - 1.0) * log_1m_rho - log_beta_fn - 2.0 * log1p_eta;
  }
};

/// Dirichlet-multinomial log probability of x (sum n) under parameters eta.
inline double dm_log_pmf(std::span<const count_t> x, count_t n, std::span<const double> eta) {
  if (x.size() != eta.size()) fail(ErrorCode::InvalidArgument, "x and eta differ in length");
  double eta0 = 0.0;
  count_t total = 0;
  for (std::size_t c = 0; c < eta.size(); ++c) {
    if (!(eta[c] > 0.0)) fail(ErrorCode::DomainError, "DM parameters must be positive");
    if (x[c] < 0) fail(ErrorCode::DomainError, "counts must be nonnegative");
    eta0 += eta[c];
    total += x[c];
  }
  if (total != n) fail(ErrorCode::DomainError, "counts do not sum to n");
  const auto nd = static_cast<double>(n);
  double lp = std::lgamma(nd + 1.0) + std::lgamma(eta0) - std::lgamma(nd + eta0);
  for (std::size_t c = 0; c < eta.size(); ++c) {
    const auto xc = static_cast<double>(x[c]);
    lp += std::lgamma(xc + eta[c]) - std::lgamma(xc + 1.0) - std::lgamma(eta[c]);
  }
  return lp;
}

/// Maps unconstrained theta = (alr(pi) [C-1], log eta0) to (pi, eta0).
/// Returns false if the transform is not finite.
inline bool theta_to_params(std::span<const double> theta, std::vector<double>& pi, double& eta0) {
  const std::size_t C = theta.size();  // (C - 1) log-ratios + log eta0
  pi.assign(C, 0.0);
  double max_t = 0.0;  // reference category has log-ratio 0
  for (std::size_t c = 0; c + 1 < C; ++c) {
    if (!std::isfinite(theta[c])) return false;
    max_t = std::max(max_t, theta[c]);
  }
  double sum = 0.0;
  for (std::size_t c = 0; c + 1 < C; ++c) {
    pi[c] = std::exp(theta[c] - max_t);
    sum += pi[c];
  }
  pi[C - 1] = std::exp(-max_t);
  sum += pi[C - 1];
  for (double& p : pi) p /= sum;
  eta0 = std::exp(theta[C - 1]);
  if (!std::isfinite(eta0) || !(eta0 > 0.0)) return false;
  for (double p : pi)
    if (!(p > 0.0)) return false;
  return true;
}

inline std::vector<double> params_to_theta(std::span<const double> pi, double eta0) {
  const std::size_t C = pi.size();
  std::vector<double> theta(C);
  for (std::size_t c = 0; c + 1 < C; ++c) theta[c] = std::log(pi[c]) - std::log(pi[C - 1]);
  theta[C - 1] = std::log(eta0);
  return theta;
}

/// Log posterior density on the unconstrained scale, up to a constant
/// (the flat Dirichlet(1) prior on pi_global contributes nothing).
class PosteriorDensity {
 public:
  PosteriorDensity(const HistoricalDataset& data, PriorChoice prior) : data_(data), prior_(prior) {
    prior_.validate();
    if (data.categories() < 2) fail(ErrorCode::DegenerateDesign, "need at least two categories");
    constant_ = 0.0;
    for (std::size_t k = 0; k < data.clusters(); ++k) {
      constant_ += std::lgamma(static_cast<double>(data.cluster_sizes()[k]) + 1.0);
      for (std::size_t c = 0; c < data.categories(); ++c)
        constant_ -= std::lgamma(static_cast<double>(data.count(k, c)) + 1.0);
    }
  }

  std::size_t dimension() const noexcept { return data_.categories(); }

  double operator()(std::span<const double> theta) const {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    if (theta.size() != dimension()) fail(ErrorCode::InvalidArgument, "theta has wrong dimension");
    thread_local std::vector<double> pi;
    double eta0 = 0.0;
    if (!theta_to_params(theta, pi, eta0)) return kNegInf;
    const std::size_t C = data_.categories();
    thread_local std::vector<double> eta;
    eta.resize(C);
    double lp = constant_;
    for (std::size_t c = 0; c < C; ++c) {
      eta[c] = eta0 * pi[c];
      if (!(eta[c] > 0.0)) return kNegInf;
    }
    const double lg_eta0 = std::lgamma(eta0);
    thread_local std::vector<double> lg_eta;
    lg_eta.resize(C);
    for (std::size_t c = 0; c < C; ++c) lg_eta[c] = std::lgamma(eta[c]);
    for (std::size_t k = 0; k < data_.clusters(); ++k) {
      lp += lg_eta0 - std::lgamma(static_cast<double>(data_.cluster_sizes()[k]) + eta0);
      for (std::size_t c = 0; c < C; ++c) {
        const count_t x = data_.count(k, c);
        if (x > 0) lp += std::lgamma(static_cast<double>(x) + eta[c]) - lg_eta[c];
      }
    }
    lp += prior_.log_density_eta0(eta0);
    // Jacobians: additive log-ratio -> simplex gives prod_c pi_c; log eta0 -> eta0 gives eta0.
    for (double p : pi) lp += std::log(p);
    lp += std::log(eta0);
    return std::isfinite(lp) ? lp : kNegInf;
  }

 private:
  const HistoricalDataset& data_;
  PriorChoice prior_;
  double constant_ = 0.0;
};

inline double log_posterior(std::span<const double> theta, const HistoricalDataset& data, const PriorChoice& prior) {
  return PosteriorDensity(data, prior)(theta);
}

struct McmcSettings {
  std::size_t chains = 4;
  std::size_t iterations = 2500;  // retained per chain
  std::size_t warmup = 1000;
  double target_acceptance = 0.33;
};

struct PosteriorDraws {
  Matrix<double> pi_global;  // S x C
  std::vector<double> eta0;
  std::vector<double> rho;
  std::vector<std::string> parameter_names;
  std::vector<double> split_rhat;          // per parameter
  Matrix<double> acceptance;               // chains x coordinates, post-warmup
  std::vector<std::string> warnings;
  std::size_t chains = 0;
  std::size_t per_chain = 0;

  std::size_t size() const noexcept { return eta0.size(); }
};

/// Split-R-hat (Gelman et al.) for draws stored chain after chain.
inline double split_rhat(std::span<const double> draws, std::size_t chains) {
  if (chains == 0 || draws.size() % chains != 0) fail(ErrorCode::InvalidArgument, "draws do not split into chains");
  const std::size_t per_chain = draws.size() / chains;
  const std::size_t half = per_chain / 2;
  if (half < 2) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> means, vars;
  for (std::size_t ch = 0; ch < chains; ++ch) {
    for (std::size_t h = 0; h < 2; ++h) {
      const auto seg = draws.subspan(ch * per_chain + h * (per_chain - half), half);
      means.push_back(mean_of(seg));
      const double s = sd_of(seg);
      vars.push_back(s * s);
    }
  }
  const auto n = static_cast<double>(half);
  const double W = mean_of<double>(vars);
  const double sd_means = sd_of<double>(means);
  const double Bv = n * sd_means * sd_means;
  if (!(W > 0.0)) return Bv > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (n - 1.0) / n * W + Bv / n;
  return std::sqrt(var_plus / W);
}

namespace detail {

inline std::vector<double> initial_theta(const HistoricalDataset& data) {
  const std::size_t C = data.categories();
  const auto totals = data.category_totals();
  const auto N = static_cast<double>(data.total());
  std::vector<double> pi(C);
  bool any_zero = false;
  for (std::size_t c = 0; c < C; ++c) any_zero = any_zero || totals[c] == 0;
  for (std::size_t c = 0; c < C; ++c)
    pi[c] = any_zero ? (static_cast<double>(totals[c]) + 0.5) / (N + 0.5 * static_cast<double>(C))
                     : static_cast<double>(totals[c]) / N;
  double eta0 = 1.0;
  if (!any_zero && data.clusters() >= 2) {
    const auto fit = fit_model(data);
    const auto n_min = static_cast<double>(data.min_cluster_size());
    if (n_min > fit.phi_hat) eta0 = std::max(0.5, derive_eta0(n_min, fit.phi_hat));
  }
  return params_to_theta(pi, eta0);
}

}  // namespace detail

/// Adaptive random-walk Metropolis, one coordinate at a time. Proposal
/// scales adapt by Robbins-Monro on the log scale during warmup and are
/// frozen afterwards. Chain j uses substream j of rng.
inline PosteriorDraws mcmc_sample(const HistoricalDataset& data, const PriorChoice& prior,
                                  const McmcSettings& settings, RngStream rng, unsigned threads = 1) {
  if (settings.chains < 1 || settings.iterations < 1) fail(ErrorCode::InvalidArgument, "need chains and iterations >= 1");
  const PosteriorDensity density(data, prior);
  const std::size_t D = density.dimension();
  const std::size_t C = data.categories();
  const std::size_t S = settings.chains * settings.iterations;
  const auto base_theta = detail::initial_theta(data);

  Matrix<double> theta_draws(S, D);
  Matrix<double> acceptance(settings.chains, D);
  parallel_for(settings.chains, threads, [&](std::size_t chain) {
    RngStream local = rng.substream(chain);
    std::normal_distribution<double> normal;
    std::vector<double> theta = base_theta;
    double lp = -std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 100 && !std::isfinite(lp); ++attempt) {
      theta = base_theta;
      for (double& t : theta) t += 0.1 * normal(local);
      lp = density(theta);
    }
    if (!std::isfinite(lp)) fail(ErrorCode::InitializationError, "log posterior is -inf at every initial point");

    std::vector<double> log_scale(D, std::log(0.2));
    std::vector<std::size_t> accepted(D, 0);
    const std::size_t total = settings.warmup + settings.iterations;
    std::vector<double> proposal = theta;
    for (std::size_t it = 0; it < total; ++it) {
      const bool warm = it < settings.warmup;
      for (std::size_t j = 0; j < D; ++j) {
        proposal[j] = theta[j] + std::exp(log_scale[j]) * normal(local);
        const double lp_new = density(proposal);
        const double log_ratio = lp_new - lp;
        const bool accept = std::isfinite(lp_new) && (log_ratio >= 0.0 || std::log(local.uniform()) < log_ratio);
        if (accept) {
          theta[j] = proposal[j];
          lp = lp_new;
        } else {
          proposal[j] = theta[j];
        }
        if (warm) {
          const double accept_prob = std::isfinite(lp_new) ? std::min(1.0, std::exp(std::min(0.0, log_ratio))) : 0.0;
          const double gain = 1.0 / std::pow(static_cast<double>(it) + 1.0, 0.6);
          log_scale[j] += gain * (accept_prob - settings.target_acceptance);
        } else if (accept) {
          ++accepted[j];
        }
      }
      if (!warm) {
        const std::size_t row = chain * settings.iterations + (it - settings.warmup);
        for (std::size_t j = 0; j < D; ++j) theta_draws(row, j) = theta[j];
      }
    }
    for (std::size_t j = 0; j < D; ++j)
      acceptance(chain, j) = static_cast<double>(accepted[j]) / static_cast<double>(settings.iterations);
  });

  PosteriorDraws out;
  out.chains = settings.chains;
  out.per_chain = settings.iterations;
  out.acceptance = std::move(acceptance);
  out.pi_global = Matrix<double>(S, C);
  out.eta0.resize(S);
  out.rho.resize(S);
  std::vector<double> pi;
  std::vector<double> log_eta(S);
  for (std::size_t s = 0; s < S; ++s) {
    double eta0 = 0.0;
    theta_to_params(theta_draws.row(s), pi, eta0);
    for (std::size_t c = 0; c < C; ++c) out.pi_global(s, c) = pi[c];
    out.eta0[s] = eta0;
    out.rho[s] = 1.0 / (1.0 + eta0);
    log_eta[s] = std::log(eta0);
  }
  for (std::size_t c = 0; c < C; ++c) {
    out.parameter_names.push_back("pi_global[" + std::to_string(c + 1) + "]");
    out.split_rhat.push_back(split_rhat(out.pi_global.column(c), settings.chains));
  }
  out.parameter_names.push_back("log_eta0");
  out.split_rhat.push_back(split_rhat(log_eta, settings.chains));
  for (std::size_t p = 0; p < out.split_rhat.size(); ++p) {
    if (out.split_rhat[p] > 1.05)
      out.warnings.push_back("ConvergenceWarning: split R-hat " + std::to_string(out.split_rhat[p]) + " for " +
                             out.parameter_names[p]);
  }
  return out;
}

struct PredictiveSamples {
  Matrix<count_t> y_pred;  // S x C
  std::vector<double> mean;
  std::vector<double> sd;
  count_t m = 0;
};

inline PredictiveSamples summarize_predictive(Matrix<count_t> y_pred, count_t m) {
  PredictiveSamples out;
  out.m = m;
  for (std::size_t c = 0; c < y_pred.cols(); ++c) {
    const auto col = y_pred.column(c);
    out.mean.push_back(mean_of<count_t>(col));
    out.sd.push_back(sd_of<count_t>(col));
  }
  out.y_pred = std::move(y_pred);
  return out;
}

/// One future study per posterior draw: a latent Dirichlet(eta0 pi_global)
/// vector, then Multinomial(m, .). Draw s uses substream s of rng.
inline PredictiveSamples posterior_predictive(const PosteriorDraws& draws, count_t m, RngStream rng,
                                              unsigned threads = 1) {
  if (draws.size() == 0) fail(ErrorCode::InvalidArgument, "no posterior draws");
  if (m < 1) fail(ErrorCode::InvalidArgument, "future sample size must be >= 1");
  const std::size_t S = draws.size();
  const std::size_t C = draws.pi_global.cols();
  Matrix<count_t> y(S, C);
  parallel_for(S, threads, [&](std::size_t s) {
    RngStream local = rng.substream(s);
    std::vector<double> eta(C);
    for (std::size_t c = 0; c < C; ++c) eta[c] = draws.eta0[s] * draws.pi_global(s, c);
    const auto latent = sample_dirichlet(eta, local);
    const auto row = sample_multinomial(m, latent, local);
    for (std::size_t c = 0; c < C; ++c) y(s, c) = row[c];
  });
  return summarize_predictive(std::move(y), m);
}

namespace detail {
inline PredictionIntervalSet bayes_set(std::string method, const PredictiveSamples& pred, double alpha) {
  PredictionIntervalSet set;
  set.method = std::move(method);
  set.alpha = alpha;
  set.m = pred.m;
  set.y_hat = pred.mean;
  set.sep = pred.sd;
  const std::size_t C = pred.mean.size();
  set.lower.assign(C, 0.0);
  set.upper.assign(C, 0.0);
  set.multiplier_lower.assign(C, std::numeric_limits<double>::quiet_NaN());
  set.multiplier_upper.assign(C, std::numeric_limits<double>::quiet_NaN());
  return set;
}
}  // namespace detail

/// Bonferroni-adjusted marginal predictive quantiles alpha/(2C), 1 - alpha/(2C).
inline PredictionIntervalSet bayes_bonferroni_interval(const PredictiveSamples& pred, double alpha) {
  auto set = detail::bayes_set("bayes-marginal", pred, alpha);
  const std::size_t C = pred.mean.size();
  const double tail = alpha / (2.0 * static_cast<double>(C));
  for (std::size_t c = 0; c < C; ++c) {
    auto col = pred.y_pred.column(c);
    std::sort(col.begin(), col.end());
    set.lower[c] = static_cast<double>(sorted_quantile<count_t>(col, tail));
    set.upper[c] = static_cast<double>(sorted_quantile<count_t>(col, 1.0 - tail));
  }
  return set;
}

/// Intervals mean +- q sd, q the (1 - alpha) quantile of the maximum
/// standardized deviation over categories with positive spread.
inline PredictionIntervalSet bayes_mean_centered_interval(const PredictiveSamples& pred, double alpha) {
  auto set = detail::bayes_set("bayes-mean", pred, alpha);
  const std::size_t S = pred.y_pred.rows();
  const std::size_t C = pred.mean.size();
  std::vector<double> zmax(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t c = 0; c < C; ++c) {
      if (!(pred.sd[c] > 0.0)) continue;
      zmax[s] = std::max(zmax[s], std::abs(static_cast<double>(pred.y_pred(s, c)) - pred.mean[c]) / pred.sd[c]);
    }
  }
  const double q = empirical_quantile(std::move(zmax), 1.0 - alpha);
  const auto md = static_cast<double>(pred.m);
  for (std::size_t c = 0; c < C; ++c) {
    set.lower[c] = std::clamp(pred.mean[c] - q * pred.sd[c], 0.0, md);
    set.upper[c] = std::clamp(pred.mean[c] + q * pred.sd[c], 0.0, md);
    set.multiplier_lower[c] = q;
    set.multiplier_upper[c] = q;
  }
  return set;
}

/// Rank-based simultaneous set on the raw predictive counts.
inline PredictionIntervalSet bayes_rank_scs_interval(const PredictiveSamples& pred, double alpha) {
  auto set = detail::bayes_set("bayes-scs", pred, alpha);
  const auto box = rank_box(pred.y_pred, alpha);
  for (std::size_t c = 0; c < pred.mean.size(); ++c) {
    set.lower[c] = static_cast<double>(box.lower[c]);
    set.upper[c] = static_cast<double>(box.upper[c]);
  }
  return set;
}

}  // namespace hcdpi
