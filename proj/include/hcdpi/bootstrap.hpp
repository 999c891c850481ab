#pragma once

// Parametric bootstrap engine and the bootstrap-calibrated interval
// methods. All five methods read the same ensemble.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
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

struct BootstrapEnsemble {
  std::size_t replicates = 0;
  std::size_t categories = 0;
  Matrix<double> y_hat_star;
  Matrix<double> sep_star;
  Matrix<double> y_star;
  Matrix<double> z;  // (y* - y_hat*) / sep*
};

struct CalibrationSettings {
  double tolerance = 0.0025;
  double q_lo = 0.0;
  double q_hi = 20.0;
  int max_iterations = 60;
  int max_doublings = 10;
};

struct CalibrationResult {
  double q = 0.0;
  double coverage = 0.0;
  bool converged = false;  // false: tolerance not reached, conservative side returned
  int iterations = 0;
};

inline constexpr std::size_t kDefaultBootstrapReplicates = 10000;

/// Draws B replicates from the fitted model. Replicate b uses substream b
/// of rng and nothing else, so the ensemble is identical for any thread
/// count.
inline BootstrapEnsemble build_ensemble(const ModelFit& fit, const HistoricalDataset& data, const FutureSpec& spec,
                                        std::size_t B, RngStream rng, unsigned threads = 1) {
  spec.validate();
  if (B < 1) fail(ErrorCode::InvalidArgument, "need at least one bootstrap replicate");
  const std::size_t C = fit.pi_hat.size();
  if (data.categories() != C) fail(ErrorCode::InvalidArgument, "fit and dataset disagree on categories");
  const auto sizes = data.cluster_sizes();
  // fit.phi_hat already respects 0.975 * min_k n_k; the future draw has its own ceiling.
  const double phi_hist = fit.phi_hat;
  const double phi_future = clamp_dispersion(fit.phi_hat, std::max<double>(2.0, static_cast<double>(spec.m)));
  const auto md = static_cast<double>(spec.m);

  BootstrapEnsemble ens;
  ens.replicates = B;
  ens.categories = C;
  ens.y_hat_star = Matrix<double>(B, C);
  ens.sep_star = Matrix<double>(B, C);
  ens.y_star = Matrix<double>(B, C);
  ens.z = Matrix<double>(B, C);

  parallel_for(B, threads, [&](std::size_t b) {
    RngStream local = rng.substream(b);
    const auto hist = generate_dataset(sizes, fit.pi_hat, phi_hist, local, true, data.labels());
    const auto future = sample_dm_vector(spec.m, fit.pi_hat, phi_future, local);
    const auto refit = fit_model(hist);
    for (std::size_t c = 0; c < C; ++c) {
      const double y_hat = md * refit.pi_hat[c];
      const double sep = prediction_se(refit.pi_hat[c], refit.phi_hat, md, static_cast<double>(refit.n_hist));
      const auto y = static_cast<double>(future[c]);
      ens.y_hat_star(b, c) = y_hat;
      ens.sep_star(b, c) = sep;
      ens.y_star(b, c) = y;
      ens.z(b, c) = (y - y_hat) / sep;
    }
  });
  return ens;
}

/// Bisection for the multiplier q at which a nondecreasing empirical
/// coverage function reaches target within settings.tolerance.
///
/// The bracket's upper end is doubled (at most max_doublings times) until
/// it covers the target. Empirical coverage is a step function, so the
/// tolerance can be out of reach; the search then ends on the upper side
/// of the jump, i.e. at the smallest q found whose coverage is >= target.
inline CalibrationResult bisection_calibrate(const std::function<double(double)>& coverage, double target,
                                             const CalibrationSettings& settings = {}) {
  if (!(settings.q_lo < settings.q_hi)) fail(ErrorCode::InvalidArgument, "empty calibration bracket");
  double lo = settings.q_lo;
  double hi = settings.q_hi;
  double cov_hi = coverage(hi);
  for (int d = 0; cov_hi < target; ++d) {
    if (d >= settings.max_doublings) {
      fail(ErrorCode::BracketError, "coverage " + std::to_string(cov_hi) + " at q=" + std::to_string(hi) +
                                        " is still below target " + std::to_string(target));
    }
    lo = hi;
    hi *= 2.0;
    cov_hi = coverage(hi);
  }
  CalibrationResult out;
  for (int it = 1; it <= settings.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double cov = coverage(mid);
    out.iterations = it;
    if (std::abs(cov - target) <= settings.tolerance) {
      out.q = mid;
      out.coverage = cov;
      out.converged = true;
      return out;
    }
    if (cov < target) {
      lo = mid;
    } else {
      hi = mid;
      cov_hi = cov;
    }
  }
  out.q = hi;
  out.coverage = cov_hi;
  out.converged = false;
  return out;
}

namespace detail {

// Fraction of entries <= q in an ascending sample.
inline double fraction_at_most(const std::vector<double>& sorted, double q) {
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), q);
  return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

// Calibrates q so that P(v_b <= q) hits target; v_b is the smallest
// multiplier that puts replicate b inside the event.
inline CalibrationResult calibrate_on(std::vector<double> v, double target, const CalibrationSettings& settings) {
  std::sort(v.begin(), v.end());
  return bisection_calibrate([&](double q) { return fraction_at_most(v, q); }, target, settings);
}

inline void note_unconverged(PredictionIntervalSet& set, const CalibrationResult& r, const std::string& which) {
  if (!r.converged) {
    set.diagnostics.push_back("ConvergenceWarning: " + which + " tolerance not reached; conservative multiplier " +
                              std::to_string(r.q) + " with coverage " + std::to_string(r.coverage));
  }
}

inline void check_ensemble(const BootstrapEnsemble& ens, const ModelFit& fit) {
  if (ens.replicates == 0 || ens.categories != fit.pi_hat.size())
    fail(ErrorCode::InvalidArgument, "ensemble does not match the fit");
}

}  // namespace detail

// Lower event for replicate b, category c: y_hat* - q sep* <= y*, i.e. q >= (y_hat* - y*) / sep*.
inline double lower_margin(const BootstrapEnsemble& e, std::size_t b, std::size_t c) {
  return (e.y_hat_star(b, c) - e.y_star(b, c)) / e.sep_star(b, c);
}
// Upper event: y* <= y_hat* + q sep*, i.e. q >= (y* - y_hat*) / sep*.
inline double upper_margin(const BootstrapEnsemble& e, std::size_t b, std::size_t c) {
  return (e.y_star(b, c) - e.y_hat_star(b, c)) / e.sep_star(b, c);
}

/// Simultaneous fraction of replicates inside [y_hat* - qL sep*, y_hat* + qU sep*] for all c.
inline double ensemble_coverage(const BootstrapEnsemble& e, std::span<const double> q_lower,
                                std::span<const double> q_upper) {
  std::size_t inside = 0;
  for (std::size_t b = 0; b < e.replicates; ++b) {
    bool ok = true;
    for (std::size_t c = 0; c < e.categories && ok; ++c) {
      const double lo = e.y_hat_star(b, c) - q_lower[c] * e.sep_star(b, c);
      const double hi = e.y_hat_star(b, c) + q_upper[c] * e.sep_star(b, c);
      ok = lo <= e.y_star(b, c) && e.y_star(b, c) <= hi;
    }
    inside += ok ? 1 : 0;
  }
  return static_cast<double>(inside) / static_cast<double>(e.replicates);
}

inline PredictionIntervalSet symmetric_calibration(const BootstrapEnsemble& ens, const ModelFit& fit,
                                                   const FutureSpec& spec, const CalibrationSettings& settings = {}) {
  detail::check_ensemble(ens, fit);
  std::vector<double> v(ens.replicates);
  for (std::size_t b = 0; b < ens.replicates; ++b) {
    double worst = 0.0;
    for (std::size_t c = 0; c < ens.categories; ++c)
      worst = std::max({worst, lower_margin(ens, b, c), upper_margin(ens, b, c)});
    v[b] = worst;
  }
  const auto r = detail::calibrate_on(std::move(v), 1.0 - spec.alpha, settings);
  const std::vector<double> q(ens.categories, r.q);
  auto set = make_interval_set("sym-calib", predict_point(fit, spec.m), q, q, spec);
  detail::note_unconverged(set, r, "symmetric");
  return set;
}

inline PredictionIntervalSet asymmetric_calibration(const BootstrapEnsemble& ens, const ModelFit& fit,
                                                    const FutureSpec& spec, const CalibrationSettings& settings = {}) {
  detail::check_ensemble(ens, fit);
  std::vector<double> v_lo(ens.replicates), v_hi(ens.replicates);
  for (std::size_t b = 0; b < ens.replicates; ++b) {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < ens.categories; ++c) {
      lo = std::max(lo, lower_margin(ens, b, c));
      hi = std::max(hi, upper_margin(ens, b, c));
    }
    v_lo[b] = lo;
    v_hi[b] = hi;
  }
  const double target = 1.0 - spec.alpha / 2.0;
  const auto rl = detail::calibrate_on(std::move(v_lo), target, settings);
  const auto ru = detail::calibrate_on(std::move(v_hi), target, settings);
  auto set = make_interval_set("asym-calib", predict_point(fit, spec.m), std::vector<double>(ens.categories, rl.q),
                               std::vector<double>(ens.categories, ru.q), spec);
  detail::note_unconverged(set, rl, "asymmetric lower");
  detail::note_unconverged(set, ru, "asymmetric upper");
  return set;
}

inline PredictionIntervalSet marginal_calibration(const BootstrapEnsemble& ens, const ModelFit& fit,
                                                  const FutureSpec& spec, const CalibrationSettings& settings = {}) {
  detail::check_ensemble(ens, fit);
  const std::size_t C = ens.categories;
  const double target = 1.0 - spec.alpha / (2.0 * static_cast<double>(C));
  std::vector<double> q_lo(C), q_hi(C);
  std::vector<CalibrationResult> results;
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> v_lo(ens.replicates), v_hi(ens.replicates);
    for (std::size_t b = 0; b < ens.replicates; ++b) {
      v_lo[b] = lower_margin(ens, b, c);
      v_hi[b] = upper_margin(ens, b, c);
    }
    const auto rl = detail::calibrate_on(std::move(v_lo), target, settings);
    const auto ru = detail::calibrate_on(std::move(v_hi), target, settings);
    q_lo[c] = rl.q;
    q_hi[c] = ru.q;
    results.push_back(rl);
    results.push_back(ru);
  }
  auto set = make_interval_set("marginal", predict_point(fit, spec.m), q_lo, q_hi, spec);
  for (std::size_t i = 0; i < results.size(); ++i)
    detail::note_unconverged(set, results[i],
                             "marginal category " + std::to_string(i / 2 + 1) + (i % 2 == 0 ? " lower" : " upper"));
  return set;
}

/// Empirical (1 - alpha) quantile of max_c |z_bc|.
inline double masr_multiplier(const BootstrapEnsemble& ens, double alpha) {
  std::vector<double> zmax(ens.replicates);
  for (std::size_t b = 0; b < ens.replicates; ++b) {
    double m = 0.0;
    for (std::size_t c = 0; c < ens.categories; ++c) m = std::max(m, std::abs(ens.z(b, c)));
    zmax[b] = m;
  }
  return empirical_quantile(std::move(zmax), 1.0 - alpha);
}

inline PredictionIntervalSet masr_interval(const BootstrapEnsemble& ens, const ModelFit& fit, const FutureSpec& spec) {
  detail::check_ensemble(ens, fit);
  const std::vector<double> q(ens.categories, masr_multiplier(ens, spec.alpha));
  return make_interval_set("masr", predict_point(fit, spec.m), q, q, spec);
}

inline PredictionIntervalSet rank_scs_interval(const BootstrapEnsemble& ens, const ModelFit& fit,
                                               const FutureSpec& spec) {
  detail::check_ensemble(ens, fit);
  const auto box = rank_box(ens.z, spec.alpha);
  std::vector<double> q_lo(ens.categories), q_hi(ens.categories);
  for (std::size_t c = 0; c < ens.categories; ++c) {
    q_lo[c] = std::abs(box.lower[c]);
    q_hi[c] = box.upper[c];
  }
  auto set = make_interval_set("rank-scs", predict_point(fit, spec.m), q_lo, q_hi, spec);
  for (std::size_t c = 0; c < ens.categories; ++c) {
    if (box.lower[c] > 0.0)
      set.diagnostics.push_back("category " + std::to_string(c + 1) + ": lower critical residual is positive");
    if (box.upper[c] < 0.0)
      set.diagnostics.push_back("category " + std::to_string(c + 1) + ": upper critical residual is negative");
  }
  if (box.tau_star == ens.replicates)
    set.diagnostics.push_back("DegenerateRank: critical rank equals B; bounds are the extreme residuals");
  return set;
}

}  // namespace hcdpi
