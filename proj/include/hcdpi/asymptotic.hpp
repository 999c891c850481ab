#pragma once

// Closed-form normal-approximation intervals: pointwise, Bonferroni and
// the multivariate-normal equicoordinate construction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "hcdpi/error.hpp"
#include "hcdpi/model.hpp"
#include "hcdpi/parallel.hpp"
#include "hcdpi/rng.hpp"
#include "hcdpi/stats.hpp"

namespace hcdpi {

struct PredCovariance {
  Eigen::MatrixXd sigma;        // phi m (1 + m/N) (Diag(pi) - pi pi^T)
  Eigen::MatrixXd correlation;  // unit diagonal; zero-variance categories decoupled
};

inline PredCovariance pred_covariance(const ModelFit& fit, count_t m) {
  const auto C = static_cast<Eigen::Index>(fit.pi_hat.size());
  const double md = static_cast<double>(m);
  const double scale = fit.phi_hat * md * (1.0 + md / static_cast<double>(fit.n_hist));
  PredCovariance out;
  out.sigma.resize(C, C);
  for (Eigen::Index i = 0; i < C; ++i) {
    for (Eigen::Index j = 0; j < C; ++j) {
      const double pi_i = fit.pi_hat[static_cast<std::size_t>(i)];
      const double pi_j = fit.pi_hat[static_cast<std::size_t>(j)];
      out.sigma(i, j) = scale * ((i == j ? pi_i : 0.0) - pi_i * pi_j);
    }
  }
  out.correlation = Eigen::MatrixXd::Identity(C, C);
  for (Eigen::Index i = 0; i < C; ++i) {
    for (Eigen::Index j = 0; j < C; ++j) {
      if (i == j) continue;
      const double d = out.sigma(i, i) * out.sigma(j, j);
      out.correlation(i, j) = d > 0.0 ? out.sigma(i, j) / std::sqrt(d) : 0.0;
    }
  }
  return out;
}

namespace detail {
inline PredictionIntervalSet symmetric_normal_interval(std::string method, const ModelFit& fit,
                                                       const FutureSpec& spec, double q) {
  spec.validate();
  const auto point = predict_point(fit, spec.m);
  const std::vector<double> mult(point.y_hat.size(), q);
  return make_interval_set(std::move(method), point, mult, mult, spec);
}
}  // namespace detail

inline PredictionIntervalSet pointwise_interval(const ModelFit& fit, const FutureSpec& spec) {
  return detail::symmetric_normal_interval("pointwise", fit, spec, normal_quantile(1.0 - spec.alpha / 2.0));
}

inline PredictionIntervalSet bonferroni_interval(const ModelFit& fit, const FutureSpec& spec) {
  const auto C = static_cast<double>(fit.pi_hat.size());
  return detail::symmetric_normal_interval("bonferroni", fit, spec, normal_quantile(1.0 - spec.alpha / (2.0 * C)));
}

inline constexpr std::size_t kDefaultMvnDraws = 100000;

/// (1 - alpha) quantile of max_c |z_c| for z ~ MVN(0, R), by Monte Carlo.
///
/// R may be singular (the multinomial correlation has rank C - 1). It is
/// factored through its eigendecomposition; eigenvalues in [-1e-8, 1e-10]
/// are treated as zero and anything more negative is rejected. Draws are
/// produced in fixed-size blocks, each from its own substream, so the
/// result does not depend on the thread count.
inline double equicoordinate_quantile(const Eigen::MatrixXd& R, double alpha, std::size_t n_draws, RngStream rng,
                                      unsigned threads = 1) {
  if (R.rows() != R.cols() || R.rows() == 0) fail(ErrorCode::InvalidArgument, "correlation matrix must be square");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (n_draws == 0) fail(ErrorCode::InvalidArgument, "need at least one draw");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R);
  if (eig.info() != Eigen::Success) fail(ErrorCode::NotPSD, "eigendecomposition failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -1e-8) fail(ErrorCode::NotPSD, "correlation matrix has a negative eigenvalue");
    if (lambda(i) > 1e-10) keep.push_back(i);
  }
  const auto C = R.rows();
  const auto rank = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd factor(C, rank);
  for (Eigen::Index j = 0; j < rank; ++j)
    factor.col(j) = eig.eigenvectors().col(keep[static_cast<std::size_t>(j)]) * std::sqrt(lambda(keep[static_cast<std::size_t>(j)]));

  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (n_draws + kBlock - 1) / kBlock;
  std::vector<double> maxima(n_draws);
  parallel_for(blocks, threads, [&](std::size_t blk) {
    RngStream local = rng.substream(blk);
    std::normal_distribution<double> normal;
    Eigen::VectorXd g(rank);
    const std::size_t begin = blk * kBlock;
    const std::size_t end = std::min(n_draws, begin + kBlock);
    for (std::size_t d = begin; d < end; ++d) {
      for (Eigen::Index j = 0; j < rank; ++j) g(j) = normal(local);
      const Eigen::VectorXd z = factor * g;
      maxima[d] = z.cwiseAbs().maxCoeff();
    }
  });
  return empirical_quantile(std::move(maxima), 1.0 - alpha);
}

inline PredictionIntervalSet mvn_interval(const ModelFit& fit, const FutureSpec& spec, std::size_t n_draws,
                                          RngStream rng, unsigned threads = 1) {
  spec.validate();
  const auto cov = pred_covariance(fit, spec.m);
  // Categories with zero variance carry no information about the maximum.
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < cov.sigma.rows(); ++i)
    if (cov.sigma(i, i) > 0.0) active.push_back(i);
  double q = normal_quantile(1.0 - spec.alpha / 2.0);
  if (active.size() >= 2) {
    Eigen::MatrixXd R(active.size(), active.size());
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t j = 0; j < active.size(); ++j) R(i, j) = cov.correlation(active[i], active[j]);
    q = equicoordinate_quantile(R, spec.alpha, n_draws, rng, threads);
  }
  return detail::symmetric_normal_interval("mvn", fit, spec, q);
}

}  // namespace hcdpi
