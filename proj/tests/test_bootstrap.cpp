#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hcdpi/bootstrap.hpp"
#include "hcdpi/dm_sampler.hpp"

using namespace hcdpi;

namespace {

struct Setup {
  HistoricalDataset data;
  ModelFit fit;
  FutureSpec spec;
};

Setup make_setup(std::vector<double> pi, double phi, std::size_t K, count_t n, std::uint64_t seed) {
  RngStream rng(seed);
  Setup s;
  s.data = generate_dataset(K, n, pi, phi, rng, true);
  s.fit = fit_model(s.data);
  s.spec = FutureSpec{n, 0.05};
  return s;
}

// Ensemble with given residuals, y_hat = 0 and sep = 1, so z = y.
BootstrapEnsemble synthetic_ensemble(const Matrix<double>& z) {
  BootstrapEnsemble e;
  e.replicates = z.rows();
  e.categories = z.cols();
  e.y_hat_star = Matrix<double>(z.rows(), z.cols());
  e.sep_star = Matrix<double>(z.rows(), z.cols());
  e.y_star = z;
  e.z = z;
  for (std::size_t b = 0; b < z.rows(); ++b)
    for (std::size_t c = 0; c < z.cols(); ++c) e.sep_star(b, c) = 1.0;
  return e;
}

ModelFit unit_fit(std::size_t C) {
  ModelFit f;
  f.pi_hat.assign(C, 1.0 / static_cast<double>(C));
  f.phi_hat = 1.01;
  f.n_hist = 100000;
  return f;
}

Matrix<double> normal_matrix(std::size_t B, std::size_t C, std::uint64_t seed) {
  RngStream rng(seed);
  std::normal_distribution<double> normal;
  Matrix<double> z(B, C);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) z(b, c) = normal(rng);
  return z;
}

// Enumerates w_b directly from its definition: rank r = 1 + #{b' : z_b' < z_b}.
std::size_t brute_force_tau(const std::vector<double>& z, double alpha) {
  const std::size_t B = z.size();
  std::vector<std::size_t> w;
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < B; ++j)
      if (z[j] < z[b] || (z[j] == z[b] && j < b)) ++r;
    w.push_back(std::max(r, B + 1 - r));
  }
  std::sort(w.begin(), w.end());
  const auto k = static_cast<std::size_t>(std::llround((1.0 - alpha) * static_cast<double>(B)));
  return w[k - 1];
}

}  // namespace

TEST(Bisection, SmoothNormalOracle) {
  auto cov = [](double q) { return normal_cdf(q) - normal_cdf(-q); };
  CalibrationSettings tight;
  tight.tolerance = 1e-4;
  const auto r = bisection_calibrate(cov, 0.95, tight);
  EXPECT_TRUE(r.converged);
  EXPECT_GE(r.q, 1.955);
  EXPECT_LE(r.q, 1.965);
  // Default tolerance is in coverage units: only |coverage - target| <= t is promised.
  const auto d = bisection_calibrate(cov, 0.95);
  EXPECT_TRUE(d.converged);
  EXPECT_LE(std::abs(cov(d.q) - 0.95), 0.0025);
}

TEST(Bisection, BracketExtends) {
  const auto r = bisection_calibrate([](double q) { return std::min(1.0, q / 100.0); }, 0.5);
  EXPECT_NEAR(r.q, 50.0, 0.3);
}

TEST(Bisection, BracketErrorWhenUnreachable) {
  try {
    bisection_calibrate([](double) { return 0.1; }, 0.95);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BracketError);
  }
}

TEST(Bisection, StepFunctionReturnsConservativeSide) {
  // Coverage jumps from 0.9 to 1.0 at q = 3; target 0.95 is unreachable within t.
  const auto r = bisection_calibrate([](double q) { return q < 3.0 ? 0.9 : 1.0; }, 0.95);
  EXPECT_FALSE(r.converged);
  EXPECT_GE(r.q, 3.0);
  EXPECT_NEAR(r.q, 3.0, 1e-6);
  EXPECT_DOUBLE_EQ(r.coverage, 1.0);
}

TEST(Bisection, FullCoverageTarget) {
  const auto z = normal_matrix(100, 2, 1);
  const auto e = synthetic_ensemble(z);
  const auto set = symmetric_calibration(e, unit_fit(2), FutureSpec{1000000, 0.0 + 1e-12});
  double max_abs = 0.0;
  for (std::size_t b = 0; b < 100; ++b)
    for (std::size_t c = 0; c < 2; ++c) max_abs = std::max(max_abs, std::abs(z(b, c)));
  EXPECT_GE(set.multiplier_lower[0], max_abs);
}

TEST(Ensemble, DeterministicAndThreadInvariant) {
  const auto s = make_setup({0.25, 0.25, 0.5}, 5.0, 10, 50, 2);
  const auto a = build_ensemble(s.fit, s.data, s.spec, 300, RngStream(9), 1);
  const auto b = build_ensemble(s.fit, s.data, s.spec, 300, RngStream(9), 3);
  EXPECT_EQ(a.y_star, b.y_star);
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.sep_star, b.sep_star);
}

TEST(Ensemble, FutureMeansMatchFit) {
  const auto s = make_setup({0.25, 0.25, 0.5}, 5.0, 10, 50, 3);
  const std::size_t B = 10000;
  const auto e = build_ensemble(s.fit, s.data, s.spec, B, RngStream(10));
  for (std::size_t c = 0; c < 3; ++c) {
    const auto col = e.y_star.column(c);
    const double se = sd_of<double>(col) / std::sqrt(static_cast<double>(B));
    EXPECT_NEAR(mean_of<double>(col), 50.0 * s.fit.pi_hat[c], 3.0 * se);
  }
}

TEST(Ensemble, ResidualsNearPivotalWithoutOverdispersion) {
  auto s = make_setup({0.25, 0.25, 0.5}, 1.01, 10, 50, 4);
  s.fit.phi_hat = 1.01;
  const auto e = build_ensemble(s.fit, s.data, s.spec, 10000, RngStream(11));
  for (std::size_t c = 0; c < 3; ++c) {
    const double sd = sd_of<double>(e.z.column(c));
    EXPECT_GE(sd, 0.9);
    EXPECT_LE(sd, 1.15);
  }
}

TEST(SymmetricCalibration, ReachesTargetOnEnsemble) {
  const auto s = make_setup({0.25, 0.25, 0.5}, 5.0, 10, 50, 5);
  const auto e = build_ensemble(s.fit, s.data, s.spec, 2000, RngStream(12));
  const auto set = symmetric_calibration(e, s.fit, s.spec);
  const double cov = ensemble_coverage(e, set.multiplier_lower, set.multiplier_upper);
  EXPECT_GE(cov, 0.95 - 0.0025);
  if (set.diagnostics.empty()) {
    EXPECT_LE(cov, 0.95 + 0.0025);
  }
}

TEST(SymmetricCalibration, PivotalSingleCategory) {
  const auto e = synthetic_ensemble(normal_matrix(20000, 1, 2));
  const auto set = symmetric_calibration(e, unit_fit(1), FutureSpec{1000000, 0.05});
  EXPECT_NEAR(set.multiplier_lower[0], 1.96, 0.05);
}

TEST(AsymmetricCalibration, SymmetricResidualsGiveEqualSides) {
  const auto e = synthetic_ensemble(normal_matrix(20000, 3, 3));
  const auto set = asymmetric_calibration(e, unit_fit(3), FutureSpec{1000000, 0.05});
  EXPECT_NEAR(set.multiplier_lower[0], set.multiplier_upper[0], 0.1);
}

TEST(AsymmetricCalibration, RightSkewGivesLargerUpperMultiplier) {
  RngStream rng(4);
  std::exponential_distribution<double> expo(1.0);
  Matrix<double> z(5000, 2);
  for (std::size_t b = 0; b < 5000; ++b)
    for (std::size_t c = 0; c < 2; ++c) z(b, c) = expo(rng) - 1.0;
  const auto set = asymmetric_calibration(synthetic_ensemble(z), unit_fit(2), FutureSpec{1000000, 0.05});
  EXPECT_GT(set.multiplier_upper[0], set.multiplier_lower[0]);
}

TEST(AsymmetricCalibration, OneSidedCoverage) {
  const auto s = make_setup({0.1, 0.3, 0.6}, 5.0, 10, 50, 6);
  const auto e = build_ensemble(s.fit, s.data, s.spec, 2000, RngStream(13));
  const auto set = asymmetric_calibration(e, s.fit, s.spec);
  const std::vector<double> inf(3, 1e300);
  EXPECT_GE(ensemble_coverage(e, set.multiplier_lower, inf), 0.975 - 0.0025);
  EXPECT_GE(ensemble_coverage(e, inf, set.multiplier_upper), 0.975 - 0.0025);
}

TEST(MarginalCalibration, PerBoundTargetsAndUnionBound) {
  const auto s = make_setup({0.25, 0.25, 0.5}, 5.0, 10, 50, 7);
  const auto e = build_ensemble(s.fit, s.data, s.spec, 4000, RngStream(14));
  const auto set = marginal_calibration(e, s.fit, s.spec);
  const double target = 1.0 - 0.05 / 6.0;
  EXPECT_NEAR(target, 0.99167, 1e-5);
  std::vector<double> inf(3, 1e300);
  for (std::size_t c = 0; c < 3; ++c) {
    auto lo = inf, hi = inf;
    lo[c] = set.multiplier_lower[c];
    hi[c] = set.multiplier_upper[c];
    EXPECT_GE(ensemble_coverage(e, lo, inf), target - 0.0025);
    EXPECT_GE(ensemble_coverage(e, inf, hi), target - 0.0025);
  }
  EXPECT_GE(ensemble_coverage(e, set.multiplier_lower, set.multiplier_upper), 0.95 - 0.0025);
}

TEST(MarginalCalibration, ExchangeableCategoriesShareMultipliers) {
  const auto e = synthetic_ensemble(normal_matrix(40000, 3, 5));
  const auto set = marginal_calibration(e, unit_fit(3), FutureSpec{1000000, 0.05});
  for (std::size_t c = 1; c < 3; ++c) EXPECT_NEAR(set.multiplier_lower[c], set.multiplier_lower[0], 0.1);
}

TEST(Masr, QuantileDefinition) {
  const auto s = make_setup({0.25, 0.25, 0.5}, 5.0, 10, 50, 8);
  const auto e = build_ensemble(s.fit, s.data, s.spec, 2000, RngStream(15));
  const double q = masr_multiplier(e, 0.05);
  std::size_t inside = 0;
  for (std::size_t b = 0; b < e.replicates; ++b) {
    double m = 0;
    for (std::size_t c = 0; c < 3; ++c) m = std::max(m, std::abs(e.z(b, c)));
    inside += m <= q ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(inside) / 2000.0, 0.95);
}

TEST(Masr, PivotalSingleCategory) {
  const auto e = synthetic_ensemble(normal_matrix(20000, 1, 6));
  EXPECT_NEAR(masr_multiplier(e, 0.05), 1.96, 0.05);
}

TEST(Masr, AgreesWithSymmetricCalibration) {
  const auto s = make_setup({0.25, 0.25, 0.5}, 1.01, 10, 50, 9);
  const auto e = build_ensemble(s.fit, s.data, s.spec, 4000, RngStream(16));
  const double qs = symmetric_calibration(e, s.fit, s.spec).multiplier_lower[0];
  EXPECT_NEAR(masr_multiplier(e, 0.05), qs, 0.05);
}

TEST(RankScs, ToyExampleMatchesEnumeration) {
  const auto z = normal_matrix(100, 1, 7);
  const auto summary = rank_summary(z, 0.05);
  auto col = z.column(0);
  EXPECT_EQ(summary.tau_star, 98u);
  EXPECT_EQ(summary.tau_star, brute_force_tau(col, 0.05));
  const auto box = rank_box(z, 0.05);
  std::sort(col.begin(), col.end());
  EXPECT_EQ(box.lower[0], col[2]);
  EXPECT_EQ(box.upper[0], col[97]);
  std::size_t inside = 0;
  for (std::size_t b = 0; b < 100; ++b) inside += (z(b, 0) >= box.lower[0] && z(b, 0) <= box.upper[0]) ? 1 : 0;
  EXPECT_EQ(inside, 96u);
}

TEST(RankScs, RandomTauMatchesEnumeration) {
  RngStream rng(8);
  for (std::size_t B : {20u, 57u, 100u, 233u}) {
    std::uniform_int_distribution<int> small(0, 5);
    std::vector<double> col(B);
    for (auto& v : col) v = small(rng);  // heavy ties
    Matrix<double> z(B, 1);
    for (std::size_t b = 0; b < B; ++b) z(b, 0) = col[b];
    EXPECT_EQ(rank_summary(z, 0.05).tau_star, brute_force_tau(col, 0.05)) << "B=" << B;
    EXPECT_EQ(rank_summary(z, 0.1).tau_star, brute_force_tau(col, 0.1)) << "B=" << B;
  }
}

TEST(RankScs, BoxContainsEnoughReplicates) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto z = normal_matrix(1000, 4, seed);
    const auto box = rank_box(z, 0.05);
    std::size_t inside = 0;
    for (std::size_t b = 0; b < 1000; ++b) {
      bool ok = true;
      for (std::size_t c = 0; c < 4; ++c) ok = ok && box.lower[c] <= z(b, c) && z(b, c) <= box.upper[c];
      inside += ok ? 1 : 0;
    }
    EXPECT_GE(static_cast<double>(inside) / 1000.0, 0.95 - 1.0 / 1000.0);
  }
}

TEST(RankScs, SymmetricResidualsMatchMasr) {
  const auto e = synthetic_ensemble(normal_matrix(20000, 3, 9));
  const auto set = rank_scs_interval(e, unit_fit(3), FutureSpec{1000000, 0.05});
  const double q = masr_multiplier(e, 0.05);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(set.multiplier_lower[c], q, 0.1);
    EXPECT_NEAR(set.multiplier_upper[c], q, 0.1);
  }
}

TEST(RankScs, DegenerateRankDiagnostic) {
  const auto e = synthetic_ensemble(normal_matrix(10, 2, 10));
  const auto set = rank_scs_interval(e, unit_fit(2), FutureSpec{1000000, 0.05});
  bool flagged = false;
  for (const auto& d : set.diagnostics) flagged = flagged || d.find("DegenerateRank") != std::string::npos;
  EXPECT_TRUE(flagged);
}
