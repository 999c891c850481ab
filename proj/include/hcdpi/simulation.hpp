#pragma once

// Monte-Carlo harness: draws historical data and a future study from the
// Dirichlet-multinomial generator, applies the interval methods, and
// tallies simultaneous coverage and per-bound tail errors.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "hcdpi/dm_sampler.hpp"
#include "hcdpi/error.hpp"
#include "hcdpi/methods.hpp"
#include "hcdpi/model.hpp"
#include "hcdpi/parallel.hpp"
#include "hcdpi/rng.hpp"
#include "hcdpi/stats.hpp"

namespace hcdpi {

struct CatalogVector {
  std::string id;                // e.g. "C5-7"
  std::size_t categories = 0;
  std::size_t index = 0;         // 1-based row in its table
  std::vector<double> verbatim;  // as tabulated; some rows sum to 0.99 or 1.05
  std::vector<double> pi;        // verbatim rescaled onto the simplex
};

/// The 32 probability vectors of the simulation design (12 with C = 3,
/// 10 with C = 5, 10 with C = 10).
inline const std::vector<CatalogVector>& probability_catalog() {
  static const std::vector<CatalogVector> catalog = [] {
    const std::vector<std::vector<double>> c3 = {
        {0.33, 0.33, 0.33}, {0.01, 0.01, 0.98}, {0.25, 0.01, 0.74}, {0.49, 0.02, 0.49},
        {0.25, 0.25, 0.50}, {0.10, 0.30, 0.60}, {0.02, 0.03, 0.95}, {0.05, 0.05, 0.90},
        {0.05, 0.10, 0.85}, {0.05, 0.15, 0.80}, {0.10, 0.20, 0.70}, {0.05, 0.35, 0.65},
    };
    const std::vector<std::vector<double>> c5 = {
        {0.20, 0.20, 0.20, 0.20, 0.20}, {0.30, 0.30, 0.20, 0.10, 0.10}, {0.44, 0.22, 0.11, 0.11, 0.11},
        {0.50, 0.30, 0.10, 0.05, 0.05}, {0.45, 0.27, 0.18, 0.08, 0.01}, {0.70, 0.10, 0.10, 0.05, 0.05},
        {0.80, 0.10, 0.05, 0.04, 0.01}, {0.10, 0.10, 0.20, 0.30, 0.30}, {0.11, 0.11, 0.11, 0.22, 0.44},
        {0.05, 0.05, 0.10, 0.30, 0.50},
    };
    const std::vector<std::vector<double>> c10 = {
        {0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10},
        {0.05, 0.05, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.20},
        {0.05, 0.05, 0.05, 0.05, 0.10, 0.10, 0.10, 0.10, 0.10, 0.30},
        {0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.10, 0.10, 0.10, 0.40},
        {0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.10, 0.50},
        {0.025, 0.025, 0.025, 0.025, 0.05, 0.05, 0.05, 0.05, 0.10, 0.60},
        {0.025, 0.025, 0.025, 0.025, 0.05, 0.05, 0.05, 0.05, 0.35, 0.35},
        {0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.10, 0.20, 0.20, 0.20},
        {0.025, 0.025, 0.025, 0.025, 0.05, 0.05, 0.20, 0.20, 0.20, 0.20},
        {0.025, 0.025, 0.025, 0.025, 0.05, 0.05, 0.10, 0.20, 0.20, 0.30},
    };
    std::vector<CatalogVector> out;
    for (const auto* table : {&c3, &c5, &c10}) {
      for (std::size_t i = 0; i < table->size(); ++i) {
        CatalogVector v;
        v.categories = (*table)[i].size();
        v.index = i + 1;
        v.id = "C" + std::to_string(v.categories) + "-" + std::to_string(v.index);
        v.verbatim = (*table)[i];
        v.pi = normalize_probabilities(v.verbatim);
        out.push_back(std::move(v));
      }
    }
    return out;
  }();
  return catalog;
}

inline const CatalogVector& catalog_vector(const std::string& id) {
  for (const auto& v : probability_catalog())
    if (v.id == id) return v;
  fail(ErrorCode::InvalidArgument, "unknown catalog vector '" + id + "' (expected C3-1..C3-12, C5-1..C5-10, C10-1..C10-10)");
}

struct Scenario {
  std::string id;
  std::size_t K = 10;
  count_t n = 50;
  count_t m = 50;
  double phi = 5.0;
  std::vector<double> pi_true;
  std::size_t n_iter = 500;
  std::vector<Method> methods;
  MethodSettings settings;  // B, calibration, MVN draws, MCMC
  double alpha = 0.05;
  std::uint64_t seed = 1;
  bool repair_zero_columns = false;
  bool sparse = false;  // min_c pi_c n < 1

  void validate() const {
    if (K < 2) fail(ErrorCode::InvalidArgument, "scenario needs K >= 2");
    if (n < 2 || m < 1) fail(ErrorCode::InvalidArgument, "scenario needs n >= 2 and m >= 1");
    if (!(phi > 1.0 && phi < static_cast<double>(n)))
      fail(ErrorCode::InvalidDispersion, "scenario needs 1 < phi < n");
    if (m > 1 && !(phi < static_cast<double>(m))) fail(ErrorCode::InvalidDispersion, "scenario needs phi < m");
    validate_probabilities(pi_true, "pi_true");
    if (n_iter < 1) fail(ErrorCode::InvalidArgument, "scenario needs n_iter >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  }

  double min_expected_count() const {
    return *std::min_element(pi_true.begin(), pi_true.end()) * static_cast<double>(n);
  }
};

/// The full design: every catalog vector crossed with K in {5,10,20,100},
/// n = m in {10,50,100,500} and phi in {1.01,5,8}. Sparse combinations are
/// flagged, not dropped.
inline std::vector<Scenario> scenario_catalog() {
  std::vector<Scenario> out;
  for (const auto& v : probability_catalog()) {
    for (std::size_t K : {5, 10, 20, 100}) {
      for (count_t n : {10, 50, 100, 500}) {
        for (double phi : {1.01, 5.0, 8.0}) {
          if (!(phi < static_cast<double>(n))) continue;
          Scenario s;
          s.K = K;
          s.n = n;
          s.m = n;
          s.phi = phi;
          s.pi_true = v.pi;
          char buf[96];
          std::snprintf(buf, sizeof buf, "%s_K%zu_n%lld_phi%g", v.id.c_str(), K, static_cast<long long>(n), phi);
          s.id = buf;
          s.sparse = s.min_expected_count() < 1.0;
          out.push_back(std::move(s));
        }
      }
    }
  }
  return out;
}

struct MethodTally {
  std::string method;
  std::size_t evaluated = 0;
  std::size_t contained = 0;
  std::vector<std::size_t> below;  // y_c < L_c
  std::vector<std::size_t> above;  // y_c > U_c
  double multiplier_lower_sum = 0.0;
  double multiplier_upper_sum = 0.0;
  std::size_t multiplier_count = 0;

  double coverage() const { return evaluated ? static_cast<double>(contained) / static_cast<double>(evaluated) : 0.0; }
  double mc_error() const { return hcdpi::mc_error(coverage(), evaluated); }
  double p_below(std::size_t c) const { return evaluated ? static_cast<double>(below[c]) / static_cast<double>(evaluated) : 0.0; }
  double p_above(std::size_t c) const { return evaluated ? static_cast<double>(above[c]) / static_cast<double>(evaluated) : 0.0; }
  double mean_multiplier_lower() const { return multiplier_count ? multiplier_lower_sum / static_cast<double>(multiplier_count) : 0.0; }
  double mean_multiplier_upper() const { return multiplier_count ? multiplier_upper_sum / static_cast<double>(multiplier_count) : 0.0; }
};

struct SimulationReport {
  Scenario scenario;
  std::vector<MethodTally> methods;
  std::size_t iterations = 0;
  std::size_t failed_iterations = 0;
  std::vector<std::string> failure_messages;  // first few, for diagnosis
  bool exceeded_failure_cap = false;
  double min_expected_count = 0.0;
  double runtime_seconds = 0.0;  // not serialized; varies run to run
};

namespace detail {
struct IterationOutcome {
  bool failed = false;
  std::string error;
  std::vector<PredictionIntervalSet> intervals;
  std::vector<count_t> future;
};
}  // namespace detail

/// Runs the scenario. Iteration i draws everything from substream i of the
/// scenario seed; outcomes are reduced in iteration order, so the report
/// does not depend on the thread count.
inline SimulationReport run_simulation(const Scenario& s, unsigned threads = 1) {
  s.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t C = s.pi_true.size();
  const RngStream master(s.seed);
  MethodSettings inner = s.settings;
  inner.threads = 1;  // parallelism lives at the iteration level
  const FutureSpec spec{s.m, s.alpha};

  std::vector<detail::IterationOutcome> outcomes(s.n_iter);
  parallel_for(s.n_iter, threads, [&](std::size_t i) {
    const RngStream it = master.substream(i);
    auto& out = outcomes[i];
    try {
      RngStream data_rng = it.substream(0);
      const auto data = generate_dataset(s.K, s.n, s.pi_true, s.phi, data_rng, s.repair_zero_columns);
      RngStream future_rng = it.substream(1);
      out.future = sample_dm_vector(s.m, s.pi_true, s.phi, future_rng);
      out.intervals = compute_intervals(data, spec, s.methods, inner, it.substream(2)).intervals;
    } catch (const Error& e) {
      out.failed = true;
      out.error = e.what();
      out.intervals.clear();
    }
  });

  SimulationReport report;
  report.scenario = s;
  report.iterations = s.n_iter;
  report.min_expected_count = s.min_expected_count();
  for (const auto& m : s.methods) {
    MethodTally t;
    t.method = method_id(m);
    t.below.assign(C, 0);
    t.above.assign(C, 0);
    report.methods.push_back(std::move(t));
  }
  for (const auto& out : outcomes) {
    if (out.failed) {
      ++report.failed_iterations;
      if (report.failure_messages.size() < 5) report.failure_messages.push_back(out.error);
      continue;
    }
    for (std::size_t j = 0; j < out.intervals.size(); ++j) {
      const auto& set = out.intervals[j];
      auto& t = report.methods[j];
      ++t.evaluated;
      bool all_in = true;
      for (std::size_t c = 0; c < C; ++c) {
        const auto y = static_cast<double>(out.future[c]);
        if (y < set.lower[c]) {
          ++t.below[c];
          all_in = false;
        }
        if (y > set.upper[c]) {
          ++t.above[c];
          all_in = false;
        }
      }
      t.contained += all_in ? 1 : 0;
      if (std::isfinite(set.multiplier_lower.front()) && std::isfinite(set.multiplier_upper.front())) {
        double lo = 0.0, hi = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          lo += set.multiplier_lower[c];
          hi += set.multiplier_upper[c];
        }
        t.multiplier_lower_sum += lo / static_cast<double>(C);
        t.multiplier_upper_sum += hi / static_cast<double>(C);
        ++t.multiplier_count;
      }
    }
  }
  report.exceeded_failure_cap =
      static_cast<double>(report.failed_iterations) > 0.05 * static_cast<double>(report.iterations);
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

struct TailBalanceRow {
  std::string method;
  std::size_t category = 0;  // 0-based
  double p_at_least_lower = 0.0;  // P(y_c >= L_c)
  double p_at_most_upper = 0.0;   // P(y_c <= U_c)
  double reference = 0.0;         // 1 - alpha / (2C)
  double mc_error = 0.0;          // 1.96 sqrt(r (1 - r) / n) at the reference level
};

inline std::vector<TailBalanceRow> tail_balance(const SimulationReport& report) {
  std::vector<TailBalanceRow> rows;
  const std::size_t C = report.scenario.pi_true.size();
  const double reference = 1.0 - report.scenario.alpha / (2.0 * static_cast<double>(C));
  for (const auto& t : report.methods) {
    for (std::size_t c = 0; c < C; ++c) {
      TailBalanceRow r;
      r.method = t.method;
      r.category = c;
      r.p_at_least_lower = 1.0 - t.p_below(c);
      r.p_at_most_upper = 1.0 - t.p_above(c);
      r.reference = reference;
      r.mc_error = mc_error(reference, t.evaluated);
      rows.push_back(r);
    }
  }
  return rows;
}

}  // namespace hcdpi
