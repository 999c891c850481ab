#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hcdpi/simulation.hpp"

using namespace hcdpi;

TEST(Catalog, KnownRows) {
  const auto& c35 = catalog_vector("C3-5");
  EXPECT_EQ(c35.pi, (std::vector<double>{0.25, 0.25, 0.50}));
  const auto& c57 = catalog_vector("C5-7");
  const std::vector<double> expected{0.80, 0.10, 0.05, 0.04, 0.01};
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(c57.pi[c], expected[c], 1e-15);
  EXPECT_THROW(catalog_vector("C7-1"), Error);
}

TEST(Catalog, VectorsOnSimplex) {
  std::set<std::string> ids;
  for (const auto& v : probability_catalog()) {
    double s = 0;
    for (double p : v.pi) {
      EXPECT_GT(p, 0.0);
      s += p;
    }
    EXPECT_NEAR(s, 1.0, 1e-12) << v.id;
    EXPECT_EQ(v.pi.size(), v.categories);
    EXPECT_TRUE(ids.insert(v.id).second);
  }
  EXPECT_EQ(probability_catalog().size(), 32u);
}

TEST(Catalog, FullDesignIsFlaggedNotDropped) {
  const auto grid = scenario_catalog();
  EXPECT_EQ(grid.size(), 32u * 4 * 4 * 3);
  std::size_t sparse = 0;
  for (const auto& s : grid) sparse += s.sparse ? 1 : 0;
  EXPECT_GT(sparse, 0u);
}

namespace {
Scenario small_scenario() {
  Scenario s;
  s.id = "unit";
  s.K = 10;
  s.n = s.m = 50;
  s.phi = 5.0;
  s.pi_true = {0.25, 0.25, 0.5};
  s.n_iter = 12;
  s.methods = parse_methods({"pointwise", "bonferroni", "masr"}, {PriorChoice::Kind::HalfCauchy});
  s.settings.bootstrap_replicates = 200;
  s.seed = 3;
  return s;
}
}  // namespace

TEST(Simulation, SingleIterationIsIndicator) {
  auto s = small_scenario();
  s.n_iter = 1;
  const auto r = run_simulation(s);
  for (const auto& t : r.methods) {
    EXPECT_TRUE(t.coverage() == 0.0 || t.coverage() == 1.0);
    EXPECT_DOUBLE_EQ(t.mc_error(), 0.0);
  }
  EXPECT_NEAR(mc_error(0.95, 500), 1.96 * std::sqrt(0.95 * 0.05 / 500), 1e-15);
}

TEST(Simulation, ThreadInvariant) {
  const auto s = small_scenario();
  const auto a = run_simulation(s, 1);
  const auto b = run_simulation(s, 3);
  ASSERT_EQ(a.methods.size(), b.methods.size());
  for (std::size_t j = 0; j < a.methods.size(); ++j) {
    EXPECT_EQ(a.methods[j].contained, b.methods[j].contained);
    EXPECT_EQ(a.methods[j].below, b.methods[j].below);
    EXPECT_EQ(a.methods[j].above, b.methods[j].above);
    EXPECT_EQ(a.methods[j].multiplier_lower_sum, b.methods[j].multiplier_lower_sum);
  }
}

TEST(Simulation, BonferroniAtLeastPointwise) {
  const auto r = run_simulation(small_scenario());
  EXPECT_GE(r.methods[1].contained, r.methods[0].contained);
}

TEST(Simulation, ZeroCategoryFailuresAreCounted) {
  auto s = small_scenario();
  s.pi_true = {0.001, 0.499, 0.5};
  s.K = 2;
  s.n = s.m = 10;
  s.phi = 2.0;
  s.n_iter = 40;
  const auto r = run_simulation(s);
  EXPECT_GT(r.failed_iterations, 0u);
  EXPECT_TRUE(r.exceeded_failure_cap);
  EXPECT_EQ(r.methods[0].evaluated + r.failed_iterations, 40u);
}

TEST(TailBalance, ReferenceLevel) {
  const auto r = run_simulation(small_scenario());
  const auto rows = tail_balance(r);
  ASSERT_EQ(rows.size(), 3u * 3u);
  EXPECT_NEAR(rows[0].reference, 0.99167, 1e-5);
  for (const auto& row : rows) {
    EXPECT_GE(row.p_at_least_lower, 0.0);
    EXPECT_LE(row.p_at_most_upper, 1.0);
  }
}

TEST(ScenarioValidation, RejectsBadDispersion) {
  auto s = small_scenario();
  s.phi = 60.0;
  EXPECT_THROW(s.validate(), Error);
  s.phi = 1.0;
  EXPECT_THROW(s.validate(), Error);
}
