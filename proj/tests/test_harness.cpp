#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>

#include "mvpure/harness.hpp"
#include "oracles.hpp"

using namespace mvpure;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.m = 12;
  c.s = 40;
  c.l0 = 3;
  c.n_fixed_close = 2;
  c.runs = 3;
  c.snr_grid_db = {0.0, 10.0};
  c.samples_pre = 200;
  c.samples_post = 200;
  c.background_sources = 6;
  return c;
}

}  // namespace

TEST(RankSum, MidpOfSeparatedTriples) {
  const RankSumResult r = rank_sum_test({5, 6, 7}, {1, 2, 3});
  EXPECT_TRUE(r.exact);
  EXPECT_DOUBLE_EQ(r.u, 9.0);
  // one of C(6,3) = 20 assignments reaches the observed sum: mid-p = 0.5/20
  EXPECT_DOUBLE_EQ(r.p_value, 0.025);
  EXPECT_LT(r.p_value, 0.05);
  EXPECT_DOUBLE_EQ(rank_sum_test({1, 2, 3}, {5, 6, 7}).p_value, 0.975);
}

TEST(RankSum, IdenticalSamplesGiveOneHalf) {
  EXPECT_DOUBLE_EQ(rank_sum_test({1, 2, 3}, {1, 2, 3}).p_value, 0.5);
  std::vector<double> big(30);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<double>(i % 7);
  EXPECT_NEAR(rank_sum_test(big, big).p_value, 0.5, 1e-15);
}

TEST(RankSum, AllTiedIsFlagged) {
  const RankSumResult r = rank_sum_test({2, 2}, {2, 2, 2});
  EXPECT_TRUE(r.all_tied);
  EXPECT_DOUBLE_EQ(r.p_value, 0.5);
}

TEST(RankSum, ExactBranchMatchesEnumeration) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> v(0, 5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t na = 1 + trial % 7, nb = 2 + (trial * 3) % 9;
    std::vector<double> a(na), b(nb);
    for (double& x : a) x = v(rng) + 1.0;
    for (double& x : b) x = v(rng);
    const RankSumResult r = rank_sum_test(a, b);
    if (r.all_tied) continue;
    EXPECT_TRUE(r.exact);
    EXPECT_NEAR(r.p_value, oracle::rank_sum_midp_enumerated(a, b), 1e-12) << "trial " << trial;
  }
}

TEST(RankSum, LargeSamplesUseTieCorrectedNormal) {
  std::vector<double> a, b;
  for (int i = 0; i < 12; ++i) {
    a.push_back(i / 2 + 3);
    b.push_back(i / 3);
  }
  const RankSumResult r = rank_sum_test(a, b);
  EXPECT_FALSE(r.exact);
  // independent route: U from pair counts, variance from tie groups
  double u = 0;
  for (double x : a)
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::map<double, int> groups;
  for (double x : pooled) ++groups[x];
  double tie = 0;
  for (auto [val, t] : groups) tie += static_cast<double>(t) * t * t - t;
  const double n = 24.0;
  const double var = 144.0 / 12.0 * ((n + 1) - tie / (n * (n - 1)));
  const double z = (u - 72.0) / std::sqrt(var);
  EXPECT_DOUBLE_EQ(r.u, u);
  EXPECT_NEAR(r.p_value, boost::math::cdf(boost::math::complement(boost::math::normal(), z)), 1e-12);
}

TEST(RankSum, RejectsEmptyOrNonFinite) {
  EXPECT_THROW(rank_sum_test({}, {1.0}), ContractError);
  EXPECT_THROW(rank_sum_test({std::nan("")}, {1.0}), ContractError);
}

TEST(Aggregate, SummaryOfTwoValues) {
  const ErrorSummary s = summarize({1.0, 3.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(s.median, 2.0);
  EXPECT_EQ(s.n, 2u);
  EXPECT_DOUBLE_EQ(summarize({4.0}).std, 0.0);
  EXPECT_THROW(summarize({}), ContractError);
}

TEST(Aggregate, LastTwoKeepsFinalIterations) {
  std::vector<ErrorRow> rows;
  for (Index it = 1; it <= 4; ++it) rows.push_back({0, 0.0, IndexFamily::MAI, it, 10.0 * it});
  rows.push_back({1, 0.0, IndexFamily::MAI, 3, 5.0});
  rows.push_back({0, 5.0, IndexFamily::MAI, 4, 99.0});
  const auto e = select_errors(rows, IndexFamily::MAI, 0.0, ErrorScope::LastTwo);
  EXPECT_EQ(e, (std::vector<double>{30.0, 40.0, 5.0}));
  EXPECT_EQ(select_errors(rows, IndexFamily::MAI, 0.0, ErrorScope::AllIterations).size(), 5u);
  const auto agg = aggregate_rows(rows, ErrorScope::AllIterations);
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_DOUBLE_EQ(agg[0].mean, (10 + 20 + 30 + 40 + 5) / 5.0);
}

TEST(Aggregate, PValueTablePoolsAcrossRuns) {
  std::vector<ErrorRow> rows;
  for (Index run = 0; run < 3; ++run)
    for (Index it = 1; it <= 2; ++it) {
      rows.push_back({run, 0.0, IndexFamily::MAI, it, 20.0 + run + it});
      rows.push_back({run, 0.0, IndexFamily::MAI_RR_I, it, 1.0 * run});
    }
  const auto table = pvalue_table(rows);
  ASSERT_EQ(table.size(), 2u);  // one pair, two scopes
  EXPECT_EQ(table[0].n_a, 6u);
  EXPECT_LT(table[0].test.p_value, 0.01);
}

TEST(Experiment, DeterministicAndIndependentOfJobs) {
  const ExperimentConfig cfg = small_config();
  const auto a = run_experiment(cfg, 1);
  const auto b = run_experiment(cfg, 3);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_TRUE(a[k].error.empty()) << a[k].error;
    EXPECT_EQ(a[k].theta0, b[k].theta0);
    EXPECT_EQ(a[k].r_selected, b[k].r_selected);
    ASSERT_EQ(a[k].results.size(), kAllFamilies.size());
    for (std::size_t f = 0; f < a[k].results.size(); ++f) {
      EXPECT_EQ(a[k].results[f].result.found, b[k].results[f].result.found);
      EXPECT_EQ(a[k].results[f].result.errors_mm, b[k].results[f].result.errors_mm);
    }
  }
}

TEST(Experiment, RunsShareFixedClusterAndHitTargetSnr) {
  const ExperimentConfig cfg = small_config();
  const ExperimentSetup setup = make_setup(cfg);
  ASSERT_EQ(setup.fixed_close.size(), 2u);
  for (Index run = 0; run < 3; ++run) {
    const auto seed = run_seed(cfg, 0, run);
    const auto theta0 = draw_sources(cfg, setup, seed);
    EXPECT_EQ(theta0[0], setup.fixed_close[0]);
    EXPECT_EQ(std::set<Index>(theta0.begin(), theta0.end()).size(), 3u);
    const Recording rec = simulate_run_recording(cfg, setup, 10.0, seed);
    EXPECT_NEAR(rec.signal.norm() / (rec.post - rec.signal).norm(), std::sqrt(10.0), 1e-9);
  }
}

TEST(Experiment, ExactModeRecoversSourcesAtHighSnr) {
  ExperimentConfig cfg = small_config();
  cfg.exact_covariances = true;
  cfg.coherence = 0.5;
  cfg.snr_grid_db = {20.0};
  cfg.indices = {IndexFamily::MAI};
  const auto recs = run_experiment(cfg, 1);
  for (const RunRecord& r : recs) {
    ASSERT_TRUE(r.error.empty()) << r.error;
    for (double e : r.results[0].result.errors_mm) EXPECT_DOUBLE_EQ(e, 0.0);
  }
}

TEST(Experiment, RankHistogramCountsEveryRun) {
  const auto recs = run_experiment(small_config(), 1);
  const RankHistogram h = rank_histogram(recs);
  ASSERT_EQ(h.size(), 2u);
  for (const auto& [snr, counts] : h) {
    Index total = 0;
    for (auto [rank, n] : counts) {
      EXPECT_GE(rank, 1);
      EXPECT_LE(rank, 3);
      total += n;
    }
    EXPECT_EQ(total, 3);
  }
}

TEST(Experiment, ConfigValidation) {
  ExperimentConfig c = small_config();
  c.l0 = 12;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.n_fixed_close = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.background_sources = 38;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.delta = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
