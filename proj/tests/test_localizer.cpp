#include <gtest/gtest.h>

#include <set>

#include "mvpure/localizer.hpp"
#include "oracles.hpp"

using namespace mvpure;

namespace {

// Exact covariances for θ0 on a small dictionary with uncorrelated unit sources.
struct Scene {
  LeadfieldSet set;
  std::vector<Index> theta0;
  Matrix r, n;
};

Scene scene(Index m, Index s, std::vector<Index> theta0, double noise, std::uint64_t seed, double coherence = 0.0) {
  Scene sc;
  sc.set = generate_leadfields(m, s, coherence, seed);
  sc.theta0 = std::move(theta0);
  const Matrix h0 = select_leadfield(sc.set, sc.theta0);
  sc.n = noise * Matrix::Identity(m, m);
  sc.r = h0 * h0.transpose() + sc.n;
  return sc;
}

double oracle_mai(const Scene& sc, const std::vector<Index>& theta) {
  return oracle::mai(oracle::columns(sc.set.columns(), theta), sc.r, sc.n);
}

}  // namespace

TEST(SelectRank, WorkedExamples) {
  const Vector ev = Eigen::Vector3d(8.0, 3.0, 1.0);
  EXPECT_EQ(select_rank_from_eigenvalues(ev, 3, 0.8), 2);  // 8/12 ≤ 0.8 < 11/12
  EXPECT_EQ(select_rank_from_eigenvalues(ev, 3, 0.5), 1);
  EXPECT_EQ(select_rank_from_eigenvalues(ev, 3, 1.0), 3);
  EXPECT_EQ(select_rank_from_eigenvalues(ev, 1, 0.8), 1);
}

TEST(SelectRank, ThresholdIsStrict) {
  const Vector ev = Eigen::Vector2d(4.0, 1.0);
  EXPECT_EQ(select_rank_from_eigenvalues(ev, 2, 0.8), 2);
  EXPECT_EQ(select_rank_from_eigenvalues(ev, 2, 0.79), 1);
}

TEST(SelectRank, Preconditions) {
  const Vector ev = Eigen::Vector2d(4.0, 1.0);
  EXPECT_THROW(select_rank_from_eigenvalues(ev, 3, 0.8), ContractError);
  EXPECT_THROW(select_rank_from_eigenvalues(ev, 0, 0.8), ContractError);
  EXPECT_THROW(select_rank_from_eigenvalues(ev, 2, 0.0), ContractError);
  EXPECT_THROW(select_rank_from_eigenvalues(ev, 2, 1.5), ContractError);
}

TEST(SelectRank, UsesSpectrumOfRNInverse) {
  // N = 2I, R = diag(18, 4, 2, 2): R N⁻¹ has eigenvalues 9, 2, 1, 1.
  Matrix r = Vector(Eigen::Vector4d(18.0, 4.0, 2.0, 2.0)).asDiagonal();
  const Matrix n = 2.0 * Matrix::Identity(4, 4);
  const Vector ev = rn_eigenvalues(r, n);
  EXPECT_NEAR(ev[0], 9.0, 1e-12);
  EXPECT_NEAR(ev[3], 1.0, 1e-12);
  EXPECT_EQ(select_rank(r, n, 2, 0.8), 1);   // 9/11 > 0.8
  EXPECT_EQ(select_rank(r, n, 3, 0.8), 2);   // 9/12 ≤ 0.8 < 11/12
}

TEST(Localize, GreedyMatchesStepwiseBruteForce) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const Scene sc = scene(10, 12, {2, 7, 9}, 0.5, seed, 0.6);
    LocalizationConfig cfg;
    cfg.l0 = 3;
    cfg.rank = 3;
    const LocalizationResult res = localize(cfg, sc.r, sc.n, sc.set);
    std::vector<Index> prefix;
    for (Index l = 0; l < 3; ++l) {
      double best = -1e300;
      Index arg = -1;
      for (Index i = 0; i < 12; ++i) {
        if (std::find(prefix.begin(), prefix.end(), i) != prefix.end()) continue;
        std::vector<Index> t = prefix;
        t.push_back(i);
        const double v = oracle_mai(sc, t);
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      ASSERT_EQ(res.found[static_cast<std::size_t>(l)], arg) << "seed " << seed << " iteration " << l + 1;
      EXPECT_LT(oracle::rel(res.index_trace[static_cast<std::size_t>(l)], best), 1e-9);
      prefix.push_back(arg);
    }
  }
}

TEST(Localize, RecoversWellSeparatedSourcesLikeExhaustiveSearch) {
  const Scene sc = scene(16, 12, {3, 10}, 0.01, 5);
  double best = -1e300;
  std::set<Index> arg;
  int pairs = 0;
  oracle::for_each_subset(12, 2, [&](const std::vector<Eigen::Index>& t) {
    ++pairs;
    const double v = oracle_mai(sc, t);
    if (v > best) {
      best = v;
      arg = {t[0], t[1]};
    }
  });
  EXPECT_EQ(pairs, 66);
  LocalizationConfig cfg;
  cfg.l0 = 2;
  cfg.rank = 2;
  const LocalizationResult res = localize(cfg, sc.r, sc.n, sc.set);
  EXPECT_EQ(std::set<Index>(res.found.begin(), res.found.end()), arg);
  EXPECT_EQ(arg, (std::set<Index>{3, 10}));
}

TEST(Localize, EvaluationCountShrinksWithExclusion) {
  const Scene sc = scene(12, 20, {1, 5, 9, 15}, 0.5, 2);
  LocalizationConfig cfg;
  cfg.l0 = 4;
  cfg.family = IndexFamily::MPZ_RR_I;
  const LocalizationResult res = localize(cfg, sc.r, sc.n, sc.set);
  ASSERT_EQ(res.evaluations.size(), 4u);
  for (Index l = 1; l <= 4; ++l) EXPECT_EQ(res.evaluations[static_cast<std::size_t>(l - 1)], 20 - (l - 1));
  EXPECT_EQ(std::set<Index>(res.found.begin(), res.found.end()).size(), 4u);
  EXPECT_GE(res.r_used, 1);
  EXPECT_LE(res.r_used, 4);
}

TEST(Localize, TiesGoToLowestIndex) {
  Matrix cols = Matrix::Zero(4, 3);
  cols(0, 0) = 1.0;
  cols(1, 1) = 1.0;
  cols(1, 2) = 1.0;  // candidate 2 duplicates candidate 1
  const LeadfieldSet set =
      LeadfieldSet::create(cols, {Position(0, 0, 0), Position(0.5, 0, 0), Position(0, 0.5, 0)});
  Matrix r = Matrix::Identity(4, 4);
  r(1, 1) = 5.0;
  LocalizationConfig cfg;
  cfg.l0 = 1;
  cfg.rank = 1;
  const LocalizationResult res = localize(cfg, r, Matrix::Identity(4, 4), set);
  EXPECT_EQ(res.found[0], 1);
  EXPECT_EQ(res.ties, 1);
}

TEST(Localize, RankSelectedFromDeltaWhenNotFixed) {
  const Scene sc = scene(12, 20, {1, 5, 9}, 0.5, 3);
  LocalizationConfig cfg;
  cfg.l0 = 3;
  cfg.delta = 1.0;
  EXPECT_EQ(localize(cfg, sc.r, sc.n, sc.set).r_used, 3);
  cfg.delta = 0.8;
  EXPECT_EQ(localize(cfg, sc.r, sc.n, sc.set).r_used, select_rank(sc.r, sc.n, 3, 0.8));
}

TEST(Localize, ConfigValidation) {
  const Scene sc = scene(6, 8, {1}, 0.5, 1);
  LocalizationConfig cfg;
  cfg.l0 = 0;
  EXPECT_THROW(localize(cfg, sc.r, sc.n, sc.set), ContractError);
  cfg.l0 = 1;
  cfg.rank = 0;
  EXPECT_THROW(localize(cfg, sc.r, sc.n, sc.set), ContractError);
  cfg.rank = 1;
  EXPECT_THROW(localize(cfg, sc.r, sc.n, sc.set, Matrix(Matrix::Identity(3, 3))), ContractError);
}

TEST(SourceCount, SaturatesAtTrueCount) {
  const Scene sc = scene(16, 30, {2, 11, 23}, 0.1, 8);
  const SourceCountEstimate est = estimate_source_count(sc.r, sc.n, sc.set, 6, 1e-6);
  EXPECT_TRUE(est.plateau_found);
  EXPECT_EQ(est.l0, 3);
  EXPECT_EQ(est.trace.size(), 6u);
  EXPECT_NEAR(est.trace[5], est.trace[2], 1e-9 * est.trace[2]);
}

TEST(SourceCount, NoSignalIsNearZero) {
  const LeadfieldSet set = generate_leadfields(8, 10, 0.0, 1);
  const Matrix n = Matrix::Identity(8, 8);
  const SourceCountEstimate est = estimate_source_count(n, n, set, 3, 1e-6);
  EXPECT_TRUE(est.near_zero);
  EXPECT_EQ(est.l0, 1);
  EXPECT_THROW(estimate_source_count(n, n, set, 3, 1e-6, IndexFamily::MAI_EXT), ContractError);
}

TEST(Chebyshev, MaxCoordinateDistanceToNearestTruth) {
  const std::vector<Position> truth = {Position(3, -4, 1), Position(10, 0, 0)};
  EXPECT_DOUBLE_EQ(chebyshev_error(Position(0, 0, 0), truth), 4.0);
  EXPECT_DOUBLE_EQ(chebyshev_error(Position(10, 0.5, 0), truth), 0.5);
  EXPECT_DOUBLE_EQ(chebyshev_error(Position(3, -4, 1), truth), 0.0);
  EXPECT_THROW(chebyshev_error(Position(0, 0, 0), {}), ContractError);
}
