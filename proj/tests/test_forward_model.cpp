#include <gtest/gtest.h>

#include <sstream>

#include "mvpure/forward_model.hpp"
#include "oracles.hpp"

using namespace mvpure;

TEST(Leadfields, ShapeUnitColumnsInsideSphere) {
  const LeadfieldSet set = generate_leadfields(32, 300, 0.9, 1);
  EXPECT_EQ(set.m(), 32);
  EXPECT_EQ(set.s(), 300);
  for (Index j = 0; j < set.s(); ++j) {
    EXPECT_NEAR(set.columns().col(j).norm(), 1.0, 1e-12);
    EXPECT_LE(set.positions()[j].norm(), 1.0 + 1e-12);
  }
}

TEST(Leadfields, DeterministicPerSeed) {
  const LeadfieldSet a = generate_leadfields(16, 50, 0.9, 42);
  const LeadfieldSet b = generate_leadfields(16, 50, 0.9, 42);
  const LeadfieldSet c = generate_leadfields(16, 50, 0.9, 43);
  EXPECT_EQ(a.columns(), b.columns());
  EXPECT_NE(a.columns(), c.columns());
}

TEST(Leadfields, CosinesApproachKernelGram) {
  // Columns are Z K with Z i.i.d., so E[cᵢᵀcⱼ] ∝ (K²)ᵢⱼ; many sensors concentrate the cosine there.
  const Index s = 60;
  const LeadfieldSet set = generate_leadfields(4000, s, 0.9, 7);
  const double sigma = kernel_width_for(0.9, leadfield_grid_spacing(s));
  Matrix k(s, s);
  for (Index i = 0; i < s; ++i)
    for (Index j = 0; j < s; ++j)
      k(i, j) = std::exp(-(set.positions()[i] - set.positions()[j]).squaredNorm() / (2 * sigma * sigma));
  const Matrix k2 = k * k;
  const Vector d = k2.diagonal().cwiseSqrt().cwiseInverse();
  const Matrix want = d.asDiagonal() * k2 * d.asDiagonal();
  const Matrix got = set.columns().transpose() * set.columns();
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 0.06);
}

TEST(Leadfields, AdjacentCandidatesAreHighlyCoherent) {
  const LeadfieldSet set = generate_leadfields(2000, 120, 0.9, 7);
  const double d = leadfield_grid_spacing(120);
  double acc = 0.0;
  int n = 0;
  for (Index i = 0; i < set.s(); ++i)
    for (Index j = i + 1; j < set.s(); ++j)
      if (std::abs((set.positions()[i] - set.positions()[j]).norm() - d) < 1e-9) {
        acc += set.columns().col(i).dot(set.columns().col(j));
        ++n;
      }
  ASSERT_GT(n, 0);
  EXPECT_GT(acc / n, 0.85);
}

TEST(Leadfields, ZeroCoherenceIsNearlyOrthogonalForLargeM) {
  const LeadfieldSet set = generate_leadfields(4000, 10, 0.0, 3);
  const Matrix gram = set.columns().transpose() * set.columns();
  EXPECT_LT((gram - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Leadfields, KernelWidth) {
  EXPECT_DOUBLE_EQ(kernel_width_for(0.0, 1.0), 0.0);
  const double sigma = kernel_width_for(0.9, 0.2);
  EXPECT_NEAR(std::exp(-0.04 / (4 * sigma * sigma)), 0.9, 1e-12);
}

TEST(Leadfields, InvalidArguments) {
  EXPECT_THROW(generate_leadfields(0, 10, 0.5, 1), ContractError);
  EXPECT_THROW(generate_leadfields(8, 10, 1.0, 1), ContractError);
  EXPECT_THROW(generate_leadfields(8, 10, 0.5, 1, GridSpec{0.0}), ContractError);
}

TEST(LeadfieldSet, RejectsCoincidentPositionsAndZeroColumns) {
  Matrix cols = Matrix::Identity(3, 2);
  EXPECT_THROW(LeadfieldSet::create(cols, {Position(0, 0, 0), Position(0, 0, 0)}), ContractError);
  EXPECT_THROW(LeadfieldSet::create(cols, {Position(0, 0, 0)}), ContractError);
  cols.col(1).setZero();
  EXPECT_THROW(LeadfieldSet::create(cols, {Position(0, 0, 0), Position(1, 0, 0)}), ContractError);
}

TEST(SelectLeadfield, OrderDuplicatesRange) {
  const LeadfieldSet set = generate_leadfields(8, 20, 0.5, 1);
  const Matrix h = select_leadfield(set, {5, 2});
  EXPECT_EQ(h.col(0), set.columns().col(5));
  EXPECT_EQ(h.col(1), set.columns().col(2));
  EXPECT_THROW(select_leadfield(set, {1, 1}), ContractError);
  EXPECT_THROW(select_leadfield(set, {20}), ContractError);
  EXPECT_THROW(select_leadfield(set, {-1}), ContractError);
}

TEST(SourceCovariance, StructureAndPositivity) {
  const Vector p = Eigen::Vector3d(1.0, 4.0, 9.0);
  const Matrix q = make_source_covariance(p, Matrix::Ones(3, 3), 0.5);
  EXPECT_DOUBLE_EQ(q(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(q(1, 1), 4.0);
  EXPECT_DOUBLE_EQ(q(0, 1), 0.5 * 1.0 * 2.0);
  EXPECT_DOUBLE_EQ(q(1, 2), 0.5 * 2.0 * 3.0);
  const Matrix qi = make_source_covariance(p, Matrix::Identity(3, 3), 0.9);
  EXPECT_DOUBLE_EQ(qi(0, 1), 0.0);
  // all-ones mask with correlation 1 is singular
  EXPECT_THROW(make_source_covariance(Vector::Ones(3), Matrix::Ones(3, 3), 1.0), ContractError);
  EXPECT_THROW(make_source_covariance(Vector::Ones(2), Matrix::Ones(3, 3), 0.1), ContractError);
}

TEST(Covariances, AssembleMatchesDefinition) {
  std::mt19937_64 rng(5);
  const Matrix h0 = oracle::random_gaussian(10, 3, rng);
  const Matrix q = oracle::random_spd(3, 0.5, 1.0, rng);
  const Matrix n = oracle::random_spd(10, 0.5, 1.0, rng);
  const CovariancePair pair = assemble_covariances(h0, q, n);
  EXPECT_LT(oracle::rel(pair.R, Matrix(h0 * q * h0.transpose() + n)), 1e-13);
  EXPECT_EQ(pair.R, pair.R.transpose());
  EXPECT_EQ(pair.provenance, Provenance::Exact);
}

TEST(SourceModel, ValidatesShapesAndDefiniteness) {
  const LeadfieldSet set = generate_leadfields(8, 20, 0.5, 1);
  const Matrix q = Matrix::Identity(2, 2);
  const Matrix n = Matrix::Identity(8, 8);
  const SourceModel mdl = SourceModel::create(set, {3, 7}, q, n);
  EXPECT_EQ(mdl.l0(), 2);
  EXPECT_EQ(mdl.H0().col(1), set.columns().col(7));
  EXPECT_THROW(SourceModel::create(set, {3, 7}, Matrix::Identity(3, 3), n), ContractError);
  Matrix bad = -Matrix::Identity(2, 2);
  EXPECT_THROW(SourceModel::create(set, {3, 7}, bad, n), ContractError);
  EXPECT_THROW(SourceModel::create(set, {3, 7}, q, Matrix::Zero(8, 8)), ContractError);
}

TEST(LeadfieldCsv, RoundTripsExactly) {
  const LeadfieldSet set = generate_leadfields(6, 15, 0.8, 9);
  std::stringstream ss;
  write_leadfields(ss, set);
  const LeadfieldSet back = read_leadfields(ss);
  EXPECT_EQ(back.columns(), set.columns());
  for (Index j = 0; j < set.s(); ++j) EXPECT_EQ(back.positions()[j], set.positions()[j]);
}

TEST(LeadfieldCsv, MalformedInputIsConfigError) {
  std::stringstream bad1("not-a-header\n");
  EXPECT_THROW(read_leadfields(bad1), ConfigError);
  std::stringstream bad2("mvpure-leadfield,1\n2,1\n0,0,0\n1\nx\n");
  EXPECT_THROW(read_leadfields(bad2), ConfigError);
  std::stringstream truncated("mvpure-leadfield,1\n2,2\n0,0,0\n");
  EXPECT_THROW(read_leadfields(truncated), ConfigError);
}
