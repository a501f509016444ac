#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "cmlab/matcore.hpp"
#include "oracles.hpp"

using namespace cmlab;

namespace {

SymMatrix random_symmetric(std::size_t n, RandomSource& rng) {
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m.set(i, j, rng.normal());
  return m;
}

RotationEvent random_event(std::size_t n, RandomSource& rng) {
  std::size_t i = rng.index(n), j = rng.index(n - 1);
  if (j >= i) ++j;
  if (i > j) std::swap(i, j);
  return {i, j, std::numbers::pi - 2.0 * std::numbers::pi * rng.uniform()};
}

}  // namespace

TEST(Jacobi, Identity) {
  const auto s = jacobi_eigenvalues(SymMatrix::identity(2));
  EXPECT_EQ(s.values, (std::vector<double>{1.0, 1.0}));
}

TEST(Jacobi, DiagonalIsSorted) {
  const std::vector<double> d{3.0, 1.0};
  EXPECT_EQ(jacobi_eigenvalues(SymMatrix::diagonal(d)).values, (std::vector<double>{1.0, 3.0}));
}

TEST(Jacobi, TwoByTwo) {
  // det([[2-x,1],[1,2-x]]) = (x-1)(x-3)
  const auto s = jacobi_eigenvalues(SymMatrix{{2, 1}, {1, 2}});
  EXPECT_NEAR(s.values[0], 1.0, 1e-14);
  EXPECT_NEAR(s.values[1], 3.0, 1e-14);
}

TEST(Jacobi, RejectsNonFinite) {
  SymMatrix m(3);
  m.set(0, 1, std::nan(""));
  EXPECT_THROW(jacobi_eigenvalues(m), InvalidInput);
  m.set(0, 1, INFINITY);
  EXPECT_THROW(jacobi_eigenvalues(m), InvalidInput);
}

TEST(Jacobi, SweepCapExhaustedIsNumericError) {
  EXPECT_THROW(jacobi_eigenvalues(SymMatrix{{2, 1}, {1, 2}}, 1e-12, 0), NumericError);
  EXPECT_THROW(jacobi_eigenvalues(SymMatrix::identity(2), 0.0), InvalidInput);
}

TEST(Jacobi, TracePreserved) {
  RandomSource rng(11);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.index(30);
    const auto m = random_symmetric(n, rng);
    const auto s = jacobi_eigenvalues(m);
    ASSERT_EQ(s.size(), n);
    EXPECT_TRUE(std::is_sorted(s.values.begin(), s.values.end()));
    EXPECT_LE(std::abs(s.sum() - m.trace()), static_cast<double>(n) * 1e-9 * m.max_abs());
  }
}

TEST(Jacobi, MatchesBisectionOracle) {
  RandomSource rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto m = random_symmetric(5, rng);
    const auto got = jacobi_eigenvalues(m).values;
    const auto want = oracle::bisection_eigenvalues(m);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(got[i], want[i], 1e-7) << "trial " << t;
  }
}

TEST(Esd, Definition) {
  const auto f = build_esd(Spectrum{{1, 2, 3}});
  EXPECT_DOUBLE_EQ(f(2.0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(f(0.5), 0.0);
  EXPECT_DOUBLE_EQ(f(3.0), 1.0);
  EXPECT_DOUBLE_EQ(f.left_limit(3.0), 2.0 / 3.0);
  EXPECT_THROW(build_esd(Spectrum{}), InvalidInput);
}

TEST(Esd, IsValidCdf) {
  RandomSource rng(3);
  std::vector<double> vals(40);
  for (double& v : vals) v = rng.normal();
  const EsdStepFunction f(vals);
  std::vector<double> xs(1000);
  for (double& x : xs) x = rng.normal(0.0, 2.0);
  std::sort(xs.begin(), xs.end());
  double prev = 0.0;
  for (double x : xs) {
    const double v = f(x);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_GE(v, prev);
    prev = v;
  }
  EXPECT_EQ(f(1e300), 1.0);
}

TEST(Kolmogorov, HandExamples) {
  const EsdStepFunction a({0.0, 2.0});
  EXPECT_EQ(kolmogorov_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(kolmogorov_distance(EsdStepFunction({0.0}), EsdStepFunction({1.0})), 1.0);
  EXPECT_DOUBLE_EQ(kolmogorov_distance(a, EsdStepFunction({1.0, 2.0})), 0.5);
}

TEST(Kolmogorov, MatchesCountingOracleWithTies) {
  RandomSource rng(17);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> a(1 + rng.index(8)), b(1 + rng.index(8));
    for (double& v : a) v = static_cast<double>(rng.index(5));
    for (double& v : b) v = static_cast<double>(rng.index(5));
    EXPECT_NEAR(kolmogorov_distance(EsdStepFunction(a), EsdStepFunction(b)),
                oracle::sup_distance(a, b), 1e-15);
  }
}

TEST(Givens, ZeroAngleIsIdentity) {
  RandomSource rng(1);
  const auto h = random_symmetric(6, rng);
  EXPECT_EQ(apply_givens_conjugation(h, {1, 4, 0.0}), h);
}

TEST(Givens, QuarterTurnSwapsDiagonal) {
  const std::vector<double> d{1.0, 2.0};
  const auto out = apply_givens_conjugation(SymMatrix::diagonal(d), {0, 1, std::numbers::pi / 2});
  EXPECT_NEAR(out(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(out(1, 1), 1.0, 1e-15);
  EXPECT_NEAR(out(0, 1), 0.0, 1e-15);
}

TEST(Givens, RejectsBadIndices) {
  const auto h = SymMatrix::identity(3);
  EXPECT_THROW(apply_givens_conjugation(h, {1, 1, 0.3}), InvalidInput);
  EXPECT_THROW(apply_givens_conjugation(h, {0, 3, 0.3}), InvalidInput);
}

TEST(Givens, MatchesDenseProduct) {
  RandomSource rng(2);
  const std::size_t n = 5;
  const auto h = random_symmetric(n, rng);
  const RotationEvent e{1, 3, 0.77};
  DenseMatrix r = DenseMatrix::identity(n);
  r(1, 1) = std::cos(e.theta);
  r(3, 3) = std::cos(e.theta);
  r(1, 3) = std::sin(e.theta);
  r(3, 1) = -std::sin(e.theta);
  const auto want = conjugate(OrthogonalMatrix(r), h);
  const auto got = apply_givens_conjugation(h, e);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(got(i, j), want(i, j), 1e-13);
}

TEST(Givens, OnlyRowsAndColumnsIJChange) {
  RandomSource rng(4);
  const auto h = random_symmetric(7, rng);
  const RotationEvent e{2, 5, 1.1};
  const auto out = apply_givens_conjugation(h, e);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      if (i != 2 && i != 5 && j != 2 && j != 5) {
        EXPECT_EQ(out(i, j), h(i, j));
      }
}

TEST(Givens, SimilarityInvariance) {
  RandomSource rng(9);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.index(12);
    const auto h = random_symmetric(n, rng);
    const auto before = jacobi_eigenvalues(h).values;
    const auto after = jacobi_eigenvalues(apply_givens_conjugation(h, random_event(n, rng))).values;
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(before[i], after[i], 1e-9);
  }
}

TEST(TopLeftBlock, Examples) {
  EXPECT_EQ(top_left_block(SymMatrix::identity(4), 2), SymMatrix::identity(2));
  const SymMatrix h{{1, 2, 3}, {2, 4, 5}, {3, 5, 6}};
  EXPECT_EQ(top_left_block(h, 3), h);
  EXPECT_EQ(top_left_block(h, 2), (SymMatrix{{1, 2}, {2, 4}}));
  EXPECT_THROW(top_left_block(h, 0), InvalidInput);
  EXPECT_THROW(top_left_block(h, 4), InvalidInput);
}

TEST(Haar, OrderOne) {
  RandomSource rng(8);
  const auto o = haar_so_n(1, rng);
  EXPECT_EQ(o(0, 0), 1.0);
}

TEST(Haar, OrthogonalWithUnitDeterminant) {
  RandomSource rng(6);
  for (std::size_t n : {2, 3, 5, 10, 30, 60}) {
    for (int t = 0; t < 5; ++t) {
      const auto o = haar_so_n(n, rng);
      EXPECT_LE(orthogonality_residual(o.matrix()), 1e-10);
      EXPECT_NEAR(determinant(o.matrix()), 1.0, 1e-8);
    }
  }
}

TEST(Haar, SO2IsUniformAngle) {
  // O_11 = cos(theta) with theta uniform: E cos^2 = 1/2
  RandomSource rng(12);
  double s = 0.0;
  const int samples = 100000;
  for (int t = 0; t < samples; ++t) {
    const double c = haar_so_n(2, rng)(0, 0);
    s += c * c;
  }
  EXPECT_NEAR(s / samples, 0.5, 0.01);
}

TEST(Haar, CompressedConjugateMatchesFullProduct) {
  RandomSource rng(21);
  const auto g = random_symmetric(9, rng);
  const auto o = haar_so_n(9, rng);
  EXPECT_LE(std::abs(compressed_conjugate(o, g, 4)(1, 3) - conjugate(o, g)(1, 3)), 1e-12);
  const auto full = top_left_block(conjugate(o, g), 4);
  const auto fast = compressed_conjugate(o, g, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(full(i, j), fast(i, j), 1e-12);
}

// Rank-m perturbations move the ESD by at most m/k.
TEST(RankPerturbation, PlantedRankTrials) {
  RandomSource rng(2024);
  int violations = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 4 + rng.index(17);
    const std::size_t m = 1 + rng.index(3);
    const auto a = random_symmetric(k, rng);
    SymMatrix b = a;
    for (std::size_t r = 0; r < m; ++r) {
      std::vector<double> v(k);
      for (double& x : v) x = rng.normal();
      const double w = rng.normal(0.0, 3.0);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < k; ++j) b.set(i, j, b(i, j) + w * v[i] * v[j]);
    }
    const double d = kolmogorov_distance(build_esd(jacobi_eigenvalues(a)),
                                         build_esd(jacobi_eigenvalues(b)));
    if (d > static_cast<double>(m) / static_cast<double>(k) + 1e-12) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

// Refined cases for a Givens step on the compression: both indices inside
// the block gives a similar block; exactly one inside is a rank <= 2 change.
TEST(RankPerturbation, GivensStepOnCompression) {
  RandomSource rng(31);
  const std::size_t n = 10, k = 5;
  for (int t = 0; t < 100; ++t) {
    const auto h = random_symmetric(n, rng);
    const auto esd = build_esd(jacobi_eigenvalues(top_left_block(h, k)));
    const RotationEvent inside{rng.index(2), 2 + rng.index(3), rng.uniform() * 6.0};
    const auto in = jacobi_eigenvalues(top_left_block(apply_givens_conjugation(h, inside), k)).values;
    const auto base = jacobi_eigenvalues(top_left_block(h, k)).values;
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(in[i], base[i], 1e-9);
    const RotationEvent straddle{rng.index(k), k + rng.index(n - k), rng.uniform() * 6.0};
    const auto st = build_esd(jacobi_eigenvalues(top_left_block(apply_givens_conjugation(h, straddle), k)));
    EXPECT_LE(kolmogorov_distance(esd, st), 2.0 / k + 1e-12);
  }
}
