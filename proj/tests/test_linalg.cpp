#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mgptq;
using testutil::random_matrix;
using testutil::random_spd;
using testutil::rel_frob;

namespace {

Matrix<double> triple_loop(const Matrix<double>& a, const Matrix<double>& b) {
  Matrix<double> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix<double> b{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(Matrix<double>::identity(2), b), b);
}

TEST(Matmul, RowTimesColumn) {
  const Matrix<double> a{{1, 2}};
  const Matrix<double> b{{3}, {4}};
  const auto c = matmul(a, b);
  ASSERT_EQ(c.rows(), 1u);
  ASSERT_EQ(c.cols(), 1u);
  EXPECT_EQ(c(0, 0), 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_matrix(5, 4, seed);
    const auto b = random_matrix(4, 3, seed + 100);
    const auto c = matmul(a, b);
    const auto ref = triple_loop(a, b);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c.data()[i], ref.data()[i], 1e-12);
  }
}

TEST(Matmul, TransposedVariantsAgree) {
  const auto a = random_matrix(6, 5, 1);
  const auto b = random_matrix(6, 4, 2);
  const auto c = random_matrix(3, 5, 3);
  EXPECT_LT(rel_frob(matmul_at_b(a, b), triple_loop(a.transposed(), b)), 1e-14);
  EXPECT_LT(rel_frob(matmul_a_bt(a, c), triple_loop(a, c.transposed())), 1e-14);
}

TEST(Matmul, BlockedKernelEqualsAscendingTripleLoop) {
  // Shapes straddle the register tile and k-block edges.
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 48, 9}, {9, 50, 300}, {13, 17, 257}, {64, 97, 64}};
  std::uint64_t seed = 0;
  for (const auto& s : shapes) {
    const auto a = random_matrix(s[0], s[2], ++seed);
    const auto b = random_matrix(s[2], s[1], ++seed);
    EXPECT_EQ(matmul(a, b), triple_loop(a, b)) << s[0] << "x" << s[2] << " * " << s[2] << "x" << s[1];
    const auto af = Matrix<float>::cast(a), bf = Matrix<float>::cast(b);
    EXPECT_LT(rel_frob(matmul(af, bf), Matrix<float>::cast(triple_loop(a, b))), 1e-5);
  }
}

TEST(Matmul, TriangularLeftOperands) {
  for (std::size_t n : {2u, 5u, 33u, 130u}) {
    const auto spd = random_spd(n, n);
    const auto b = random_matrix(n, 21, n + 1);
    for (auto o : {Orientation::lower, Orientation::upper}) {
      const auto t = cholesky(spd, o).full();
      EXPECT_EQ(matmul(t, b), triple_loop(t, b)) << n;
    }
  }
}

TEST(Matmul, DimensionMismatchNamesBothShapes) {
  const Matrix<double> a(2, 3), b(2, 2);
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2x2"), std::string::npos) << msg;
  }
}

TEST(Matmul, Associativity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_matrix(7, 5, seed);
    const auto b = random_matrix(5, 6, seed + 1000);
    const auto c = random_matrix(6, 4, seed + 2000);
    EXPECT_LT(rel_frob(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-10);
  }
}

TEST(Matmul, NonFiniteResultIsNumericError) {
  const Matrix<double> a{{1e308, 1e308}};
  const Matrix<double> b{{10.0}, {10.0}};
  EXPECT_THROW(matmul(a, b), NumericError);
}

TEST(Cholesky, ScaledIdentity) {
  const auto t = cholesky(Matrix<double>::identity(3, 0.5), Orientation::lower);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(t(i, j), i == j ? 0.70710678118654752 : 0.0, 1e-15);
}

TEST(Cholesky, HandComputedTwoByTwo) {
  const Matrix<double> a{{4, 2}, {2, 3}};
  const auto l = cholesky(a, Orientation::lower);
  EXPECT_DOUBLE_EQ(l(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(l(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(l(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(l(1, 1), std::sqrt(2.0));
  EXPECT_LT(rel_frob(matmul_a_bt(l.full(), l.full()), a), 1e-15);
}

TEST(Cholesky, IndefiniteReportsPivot) {
  const Matrix<double> a{{1, 2}, {2, 1}};
  try {
    cholesky(a);
    FAIL() << "expected NotPositiveDefinite";
  } catch (const NotPositiveDefinite& e) {
    EXPECT_EQ(e.pivot(), 1u);
    EXPECT_EQ(e.exit_code(), 4);
  }
}

TEST(Cholesky, UpperOrientation) {
  const auto a = random_spd(12, 5);
  const auto u = cholesky(a, Orientation::upper);
  EXPECT_EQ(u.orientation(), Orientation::upper);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(u(i, j), 0.0);
  EXPECT_LT(rel_frob(matmul_at_b(u.full(), u.full()), a), 1e-12);
}

TEST(Cholesky, ReconstructionOverSeededInstances) {
  std::mt19937_64 rng(42);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t n = 1 + rng() % 64;
    const auto a = random_spd(n, seed);
    const auto l = cholesky(a, Orientation::lower);
    EXPECT_LT(rel_frob(matmul_a_bt(l.full(), l.full()), a), 1e-8) << "seed " << seed;
  }
}

TEST(Cholesky, RejectsAsymmetricInput) {
  Matrix<double> a{{2, 1}, {0, 2}};
  EXPECT_THROW(cholesky(a), ValidationError);
}

TEST(Cholesky, SymmetrizesSmallDrift) {
  Matrix<double> a{{4, 2 + 1e-12}, {2, 3}};
  EXPECT_NO_THROW(cholesky(a));
}

TEST(Cholesky, FloatPrecision) {
  const auto a = Matrix<float>::cast(random_spd(16, 9, 1.0));
  const auto l = cholesky(a, Orientation::lower);
  EXPECT_LT(rel_frob(matmul_a_bt(l.full(), l.full()), a), 1e-5);
}

TEST(TriangularMatrixType, ValidatesStructure) {
  EXPECT_THROW(TriangularMatrix<double>(Matrix<double>{{1, 1}, {0, 1}}, Orientation::lower), ValidationError);
  EXPECT_THROW(TriangularMatrix<double>(Matrix<double>{{1, 0}, {0, 0}}, Orientation::lower), ValidationError);
  EXPECT_NO_THROW(TriangularMatrix<double>(Matrix<double>{{1, 1}, {0, 1}}, Orientation::upper));
  const TriangularMatrix<double> u(Matrix<double>{{1, 3}, {0, 2}}, Orientation::upper);
  const auto l = u.transposed();
  EXPECT_EQ(l.orientation(), Orientation::lower);
  EXPECT_EQ(l(1, 0), 3.0);
}

TEST(TriangularSolve, BothOrientations) {
  const auto a = random_spd(10, 3);
  const auto b = random_matrix(10, 3, 4);
  for (auto o : {Orientation::lower, Orientation::upper}) {
    const auto t = cholesky(a, o);
    const auto x = triangular_solve(t, b);
    EXPECT_LT(rel_frob(matmul(t.full(), x), b), 1e-12);
  }
}

TEST(SpdInverse, ScaledIdentity) {
  const auto inv = spd_inverse(Matrix<double>::identity(4, 2.0));
  const auto expected = Matrix<double>::identity(4, 0.5);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(inv.data()[i], expected.data()[i], 1e-15);
}

TEST(SpdInverse, ClosedFormTwoByTwo) {
  const auto inv = spd_inverse(Matrix<double>{{4, 2}, {2, 3}});
  const Matrix<double> expected{{0.375, -0.25}, {-0.25, 0.5}};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(inv.data()[i], expected.data()[i], 1e-15);
}

TEST(SpdInverse, ResidualAndSymmetry) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = random_matrix(8, 8, seed);
    auto a = matmul_at_b(x, x);
    for (std::size_t i = 0; i < 8; ++i) a(i, i) += 1e-2;
    const auto inv = spd_inverse(a);
    EXPECT_LT(rel_frob(matmul(a, inv), Matrix<double>::identity(8)), 1e-6);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(inv(i, j), inv(j, i));
  }
}

TEST(SpdInverse, PropagatesNotPositiveDefinite) {
  EXPECT_THROW(spd_inverse(Matrix<double>{{1, 2}, {2, 1}}), NotPositiveDefinite);
}

TEST(Linalg, PureAndBitReproducible) {
  const auto a = random_spd(24, 11);
  const auto b = random_matrix(24, 7, 12);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
  EXPECT_EQ(cholesky(a).full(), cholesky(a).full());
  EXPECT_EQ(spd_inverse(a), spd_inverse(a));
}
