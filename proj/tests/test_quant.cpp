#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mgptq;
using testutil::on_grid;

namespace {

std::vector<double> deq(const QuantizedColumn& q) { return q.dequantize<double>(); }

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double binary_loss(std::span<const double> x, double alpha) {
  double s = 0.0;
  for (double v : x) {
    const double d = v - alpha * (v >= 0.0 ? 1.0 : -1.0);
    s += d * d;
  }
  return s;
}

double golden_section_min(std::span<const double> x, double lo, double hi) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  for (int it = 0; it < 200; ++it) {
    const double c = b - phi * (b - a), d = a + phi * (b - a);
    if (binary_loss(x, c) < binary_loss(x, d)) b = d;
    else a = c;
  }
  return (a + b) / 2.0;
}

}  // namespace

TEST(FitGrid, ValuesOnTwoBitGrid) {
  const std::vector<double> v{0, 1, 2, 3};
  const auto g = fit_grid(std::span<const double>(v), 2);
  EXPECT_DOUBLE_EQ(g.scale, 1.0);
  const auto q = quantize_rtn(std::span<const double>(v), g);
  EXPECT_EQ(deq(q), v);
}

TEST(FitGrid, ConstantVectorFallsBackToUnitScale) {
  const std::vector<double> v{5, 5, 5};
  for (int t = 2; t <= 4; ++t) {
    const auto g = fit_grid(std::span<const double>(v), t);
    EXPECT_EQ(g.scale, 1.0);
    const auto q = quantize_rtn(std::span<const double>(v), g);
    EXPECT_EQ(q.codes[0], q.codes[1]);
    EXPECT_EQ(q.codes[1], q.codes[2]);
    EXPECT_EQ(deq(q), v);
  }
}

TEST(FitGrid, OneBitTwoLevelGrid) {
  const std::vector<double> v{-1.0, 0.5};
  const auto g = fit_grid(std::span<const double>(v), 1);
  EXPECT_DOUBLE_EQ(g.dequant(0), -1.0);
  EXPECT_DOUBLE_EQ(g.dequant(1), 0.5);
}

TEST(FitGrid, CoversRange) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto v = random_values(33, seed);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    for (int t = 1; t <= 8; ++t) {
      const auto g = fit_grid(std::span<const double>(v), t);
      EXPECT_LE(g.dequant(0), std::nextafter(*lo, INFINITY));
      EXPECT_GE(g.dequant(g.max_code()), std::nextafter(*hi, -INFINITY));
    }
  }
}

TEST(FitGrid, Errors) {
  const std::vector<double> empty;
  EXPECT_THROW(fit_grid(std::span<const double>(empty), 2), ValidationError);
  const std::vector<double> v{1.0, NAN};
  EXPECT_THROW(fit_grid(std::span<const double>(v), 2), ValidationError);
  const std::vector<double> w{1.0, 2.0};
  EXPECT_THROW(fit_grid(std::span<const double>(w), 0), ValidationError);
}

TEST(QuantizeRtn, NearestLevel) {
  const QuantGrid g{2, 1.0, 0.0, false};
  const std::vector<double> v{0.49};
  EXPECT_EQ(quantize_rtn(std::span<const double>(v), g).codes[0], 0);
}

TEST(QuantizeRtn, TiesRoundAwayFromZero) {
  const QuantGrid g{2, 1.0, 0.0, false};
  const std::vector<double> v{0.5, 1.5, 2.5};
  const auto q = quantize_rtn(std::span<const double>(v), g);
  EXPECT_EQ(q.codes, (std::vector<std::uint8_t>{1, 2, 3}));
}

TEST(QuantizeRtn, ClampsOutOfRange) {
  const QuantGrid g{2, 1.0, 0.0, false};
  const std::vector<double> v{-7.0, 42.0};
  const auto q = quantize_rtn(std::span<const double>(v), g);
  EXPECT_EQ(q.codes, (std::vector<std::uint8_t>{0, 3}));
}

TEST(QuantizeRtn, MatchesExhaustiveNearestLevel) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = random_values(32, seed);
    const auto g = fit_grid(std::span<const double>(v), 3);
    const auto q = quantize_rtn(std::span<const double>(v), g);
    for (std::size_t i = 0; i < v.size(); ++i) {
      double best = INFINITY;
      for (std::uint32_t c = 0; c <= g.max_code(); ++c) best = std::min(best, std::abs(v[i] - g.dequant(c)));
      EXPECT_NEAR(std::abs(v[i] - g.dequant(q.codes[i])), best, 1e-12);
      EXPECT_LE(std::abs(v[i] - g.dequant(q.codes[i])), g.scale / 2 + 1e-12);
    }
  }
}

TEST(QuantizeRtn, RejectsInvalidGrid) {
  const std::vector<double> v{1.0};
  EXPECT_THROW(quantize_rtn(std::span<const double>(v), QuantGrid{2, 0.0, 0.0, false}), ValidationError);
  EXPECT_THROW(quantize_rtn(std::span<const double>(v), QuantGrid{9, 1.0, 0.0, false}), ValidationError);
}

TEST(QuantizeBinary, MeanAbsoluteScale) {
  const std::vector<double> v{1.0, -2.0, 3.0};
  EXPECT_EQ(deq(quantize_binary(std::span<const double>(v))), (std::vector<double>{2.0, -2.0, 2.0}));
}

TEST(QuantizeBinary, ZerosAndSignConvention) {
  const std::vector<double> z{0.0, 0.0};
  EXPECT_EQ(deq(quantize_binary(std::span<const double>(z))), z);
  const std::vector<double> v{0.0, -1.0, 1.0};
  const auto q = quantize_binary(std::span<const double>(v));
  EXPECT_EQ(q.codes[0], 1);  // sign(0) = +1
  EXPECT_TRUE(q.grid.binary);
}

TEST(QuantizeBinary, AlphaMatchesGoldenSection) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto v = random_values(40, seed);
    const auto q = quantize_binary(std::span<const double>(v));
    const double alpha = q.grid.dequant(1);
    EXPECT_NEAR(alpha, golden_section_min(v, 0.0, 10.0), 1e-6);
    for (double d : {-1e-3, 1e-3}) EXPECT_GE(binary_loss(v, alpha + d), binary_loss(v, alpha));
  }
}

// Grids with a dyadic scale and integer zero point have exact level
// arithmetic, so refitting reproduces the same grid bit for bit.
TEST(QuantizeColumn, RoundTripOnAssignedGrid) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const int t = 2 + static_cast<int>(rng() % 7);
    const double scale = std::ldexp(static_cast<double>(1 + rng() % 255), -static_cast<int>(rng() % 20));
    const QuantGrid g{t, scale, static_cast<double>(rng() % 300) - 150.0, false};
    std::vector<double> v(64);
    for (double& x : v) x = g.dequant(static_cast<std::uint32_t>(rng() % (g.max_code() + 1)));
    v[0] = g.dequant(0);
    v[1] = g.dequant(g.max_code());
    const auto q = quantize_column(std::span<const double>(v), t);
    EXPECT_EQ(q.grid, g);
    EXPECT_EQ(deq(q), v) << "t=" << t;
  }
  const std::vector<double> b{0.75, -0.75, 0.75};
  EXPECT_EQ(deq(quantize_column(std::span<const double>(b), 1)), b);
}

// Arbitrary real grids are recovered up to rounding of scale and zero.
TEST(QuantizeColumn, RoundTripOnRealGridWithinUlps) {
  std::mt19937_64 rng(4);
  for (int t = 2; t <= 8; ++t) {
    const QuantGrid g{t, 0.37, 5.0, false};
    std::vector<double> v(64);
    for (double& x : v) x = g.dequant(static_cast<std::uint32_t>(rng() % (g.max_code() + 1)));
    v[0] = g.dequant(0);
    v[1] = g.dequant(g.max_code());
    const auto d = deq(quantize_column(std::span<const double>(v), t));
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(d[i], v[i], 1e-13 * std::abs(g.dequant(g.max_code())) + 1e-13);
  }
}

TEST(QuantizeColumn, OutputsOnDeclaredGrid) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto v = random_values(50, seed);
    for (int t = 1; t <= 8; ++t) {
      const auto q = quantize_column(std::span<const double>(v), t);
      const auto d = deq(q);
      EXPECT_TRUE(on_grid(std::span<const double>(d), q));
      EXPECT_EQ(q.bits(), t);
    }
  }
}

TEST(QuantizeRtn, OptimalOverExhaustiveCodeChoices) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto v = random_values(4, seed);
    for (int t = 2; t <= 4; ++t) {
      const auto g = fit_grid(std::span<const double>(v), t);
      const double rtn = squared_error(std::span<const double>(v), quantize_rtn(std::span<const double>(v), g));
      const std::uint32_t levels = g.max_code() + 1;
      double best = INFINITY;
      for (std::uint32_t a = 0; a < levels; ++a)
        for (std::uint32_t b = 0; b < levels; ++b)
          for (std::uint32_t c = 0; c < levels; ++c)
            for (std::uint32_t d = 0; d < levels; ++d) {
              const std::uint32_t codes[4] = {a, b, c, d};
              double e = 0.0;
              for (int i = 0; i < 4; ++i) e += std::pow(v[i] - g.dequant(codes[i]), 2);
              best = std::min(best, e);
            }
      EXPECT_NEAR(rtn, best, 1e-12);
    }
  }
}

TEST(ColumnErrorTable, ExactAtRepresentableWidth) {
  const QuantGrid g{4, 0.25, 3.0, false};
  std::vector<double> v;
  for (std::uint32_t c = 0; c < 16; ++c) v.push_back(g.dequant(c));
  const auto table = column_error_table(std::span<const double>(v), 4, 0.5);
  EXPECT_EQ(table[3], 0.0);
}

TEST(ColumnErrorTable, MatchesRecomputation) {
  const auto v = random_values(8, 77);
  const double hdiag = 0.3;
  const auto table = column_error_table(std::span<const double>(v), 4, hdiag);
  for (int t = 1; t <= 4; ++t) {
    const auto q = quantize_column(std::span<const double>(v), t);
    const auto d = deq(q);
    double e = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) e += (v[i] - d[i]) * (v[i] - d[i]);
    EXPECT_NEAR(table[t - 1], e / (hdiag * hdiag), 1e-12);
  }
}

TEST(ColumnErrorTable, BlockOverloadSelectsColumn) {
  const auto m = testutil::random_matrix(6, 3, 4);
  const auto col = m.column(2);
  EXPECT_EQ(column_error_table(m, 2, 4, 1.0), column_error_table(std::span<const double>(col), 4, 1.0));
  EXPECT_THROW(column_error_table(m, 3, 4, 1.0), DimensionError);
  EXPECT_THROW(column_error_table(m, 0, 4, 0.0), ValidationError);
}

// Min-max grids of different widths over the same range are nested only when
// 2^s − 1 divides 2^t − 1. {0, 1/3, 2/3, 1} is exact at 2 bits but not on
// the 3-bit levels k/7, so per-column non-increase does not hold in general.
TEST(ColumnErrorTable, FinerGridsCanBeWorseOnSpecificColumns) {
  const std::vector<double> v{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  const auto table = column_error_table(std::span<const double>(v), 3, 1.0);
  EXPECT_NEAR(table[1], 0.0, 1e-30);
  EXPECT_GT(table[2], table[1]);
}

TEST(ColumnErrorTable, NonIncreasingOnNestedWidths) {
  // 2^2−1 = 3 divides 2^4−1 = 15, so the 4-bit grid contains the 2-bit grid.
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto v = random_values(64, seed);
    const auto table = column_error_table(std::span<const double>(v), 4, 1.0);
    EXPECT_LE(table[3], table[1] + 1e-12);
  }
}

TEST(ColumnErrorTable, DecreasingOnAverage) {
  std::vector<double> mean(4, 0.0);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto v = random_values(64, seed);
    const auto table = column_error_table(std::span<const double>(v), 4, 1.0);
    for (int t = 0; t < 4; ++t) mean[t] += table[t];
  }
  for (int t = 1; t < 4; ++t) EXPECT_LT(mean[t], mean[t - 1]);
}
