#pragma once

// Scalar quantization primitives: asymmetric min-max grids, round-to-nearest,
// sign-based binary quantization and per-column error tables.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgptq/error.hpp"
#include "mgptq/linalg.hpp"

namespace mgptq {

inline constexpr int kMaxBits = 8;

// dequant(code) = scale·(code − zero), codes in [0, 2^bits − 1].
//
// A binary grid (bits == 1, binary == true) encodes α·sign(x) as
// scale = 2α, zero = 0.5, so code 0 ↦ −α and code 1 ↦ +α. Its scale may
// be 0 when every input is 0.
struct QuantGrid {
  int bits = 1;
  double scale = 1.0;
  double zero = 0.0;
  bool binary = false;

  std::uint32_t max_code() const noexcept { return (1u << bits) - 1u; }
  double dequant(std::uint32_t code) const noexcept {
    return scale * (static_cast<double>(code) - zero);
  }
  void validate() const {
    if (bits < 1 || bits > kMaxBits)
      throw ValidationError("grid bit-width " + std::to_string(bits) + " outside [1, " +
                            std::to_string(kMaxBits) + "]");
    if (!std::isfinite(scale) || !std::isfinite(zero))
      throw ValidationError("grid scale/zero must be finite");
    if (binary ? scale < 0.0 : !(scale > 0.0))
      throw ValidationError("grid scale must be positive");
  }

  friend bool operator==(const QuantGrid&, const QuantGrid&) = default;
};

struct QuantizedColumn {
  std::vector<std::uint8_t> codes;
  QuantGrid grid;

  int bits() const noexcept { return grid.bits; }

  template <Real T>
  std::vector<T> dequantize() const {
    std::vector<T> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i)
      out[i] = static_cast<T>(grid.dequant(codes[i]));
    return out;
  }
};

template <Real T>
QuantGrid fit_grid(std::span<const T> values, int bits) {
  if (values.empty()) throw ValidationError("fit_grid: empty input");
  if (bits < 1 || bits > kMaxBits)
    throw ValidationError("fit_grid: bit-width " + std::to_string(bits) + " outside [1, " +
                          std::to_string(kMaxBits) + "]");
  for (T v : values)
    if (!std::isfinite(v)) throw ValidationError("fit_grid: non-finite input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  QuantGrid g;
  g.bits = bits;
  g.scale = hi > lo ? (hi - lo) / static_cast<double>((1u << bits) - 1u) : 1.0;
  g.zero = -(lo / g.scale);
  // Rounding in scale and zero can leave the end levels a few ulps inside
  // [lo, hi]; widen until both ends are covered.
  for (int round = 0; round < 16; ++round) {
    for (int i = 0; i < 64 && g.dequant(0) > lo; ++i) g.zero = std::nextafter(g.zero, HUGE_VAL);
    if (g.dequant(g.max_code()) >= hi) break;
    g.scale = std::nextafter(g.scale, HUGE_VAL);
  }
  return g;
}

// Nearest grid level per value; ties round half away from zero in code
// space, codes are clamped to the grid.
template <Real T>
QuantizedColumn quantize_rtn(std::span<const T> values, const QuantGrid& grid) {
  grid.validate();
  if (grid.binary) throw ValidationError("quantize_rtn: binary grids are produced by quantize_binary");
  QuantizedColumn q;
  q.grid = grid;
  q.codes.resize(values.size());
  const double top = grid.max_code();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double code = std::round(static_cast<double>(values[i]) / grid.scale + grid.zero);
    q.codes[i] = static_cast<std::uint8_t>(std::clamp(code, 0.0, top));
  }
  return q;
}

// α·sign(x) with α = mean|x| and sign(0) = +1.
template <Real T>
QuantizedColumn quantize_binary(std::span<const T> values) {
  if (values.empty()) throw ValidationError("quantize_binary: empty input");
  double abs_sum = 0.0;
  for (T v : values) abs_sum += std::abs(static_cast<double>(v));
  const double alpha = abs_sum / static_cast<double>(values.size());
  QuantizedColumn q;
  q.grid = QuantGrid{1, 2.0 * alpha, 0.5, true};
  q.codes.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) q.codes[i] = values[i] >= T(0) ? 1 : 0;
  return q;
}

// Quantizes one column at `bits`: binary path for 1 bit, min-max RTN otherwise.
template <Real T>
QuantizedColumn quantize_column(std::span<const T> values, int bits) {
  if (bits == 1) return quantize_binary(values);
  return quantize_rtn(values, fit_grid(values, bits));
}

template <Real T>
double squared_error(std::span<const T> values, const QuantizedColumn& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = static_cast<double>(values[i]) - static_cast<double>(static_cast<T>(q.grid.dequant(q.codes[i])));
    acc += d * d;
  }
  return acc;
}

// Entry t−1 is ‖w − dequant(quantize(w, t))‖² / hdiag² for t = 1..t_max.
template <Real T>
std::vector<double> column_error_table(std::span<const T> column, int t_max, double hdiag) {
  if (!(hdiag > 0.0)) throw ValidationError("column_error_table: hdiag must be positive");
  if (t_max < 1 || t_max > kMaxBits) throw ValidationError("column_error_table: bad t_max");
  std::vector<double> out(static_cast<std::size_t>(t_max));
  const double denom = hdiag * hdiag;
  for (int t = 1; t <= t_max; ++t)
    out[static_cast<std::size_t>(t - 1)] = squared_error(column, quantize_column(column, t)) / denom;
  return out;
}

template <Real T>
std::vector<double> column_error_table(const Matrix<T>& block, std::size_t col, int t_max,
                                       double hdiag) {
  if (col >= block.cols())
    throw DimensionError("column " + std::to_string(col) + " outside block " + block.shape_string());
  const std::vector<T> values = block.column(col);
  return column_error_table<T>(std::span<const T>(values), t_max, hdiag);
}

}  // namespace mgptq
