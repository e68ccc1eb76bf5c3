#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mgptq/mgptq.hpp"

namespace testutil {

using mgptq::Matrix;

template <typename T = double>
Matrix<T> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix<T> m(r, c);
  for (auto& v : m.data()) v = static_cast<T>(n(rng));
  return m;
}

// XᵀX + shift·I for a random tall X.
inline Matrix<double> random_spd(std::size_t n, std::uint64_t seed, double shift = 1e-3) {
  const auto x = random_matrix(n + 4, n, seed);
  auto a = mgptq::matmul_at_b(x, x);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += shift;
  return a;
}

template <typename T>
double rel_frob(const Matrix<T>& a, const Matrix<T>& b) {
  return mgptq::frobenius_norm(mgptq::subtract(a, b)) / std::max(mgptq::frobenius_norm(b), 1e-300);
}

inline double max_abs_diff(const Matrix<double>& a, const Matrix<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Hessian factor from an explicit calibration matrix.
inline mgptq::TriangularMatrix<double> hessian_from(const Matrix<double>& calib,
                                                    double damp = mgptq::kDefaultDampFrac) {
  mgptq::GramAccumulator acc(calib.cols());
  acc.accumulate(calib);
  return mgptq::build_hessian_cholesky(acc, damp);
}

// d_row × d_col weights with 256 AR(1)-correlated calibration rows.
inline mgptq::SyntheticLayer correlated_instance(std::size_t d_row, std::size_t d_col, std::uint64_t seed,
                                                 double decades = 0.0, std::size_t samples = 256) {
  mgptq::SyntheticSpec s;
  s.d_row = d_row;
  s.d_col = d_col;
  s.samples = samples;
  s.salience_decades = decades;
  s.correlation = 0.5;
  return mgptq::make_synthetic_layer(s, seed);
}

// True when every value of the column is scale·(c − zero) for an integer
// code c in range (binary grids: ±α).
template <typename T>
bool on_grid(std::span<const T> values, const mgptq::QuantizedColumn& q) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint32_t c = q.codes[i];
    if (c > q.grid.max_code()) return false;
    if (values[i] != static_cast<T>(q.grid.dequant(c))) return false;
  }
  return true;
}

}  // namespace testutil
