#pragma once

// Seeded synthetic layers for tests, benchmarks and the `synth` command.
//
// Weights are Gaussian with per-column scales log-spaced over
// `salience_decades` decades (randomly permuted across columns), so a few
// columns dominate the output error. Calibration rows follow an AR(1)
// process across features with correlation `correlation`, scaled so that
// the Gram matrix 2·XᵀX has unit expected diagonal.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "mgptq/calibration.hpp"
#include "mgptq/linalg.hpp"

namespace mgptq {

struct SyntheticSpec {
  std::size_t d_row = 256;
  std::size_t d_col = 256;
  std::size_t samples = 512;
  double salience_decades = 2.0;
  double correlation = 0.5;
};

struct SyntheticLayer {
  Matrix<double> weight;
  Matrix<double> calib;
  std::vector<double> column_scale;
};

inline SyntheticLayer make_synthetic_layer(const SyntheticSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticLayer out;

  out.column_scale.resize(spec.d_col);
  for (std::size_t j = 0; j < spec.d_col; ++j) {
    const double frac = spec.d_col > 1 ? static_cast<double>(j) / static_cast<double>(spec.d_col - 1) : 0.5;
    out.column_scale[j] = std::pow(10.0, spec.salience_decades * (frac - 0.5));
  }
  std::shuffle(out.column_scale.begin(), out.column_scale.end(), rng);

  out.weight = Matrix<double>(spec.d_row, spec.d_col);
  for (std::size_t r = 0; r < spec.d_row; ++r)
    for (std::size_t c = 0; c < spec.d_col; ++c) out.weight(r, c) = normal(rng) * out.column_scale[c];

  const double rho = spec.correlation;
  const double innov = std::sqrt(1.0 - rho * rho);
  const double unit = 1.0 / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(spec.samples, 1)));
  out.calib = Matrix<double>(spec.samples, spec.d_col);
  for (std::size_t s = 0; s < spec.samples; ++s) {
    double prev = normal(rng);
    out.calib(s, 0) = prev * unit;
    for (std::size_t c = 1; c < spec.d_col; ++c) {
      prev = rho * prev + innov * normal(rng);
      out.calib(s, c) = prev * unit;
    }
  }
  return out;
}

inline TriangularMatrix<double> synthetic_hessian(const SyntheticLayer& layer,
                                                  double damp_frac = kDefaultDampFrac) {
  GramAccumulator acc(layer.calib.cols());
  acc.accumulate(layer.calib);
  return build_hessian_cholesky(acc, damp_frac);
}

}  // namespace mgptq
