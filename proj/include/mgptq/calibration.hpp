#pragma once

// Gram accumulation over calibration activations and the damped
// inverse-Hessian Cholesky factor that drives compensation and doubles as
// the allocator's graph adjacency.

#include <cstddef>
#include <string>
#include <vector>

#include "mgptq/error.hpp"
#include "mgptq/linalg.hpp"

namespace mgptq {

// Calibration activations X_F split into batches that share a feature width.
template <Real T>
class CalibrationSet {
 public:
  CalibrationSet() = default;
  explicit CalibrationSet(std::vector<Matrix<T>> batches) {
    for (auto& b : batches) add(std::move(b));
  }

  void add(Matrix<T> batch) {
    if (!batches_.empty() && batch.cols() != d_col_)
      throw DimensionError("calibration batch has " + std::to_string(batch.cols()) +
                           " columns, expected " + std::to_string(d_col_));
    if (batches_.empty()) d_col_ = batch.cols();
    samples_ += batch.rows();
    batches_.push_back(std::move(batch));
  }

  std::size_t d_col() const noexcept { return d_col_; }
  std::size_t samples() const noexcept { return samples_; }
  const std::vector<Matrix<T>>& batches() const noexcept { return batches_; }

 private:
  std::vector<Matrix<T>> batches_;
  std::size_t d_col_ = 0;
  std::size_t samples_ = 0;
};

// Running 2·Σ XᵀX, always accumulated in double. Rows are folded in one at
// a time, so splitting the same rows into different batches gives a
// bit-identical Gram.
class GramAccumulator {
 public:
  explicit GramAccumulator(std::size_t d_col) : gram_(d_col, d_col) {}
  GramAccumulator(Matrix<double> gram, std::size_t samples_seen)
      : gram_(std::move(gram)), samples_seen_(samples_seen) {
    if (gram_.rows() != gram_.cols())
      throw DimensionError("Gram matrix must be square, got " + gram_.shape_string());
  }

  template <Real T>
  GramAccumulator& accumulate(const Matrix<T>& batch) {
    const std::size_t d = d_col();
    if (batch.cols() != d)
      throw DimensionError("calibration batch " + batch.shape_string() +
                           " does not match Gram width " + std::to_string(d));
    std::vector<double> x(d);
    for (std::size_t r = 0; r < batch.rows(); ++r) {
      for (std::size_t i = 0; i < d; ++i) x[i] = static_cast<double>(batch(r, i));
      for (std::size_t i = 0; i < d; ++i) {
        const double xi2 = 2.0 * x[i];
        if (xi2 == 0.0) continue;
        double* g = gram_.row(i).data();
        for (std::size_t j = i; j < d; ++j) g[j] += xi2 * x[j];
      }
    }
    samples_seen_ += batch.rows();
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < i; ++j) gram_(i, j) = gram_(j, i);
    return *this;
  }

  template <Real T>
  GramAccumulator& accumulate(const CalibrationSet<T>& set) {
    for (const auto& b : set.batches()) accumulate(b);
    return *this;
  }

  std::size_t d_col() const noexcept { return gram_.rows(); }
  std::size_t samples_seen() const noexcept { return samples_seen_; }
  const Matrix<double>& gram() const noexcept { return gram_; }

 private:
  Matrix<double> gram_;
  std::size_t samples_seen_ = 0;
};

inline constexpr double kDefaultDampFrac = 0.01;

// λ = damp_frac · mean(diag(gram)), or damp_frac itself when the mean is 0.
inline double damping(const Matrix<double>& gram, double damp_frac) {
  double mean = 0.0;
  for (std::size_t i = 0; i < gram.rows(); ++i) mean += gram(i, i);
  if (gram.rows() > 0) mean /= static_cast<double>(gram.rows());
  return mean == 0.0 ? damp_frac : damp_frac * mean;
}

// Upper-triangular T with Tᵀ·T = (gram + λI)⁻¹.
inline TriangularMatrix<double> build_hessian_cholesky(const GramAccumulator& acc,
                                                       double damp_frac = kDefaultDampFrac) {
  if (acc.samples_seen() < 1) throw ValidationError("no calibration samples accumulated");
  if (!(damp_frac >= 0.0)) throw ValidationError("damp_frac must be >= 0");
  Matrix<double> damped = acc.gram();
  const double lambda = damping(damped, damp_frac);
  for (std::size_t i = 0; i < damped.rows(); ++i) damped(i, i) += lambda;
  try {
    const Matrix<double> inverse = spd_inverse(damped);
    return cholesky(inverse, Orientation::upper);
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(e.pivot(), std::string(e.what()) +
                                             "; damped Hessian is singular, increase damp_frac");
  }
}

}  // namespace mgptq
