#pragma once

// Blockwise mixed-precision quantization with output-error compensation.
//
// Columns are visited left to right in blocks. Each column is quantized at
// its assigned bit-width against its current (already compensated) values;
// the scaled error e_j = (w_j − q_j) / hc[j,j] is pushed onto the later
// columns of the block through row j of the upper Cholesky factor, and once
// the block is done the collected errors update every column after it.

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mgptq/calibration.hpp"
#include "mgptq/error.hpp"
#include "mgptq/linalg.hpp"
#include "mgptq/quant.hpp"

namespace mgptq {

inline constexpr int kDefaultMaxBits = 4;
inline constexpr std::size_t kDefaultBlockSize = 128;

// Per-column bit-widths in [1, t_max].
class BitAssignment {
 public:
  BitAssignment() = default;
  BitAssignment(std::vector<int> widths, int t_max) : widths_(std::move(widths)), t_max_(t_max) {
    if (t_max_ < 1 || t_max_ > kMaxBits)
      throw ValidationError("t_max " + std::to_string(t_max_) + " outside [1, " +
                            std::to_string(kMaxBits) + "]");
    for (std::size_t j = 0; j < widths_.size(); ++j)
      if (widths_[j] < 1 || widths_[j] > t_max_)
        throw ValidationError("bit-width " + std::to_string(widths_[j]) + " at column " +
                              std::to_string(j) + " outside [1, " + std::to_string(t_max_) + "]");
  }

  static BitAssignment uniform(std::size_t d_col, int bits, int t_max = kDefaultMaxBits) {
    return BitAssignment(std::vector<int>(d_col, bits), std::max(bits, t_max));
  }

  std::size_t size() const noexcept { return widths_.size(); }
  int t_max() const noexcept { return t_max_; }
  int operator[](std::size_t j) const noexcept { return widths_[j]; }
  const std::vector<int>& widths() const noexcept { return widths_; }

  double mean() const noexcept {
    if (widths_.empty()) return 0.0;
    double s = 0.0;
    for (int w : widths_) s += w;
    return s / static_cast<double>(widths_.size());
  }

  // counts[t-1] = number of columns at t bits.
  std::vector<std::size_t> histogram() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(t_max_), 0);
    for (int w : widths_) ++counts[static_cast<std::size_t>(w - 1)];
    return counts;
  }

  friend bool operator==(const BitAssignment&, const BitAssignment&) = default;

 private:
  std::vector<int> widths_;
  int t_max_ = kDefaultMaxBits;
};

struct BlockwiseOptions {
  std::size_t block_size = kDefaultBlockSize;
  // Propagate each column's error to the remaining columns of its block.
  bool intra_block = true;
  // Fill QuantResult::error_table (d_col × error_table_bits), evaluated on
  // each column's compensated values at the moment it is quantized.
  bool record_error_table = false;
  int error_table_bits = kDefaultMaxBits;
};

template <Real T>
struct QuantResult {
  Matrix<T> quantized;
  std::vector<QuantizedColumn> columns;
  BitAssignment assignment;
  std::vector<double> block_errors;
  std::optional<double> proxy_loss;
  double wall_time = 0.0;
  Matrix<double> error_table;

  double block_error_sum() const noexcept {
    double s = 0.0;
    for (double e : block_errors) s += e;
    return s;
  }
};

// ‖(w − q)·X_Fᵀ‖_F² / m.
template <Real T, Real U>
double proxy_loss(const Matrix<T>& w, const Matrix<T>& q, const CalibrationSet<U>& calib) {
  if (w.rows() != q.rows() || w.cols() != q.cols())
    throw DimensionError("proxy_loss shape mismatch: " + w.shape_string() + " vs " + q.shape_string());
  if (calib.samples() == 0) throw ValidationError("proxy_loss: empty calibration set");
  if (calib.d_col() != w.cols())
    throw DimensionError("proxy_loss: calibration width " + std::to_string(calib.d_col()) +
                         " does not match weight " + w.shape_string());
  Matrix<double> delta(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.size(); ++i)
    delta.data()[i] = static_cast<double>(w.data()[i]) - static_cast<double>(q.data()[i]);
  double total = 0.0;
  for (const auto& batch : calib.batches()) {
    for (std::size_t s = 0; s < batch.rows(); ++s) {
      const auto x = batch.row(s);
      for (std::size_t r = 0; r < delta.rows(); ++r) {
        const double* d = delta.row(r).data();
        double y = 0.0;
        for (std::size_t c = 0; c < delta.cols(); ++c) y += d[c] * static_cast<double>(x[c]);
        total += y * y;
      }
    }
  }
  return total / static_cast<double>(calib.samples());
}

// Same quantity from a Gram matrix G = 2·X_FᵀX_F: Σ_r Δ_r·G·Δ_rᵀ / (2m).
template <Real T>
double proxy_loss_from_gram(const Matrix<T>& w, const Matrix<T>& q, const Matrix<double>& gram,
                            std::size_t samples) {
  if (w.rows() != q.rows() || w.cols() != q.cols())
    throw DimensionError("proxy_loss shape mismatch: " + w.shape_string() + " vs " + q.shape_string());
  if (gram.rows() != w.cols() || gram.cols() != w.cols())
    throw DimensionError("proxy_loss: Gram " + gram.shape_string() + " does not match weight " +
                         w.shape_string());
  if (samples == 0) throw ValidationError("proxy_loss: zero calibration samples");
  const std::size_t d = w.cols();
  std::vector<double> delta(d), gd(d);
  double total = 0.0;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c)
      delta[c] = static_cast<double>(w(r, c)) - static_cast<double>(q(r, c));
    std::fill(gd.begin(), gd.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      if (delta[i] == 0.0) continue;
      const double* g = gram.row(i).data();
      for (std::size_t j = 0; j < d; ++j) gd[j] += delta[i] * g[j];
    }
    for (std::size_t c = 0; c < d; ++c) total += delta[c] * gd[c];
  }
  return total / (2.0 * static_cast<double>(samples));
}

template <Real T>
QuantResult<T> quantize_blockwise(const Matrix<T>& w, const TriangularMatrix<double>& hc,
                                  const BitAssignment& assign, const BlockwiseOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t d_row = w.rows();
  const std::size_t d_col = w.cols();
  if (hc.n() != d_col || assign.size() != d_col)
    throw DimensionError("quantize_blockwise: weight " + w.shape_string() + ", hessian (" +
                         std::to_string(hc.n()) + "x" + std::to_string(hc.n()) + "), assignment " +
                         std::to_string(assign.size()) + " disagree");
  if (hc.orientation() != Orientation::upper)
    throw ValidationError("quantize_blockwise expects an upper-triangular Cholesky factor");
  if (opts.block_size < 1) throw ValidationError("block size must be >= 1");
  // A block wider than the layer is the whole layer.
  const std::size_t block = std::min(opts.block_size, d_col);
  for (std::size_t j = 0; j < d_col; ++j)
    if (!(hc(j, j) > 0.0)) throw ValidationError("hessian factor diagonal must be positive");

  QuantResult<T> res;
  res.assignment = assign;
  res.quantized = Matrix<T>(d_row, d_col);
  res.columns.resize(d_col);
  if (opts.record_error_table) res.error_table = Matrix<double>(d_col, static_cast<std::size_t>(opts.error_table_bits));

  Matrix<T> work = w;
  std::vector<T> col(d_row);
  for (std::size_t b = 0; b < d_col; b += block) {
    const std::size_t end = std::min(b + block, d_col);
    const std::size_t width = end - b;
    Matrix<T> err(d_row, width);
    double block_err = 0.0;
    for (std::size_t j = b; j < end; ++j) {
      for (std::size_t r = 0; r < d_row; ++r) col[r] = work(r, j);
      const std::span<const T> values(col);
      const double d = hc(j, j);
      if (opts.record_error_table) {
        const auto table = column_error_table(values, opts.error_table_bits, d);
        for (std::size_t t = 0; t < table.size(); ++t) res.error_table(j, t) = table[t];
      }
      QuantizedColumn qc = quantize_column(values, assign[j]);
      for (std::size_t r = 0; r < d_row; ++r) {
        const T q = static_cast<T>(qc.grid.dequant(qc.codes[r]));
        res.quantized(r, j) = q;
        const T e = static_cast<T>((static_cast<double>(col[r]) - static_cast<double>(q)) / d);
        err(r, j - b) = e;
        block_err += static_cast<double>(e) * static_cast<double>(e);
      }
      res.columns[j] = std::move(qc);
      if (opts.intra_block && j + 1 < end) {
        for (std::size_t r = 0; r < d_row; ++r) {
          const T e = err(r, j - b);
          if (e == T(0)) continue;
          T* wr = work.row(r).data();
          for (std::size_t k = j + 1; k < end; ++k) wr[k] -= e * static_cast<T>(hc(j, k));
        }
      }
    }
    res.block_errors.push_back(block_err);
    if (end < d_col) {
      // W[:, end:] −= E · hc[b:end, end:]
      const std::size_t rest = d_col - end;
      Matrix<T> panel(width, rest);
      for (std::size_t j = 0; j < width; ++j)
        for (std::size_t k = 0; k < rest; ++k) panel(j, k) = static_cast<T>(hc(b + j, end + k));
      for (T& e : err.data()) e = -e;
      detail::gemm_accumulate(err.data().data(), width, panel.data().data(), rest, work.data().data() + end,
                              d_col, d_row, rest, width);
    }
  }
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

// Independent per-column quantization with no compensation.
template <Real T>
QuantResult<T> quantize_columns_independent(const Matrix<T>& w, const BitAssignment& assign) {
  const auto start = std::chrono::steady_clock::now();
  if (assign.size() != w.cols())
    throw DimensionError("assignment length " + std::to_string(assign.size()) +
                         " does not match weight " + w.shape_string());
  QuantResult<T> res;
  res.assignment = assign;
  res.quantized = Matrix<T>(w.rows(), w.cols());
  res.columns.resize(w.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    const std::vector<T> col = w.column(j);
    QuantizedColumn qc = quantize_column(std::span<const T>(col), assign[j]);
    const auto deq = qc.template dequantize<T>();
    res.quantized.set_column(j, deq);
    res.columns[j] = std::move(qc);
  }
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace mgptq
