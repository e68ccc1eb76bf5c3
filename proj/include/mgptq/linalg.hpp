#pragma once

// Dense real linear algebra used by every other part of the library.
//
// Matrices are row-major and own their storage. Every routine has a fixed
// summation order per output element, so results are bit-reproducible for
// identical inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mgptq/error.hpp"

namespace mgptq {

template <typename T>
concept Real = std::is_floating_point_v<T>;

template <Real T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(rows_, cols_));
  }
  Matrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n, T diag = T(1)) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = diag;
    return m;
  }

  template <Real U>
  static Matrix cast(const Matrix<U>& other) {
    std::vector<T> out(other.data().begin(), other.data().end());
    return Matrix(other.rows(), other.cols(), std::move(out));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<T> column(std::size_t c) const {
    std::vector<T> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }
  void set_column(std::size_t c, std::span<const T> values) {
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }
  std::string shape_string() const { return shape_string(rows_, cols_); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

enum class Orientation { lower, upper };

// Triangular factor kept in full storage; the zero side is exactly 0.
template <Real T>
class TriangularMatrix {
 public:
  TriangularMatrix() = default;
  TriangularMatrix(Matrix<T> full, Orientation orientation)
      : full_(std::move(full)), orientation_(orientation) {
    if (full_.rows() != full_.cols())
      throw DimensionError("triangular matrix must be square, got " + full_.shape_string());
    for (std::size_t i = 0; i < n(); ++i) {
      for (std::size_t j = 0; j < n(); ++j) {
        const bool zero_side = orientation_ == Orientation::lower ? j > i : j < i;
        if (zero_side && full_(i, j) != T(0))
          throw ValidationError("non-zero entry on the zero side of a triangular matrix");
      }
      if (!(full_(i, i) > T(0)))
        throw ValidationError("triangular factor diagonal must be strictly positive (index " +
                              std::to_string(i) + ")");
    }
  }

  std::size_t n() const noexcept { return full_.rows(); }
  Orientation orientation() const noexcept { return orientation_; }
  T operator()(std::size_t r, std::size_t c) const noexcept { return full_(r, c); }
  const Matrix<T>& full() const noexcept { return full_; }

  TriangularMatrix transposed() const {
    TriangularMatrix out;
    out.full_ = full_.transposed();
    out.orientation_ = orientation_ == Orientation::lower ? Orientation::upper : Orientation::lower;
    return out;
  }

 private:
  Matrix<T> full_;
  Orientation orientation_ = Orientation::upper;
};

namespace detail {

template <Real T>
void require_finite(const Matrix<T>& m, const char* op) {
  if (!m.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
}

// Tolerance used for the symmetry precondition; f32 Gram matrices drift.
template <Real T>
constexpr double symmetry_tolerance() {
  return std::is_same_v<T, float> ? 1e-4 : 1e-8;
}

}  // namespace detail

namespace detail {

enum class Band { dense, upper, lower };

template <Real T>
Band band_of(const Matrix<T>& a) {
  if (a.rows() != a.cols() || a.rows() < 2) return Band::dense;
  bool upper = true, lower = true;
  for (std::size_t i = 0; i < a.rows() && (upper || lower); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (a(i, j) == T(0)) continue;
      if (j < i) upper = false;
      if (j > i) lower = false;
    }
  return upper ? Band::upper : lower ? Band::lower : Band::dense;
}

#if defined(__AVX512F__)
inline constexpr std::size_t kSimdBytes = 64;
#else
inline constexpr std::size_t kSimdBytes = 32;
#endif

// c[m×n] += a[m×k] · b[k×n] on row-major storage with leading dimensions.
// Every output element receives its products one at a time in ascending k,
// exactly as the plain triple loop does, so blocking changes speed only.
// With a triangular band the structurally zero part of `a` is skipped.
template <Real T>
void gemm_accumulate(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
                     std::size_t m, std::size_t n, std::size_t k, Band band = Band::dense) {
  typedef T V __attribute__((vector_size(kSimdBytes)));
  typedef T VU __attribute__((vector_size(kSimdBytes), aligned(alignof(T)), may_alias));
  constexpr std::size_t L = kSimdBytes / sizeof(T);
  constexpr std::size_t MR = 4, NV = 3, NR = NV * L;
  constexpr std::size_t KC = 256;
  for (std::size_t k0 = 0; k0 < k; k0 += KC) {
    const std::size_t k1 = std::min(k0 + KC, k);
    for (std::size_t i0 = 0; i0 < m; i0 += MR) {
      const std::size_t mr = std::min(MR, m - i0);
      const std::size_t kb = band == Band::upper ? std::max(k0, i0) : k0;
      const std::size_t ke = band == Band::lower ? std::min(k1, i0 + mr) : k1;
      if (kb >= ke) continue;
      std::size_t j0 = 0;
      if (mr == MR) {
        for (; j0 + NR <= n; j0 += NR) {
          V acc[MR][NV];
          for (std::size_t r = 0; r < MR; ++r)
            for (std::size_t v = 0; v < NV; ++v) acc[r][v] = *reinterpret_cast<const VU*>(c + (i0 + r) * ldc + j0 + v * L);
          for (std::size_t kk = kb; kk < ke; ++kk) {
            V bv[NV];
            for (std::size_t v = 0; v < NV; ++v) bv[v] = *reinterpret_cast<const VU*>(b + kk * ldb + j0 + v * L);
            for (std::size_t r = 0; r < MR; ++r) {
              const T av = a[(i0 + r) * lda + kk];
              for (std::size_t v = 0; v < NV; ++v) acc[r][v] += av * bv[v];
            }
          }
          for (std::size_t r = 0; r < MR; ++r)
            for (std::size_t v = 0; v < NV; ++v) *reinterpret_cast<VU*>(c + (i0 + r) * ldc + j0 + v * L) = acc[r][v];
        }
      }
      if (j0 == n) continue;
      for (std::size_t r = 0; r < mr; ++r) {
        T* crow = c + (i0 + r) * ldc;
        const T* arow = a + (i0 + r) * lda;
        for (std::size_t kk = kb; kk < ke; ++kk) {
          const T av = arow[kk];
          if (av == T(0)) continue;
          const T* brow = b + kk * ldb;
          for (std::size_t j = j0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

}  // namespace detail

// c = a * b. A triangular left operand only pays for its nonzero half.
template <Real T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " + b.shape_string());
  Matrix<T> c(a.rows(), b.cols());
  if (!c.empty() && a.cols() > 0)
    detail::gemm_accumulate(a.data().data(), a.cols(), b.data().data(), b.cols(), c.data().data(), c.cols(),
                            a.rows(), b.cols(), a.cols(), detail::band_of(a));
  detail::require_finite(c, "matmul");
  return c;
}

// aᵀ * b without forming the transpose.
template <Real T>
Matrix<T> matmul_at_b(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows())
    throw DimensionError("matmul_at_b shape mismatch: " + a.shape_string() + "^T x " +
                         b.shape_string());
  Matrix<T> c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const T* brow = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T aki = a(k, i);
      if (aki == T(0)) continue;
      T* out = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) out[j] += aki * brow[j];
    }
  }
  detail::require_finite(c, "matmul_at_b");
  return c;
}

// a * bᵀ. Transposes b once so the product runs through the row-streaming kernel.
template <Real T>
Matrix<T> matmul_a_bt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols())
    throw DimensionError("matmul_a_bt shape mismatch: " + a.shape_string() + " x " +
                         b.shape_string() + "^T");
  return matmul(a, b.transposed());
}

template <Real T>
double frobenius_norm(const Matrix<T>& m) {
  double acc = 0.0;
  for (T v : m.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(acc);
}

template <Real T>
Matrix<T> subtract(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("subtract shape mismatch: " + a.shape_string() + " vs " +
                         b.shape_string());
  Matrix<T> c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

// Returns (a + aᵀ)/2 after checking |a - aᵀ| is within the relative
// symmetry tolerance of max|a|.
template <Real T>
Matrix<T> symmetrized(const Matrix<T>& a) {
  if (a.rows() != a.cols()) throw DimensionError("expected a square matrix, got " + a.shape_string());
  double scale = 0.0;
  for (T v : a.data()) scale = std::max(scale, std::abs(static_cast<double>(v)));
  const double tol = detail::symmetry_tolerance<T>() * std::max(scale, 1e-300);
  Matrix<T> s = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double diff = std::abs(static_cast<double>(a(i, j)) - static_cast<double>(a(j, i)));
      if (diff > tol)
        throw ValidationError("matrix is not symmetric at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      const T mean = static_cast<T>((static_cast<double>(a(i, j)) + a(j, i)) / 2.0);
      s(i, j) = mean;
      s(j, i) = mean;
    }
  }
  return s;
}

// Cholesky factor of a symmetric positive definite matrix:
// lower gives L·Lᵀ = a, upper gives Uᵀ·U = a. Accumulates in double.
template <Real T>
TriangularMatrix<T> cholesky(const Matrix<T>& a, Orientation orientation = Orientation::lower) {
  const Matrix<T> s = symmetrized(a);
  const std::size_t n = s.rows();
  Matrix<double> l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = s(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag))
      throw NotPositiveDefinite(j, "matrix is not positive definite (pivot " + std::to_string(j) +
                                       " = " + std::to_string(diag) + ")");
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = s(i, j);
      const double* li = l.row(i).data();
      const double* lj = l.row(j).data();
      for (std::size_t k = 0; k < j; ++k) acc -= li[k] * lj[k];
      l(i, j) = acc / ljj;
    }
  }
  Matrix<T> out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      if (orientation == Orientation::lower)
        out(i, j) = static_cast<T>(l(i, j));
      else
        out(j, i) = static_cast<T>(l(i, j));
    }
  return TriangularMatrix<T>(std::move(out), orientation);
}

// Solves t·x = b for every column of b (forward or back substitution).
template <Real T>
Matrix<T> triangular_solve(const TriangularMatrix<T>& t, const Matrix<T>& b) {
  const std::size_t n = t.n();
  if (b.rows() != n)
    throw DimensionError("triangular_solve shape mismatch: (" + std::to_string(n) + "x" +
                         std::to_string(n) + ") vs " + b.shape_string());
  Matrix<T> x = b;
  const std::size_t m = b.cols();
  if (t.orientation() == Orientation::lower) {
    for (std::size_t i = 0; i < n; ++i) {
      T* xi = x.row(i).data();
      for (std::size_t k = 0; k < i; ++k) {
        const T tik = t(i, k);
        if (tik == T(0)) continue;
        const T* xk = x.row(k).data();
        for (std::size_t j = 0; j < m; ++j) xi[j] -= tik * xk[j];
      }
      const T d = t(i, i);
      for (std::size_t j = 0; j < m; ++j) xi[j] /= d;
    }
  } else {
    for (std::size_t ii = n; ii-- > 0;) {
      T* xi = x.row(ii).data();
      for (std::size_t k = ii + 1; k < n; ++k) {
        const T tik = t(ii, k);
        if (tik == T(0)) continue;
        const T* xk = x.row(k).data();
        for (std::size_t j = 0; j < m; ++j) xi[j] -= tik * xk[j];
      }
      const T d = t(ii, ii);
      for (std::size_t j = 0; j < m; ++j) xi[j] /= d;
    }
  }
  detail::require_finite(x, "triangular_solve");
  return x;
}

// Inverse of a symmetric positive definite matrix via its Cholesky factor:
// a⁻¹ = L⁻ᵀ·L⁻¹. The result is exactly symmetric.
template <Real T>
Matrix<T> spd_inverse(const Matrix<T>& a) {
  const auto l = cholesky(a, Orientation::lower);
  const std::size_t n = l.n();
  const Matrix<T> l_inv = triangular_solve(l, Matrix<T>::identity(n));
  Matrix<T> inv = matmul_at_b(l_inv, l_inv);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const T mean = (inv(i, j) + inv(j, i)) / T(2);
      inv(i, j) = mean;
      inv(j, i) = mean;
    }
  return inv;
}

}  // namespace mgptq
