#pragma once

// Graph perceptual module and bit-width allocator.
//
// Each weight column is a graph node. Node features are the column's values
// folded into d_gnn-wide chunks and averaged; the upper Cholesky factor of
// the damped inverse Hessian is the weighted adjacency. Two GCN layers
//   X1 = ReLU(A·X0·W0),  X2 = ReLU(A·X1·W1)
// feed an affine classifier (optionally with one hidden ReLU layer) whose
// argmax picks a bit-width in [1, t_max] per column.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mgptq/error.hpp"
#include "mgptq/gptq.hpp"
#include "mgptq/linalg.hpp"

namespace mgptq {

inline constexpr std::size_t kDefaultGnnDim = 512;

enum class AdjacencyMode { cholesky, symmetrized };

struct AllocatorShape {
  std::size_t d_gnn = kDefaultGnnDim;
  std::size_t hidden = kDefaultGnnDim;
  int t_max = kDefaultMaxBits;
  // 0: single affine classifier; otherwise width of the classifier's hidden layer.
  std::size_t ffnn_hidden = 0;

  void validate() const {
    if (d_gnn < 1 || hidden < 1) throw ValidationError("d_gnn and hidden must be >= 1");
    if (t_max < 2 || t_max > kMaxBits)
      throw ValidationError("t_max must be in [2, " + std::to_string(kMaxBits) + "]");
  }
  friend bool operator==(const AllocatorShape&, const AllocatorShape&) = default;
};

struct AllocatorParams {
  AllocatorShape shape;
  Matrix<double> w0;  // d_gnn × hidden
  Matrix<double> w1;  // hidden × hidden
  Matrix<double> wf;  // hidden × ffnn_hidden (two-layer classifier only)
  std::vector<double> bf;
  Matrix<double> wc;  // (ffnn_hidden or hidden) × t_max
  std::vector<double> bc;

  bool two_layer_classifier() const noexcept { return shape.ffnn_hidden > 0; }
  std::size_t classifier_in() const noexcept {
    return two_layer_classifier() ? shape.ffnn_hidden : shape.hidden;
  }

  void validate() const {
    shape.validate();
    const auto t = static_cast<std::size_t>(shape.t_max);
    auto check = [](const Matrix<double>& m, std::size_t r, std::size_t c, const char* name) {
      if (m.rows() != r || m.cols() != c)
        throw DimensionError(std::string("parameter ") + name + " has shape " + m.shape_string() +
                             ", expected " + Matrix<double>::shape_string(r, c));
      if (!m.all_finite()) throw NumericError(std::string("parameter ") + name + " is not finite");
    };
    check(w0, shape.d_gnn, shape.hidden, "W0");
    check(w1, shape.hidden, shape.hidden, "W1");
    if (two_layer_classifier()) {
      check(wf, shape.hidden, shape.ffnn_hidden, "Wf");
      if (bf.size() != shape.ffnn_hidden) throw DimensionError("parameter bf has wrong length");
    }
    check(wc, classifier_in(), t, "Wc");
    if (bc.size() != t) throw DimensionError("parameter bc has wrong length");
  }

  friend bool operator==(const AllocatorParams&, const AllocatorParams&) = default;
};

// Glorot-uniform weights, zero biases.
inline AllocatorParams init_params(const AllocatorShape& shape, std::uint64_t seed) {
  shape.validate();
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix<double> m(fan_in, fan_out);
    for (double& v : m.data()) v = dist(rng);
    return m;
  };
  AllocatorParams p;
  p.shape = shape;
  p.w0 = glorot(shape.d_gnn, shape.hidden);
  p.w1 = glorot(shape.hidden, shape.hidden);
  if (shape.ffnn_hidden > 0) {
    p.wf = glorot(shape.hidden, shape.ffnn_hidden);
    p.bf.assign(shape.ffnn_hidden, 0.0);
  }
  p.wc = glorot(p.classifier_in(), static_cast<std::size_t>(shape.t_max));
  p.bc.assign(static_cast<std::size_t>(shape.t_max), 0.0);
  return p;
}

struct NodeFeatures {
  Matrix<double> x;  // d_col × d_gnn
  std::size_t k = 1;
};

// Treats each row of `nodes` as one node's raw vector, zero-pads it to
// k·d_gnn and averages the k chunks.
template <Real T>
NodeFeatures pool_node_rows(const Matrix<T>& nodes, std::size_t d_gnn) {
  if (d_gnn < 1) throw ValidationError("d_gnn must be >= 1");
  const std::size_t len = nodes.cols();
  const std::size_t k = std::max<std::size_t>(1, (len + d_gnn - 1) / d_gnn);
  NodeFeatures f;
  f.k = k;
  f.x = Matrix<double>(nodes.rows(), d_gnn);
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t j = 0; j < nodes.rows(); ++j) {
    double* out = f.x.row(j).data();
    const auto in = nodes.row(j);
    for (std::size_t i = 0; i < len; ++i) out[i % d_gnn] += static_cast<double>(in[i]);
    for (std::size_t c = 0; c < d_gnn; ++c) out[c] *= inv_k;
  }
  return f;
}

// X0 from a weight matrix: transpose to d_col × d_row, pad, chunk-average.
template <Real T>
NodeFeatures preprocess(const Matrix<T>& w, std::size_t d_gnn) {
  return pool_node_rows(w.transposed(), d_gnn);
}

// Inputs for the MLP ablation: row j of the Hessian factor pooled the same way.
inline NodeFeatures hessian_features(const TriangularMatrix<double>& hc, std::size_t d_gnn) {
  return pool_node_rows(hc.full(), d_gnn);
}

inline Matrix<double> adjacency(const TriangularMatrix<double>& hc, AdjacencyMode mode) {
  if (mode == AdjacencyMode::cholesky) return hc.full();
  Matrix<double> a = hc.full();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double m = (a(i, j) + a(j, i)) / 2.0;
      a(i, j) = m;
      a(j, i) = m;
    }
  return a;
}

// Intermediate activations kept for the backward pass. `ax0`/`az1` are the
// propagated inputs A·X0 and A·Z1 (equal to X0 and Z1 without adjacency).
struct ForwardCache {
  Matrix<double> ax0, a1, z1, az1, a2, z2, af, zf, logits;
};

namespace detail {

inline void relu_inplace(Matrix<double>& m) {
  for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
}

inline void add_row_bias(Matrix<double>& m, const std::vector<double>& b) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* row = m.row(r).data();
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += b[c];
  }
}

}  // namespace detail

// Two-layer encoder followed by the classifier. A null adjacency gives the
// MLP variant. Fills `cache` and returns it.
inline ForwardCache encode_and_classify(const Matrix<double>* adj, const NodeFeatures& x0,
                                        const AllocatorParams& p) {
  if (x0.x.cols() != p.shape.d_gnn)
    throw DimensionError("node features " + x0.x.shape_string() + " do not match d_gnn " +
                         std::to_string(p.shape.d_gnn));
  if (adj && (adj->rows() != x0.x.rows() || adj->cols() != x0.x.rows()))
    throw DimensionError("adjacency " + adj->shape_string() + " does not match " +
                         std::to_string(x0.x.rows()) + " nodes");
  ForwardCache c;
  c.ax0 = adj ? matmul(*adj, x0.x) : x0.x;
  c.a1 = matmul(c.ax0, p.w0);
  c.z1 = c.a1;
  detail::relu_inplace(c.z1);
  c.az1 = adj ? matmul(*adj, c.z1) : c.z1;
  c.a2 = matmul(c.az1, p.w1);
  c.z2 = c.a2;
  detail::relu_inplace(c.z2);
  if (p.two_layer_classifier()) {
    c.af = matmul(c.z2, p.wf);
    detail::add_row_bias(c.af, p.bf);
    c.zf = c.af;
    detail::relu_inplace(c.zf);
    c.logits = matmul(c.zf, p.wc);
  } else {
    c.logits = matmul(c.z2, p.wc);
  }
  detail::add_row_bias(c.logits, p.bc);
  return c;
}

// X2 = ReLU(A·ReLU(A·X0·W0)·W1) with A = hc as-is.
inline Matrix<double> gcn_forward(const TriangularMatrix<double>& hc, const NodeFeatures& x0,
                                  const AllocatorParams& p,
                                  AdjacencyMode mode = AdjacencyMode::cholesky) {
  const Matrix<double> adj = adjacency(hc, mode);
  return encode_and_classify(&adj, x0, p).z2;
}

inline Matrix<double> mlp_forward(const NodeFeatures& x0, const AllocatorParams& p) {
  return encode_and_classify(nullptr, x0, p).z2;
}

// Classifier logits from encoder output X2.
inline Matrix<double> classifier_logits(const Matrix<double>& x2, const AllocatorParams& p) {
  if (x2.cols() != p.shape.hidden)
    throw DimensionError("encoder output " + x2.shape_string() + " does not match hidden width " +
                         std::to_string(p.shape.hidden));
  Matrix<double> logits;
  if (p.two_layer_classifier()) {
    Matrix<double> h = matmul(x2, p.wf);
    detail::add_row_bias(h, p.bf);
    detail::relu_inplace(h);
    logits = matmul(h, p.wc);
  } else {
    logits = matmul(x2, p.wc);
  }
  detail::add_row_bias(logits, p.bc);
  return logits;
}

// First index of the maximum; ties go to the lower index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

// Class c maps to c + 1 bits.
inline BitAssignment assignment_from_logits(const Matrix<double>& logits, int t_max) {
  std::vector<int> widths(logits.rows());
  for (std::size_t j = 0; j < logits.rows(); ++j)
    widths[j] = static_cast<int>(argmax(logits.row(j))) + 1;
  return BitAssignment(std::move(widths), t_max);
}

inline BitAssignment allocate(const Matrix<double>& x2, const AllocatorParams& p) {
  return assignment_from_logits(classifier_logits(x2, p), p.shape.t_max);
}

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.size());
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// g = −log(−log u), u uniform on the open interval (0, 1).
template <typename Rng>
double sample_gumbel(Rng& rng) {
  const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  return -std::log(-std::log(u));
}

template <typename Rng>
Matrix<double> sample_gumbel(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix<double> g(rows, cols);
  for (double& v : g.data()) v = sample_gumbel(rng);
  return g;
}

// softmax((logits + noise) / tau).
inline std::vector<double> gumbel_softmax(std::span<const double> logits, double tau,
                                          std::span<const double> noise) {
  if (!(tau > 0.0)) throw ValidationError("gumbel_softmax: temperature must be positive");
  if (noise.size() != logits.size())
    throw DimensionError("gumbel_softmax: noise length does not match logits");
  std::vector<double> y(logits.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (logits[i] + noise[i]) / tau;
  return softmax(y);
}

// Full inference path: features → encoder → argmax allocation.
template <Real T>
BitAssignment allocate_bits(const Matrix<T>& w, const TriangularMatrix<double>& hc,
                            const AllocatorParams& p,
                            AdjacencyMode mode = AdjacencyMode::cholesky) {
  const NodeFeatures x0 = preprocess(w, p.shape.d_gnn);
  return allocate(gcn_forward(hc, x0, p, mode), p);
}

}  // namespace mgptq
