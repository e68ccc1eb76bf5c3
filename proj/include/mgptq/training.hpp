#pragma once

// Allocator training: L = L_quant + α·L_bit with hand-written backprop
// through the classifier, the Gumbel-Softmax relaxation and both encoder
// layers, optimized with AdamW and gradient accumulation across layers.
//
// L_quant is the expected compensation error Σ_j Σ_t P[j,t]·err[j,t], where
// err is the per-column error table recorded while the layer is quantized
// with the hard (argmax) Gumbel sample. The table is normalized by the
// layer's total 1-bit error so that L_quant is a dimensionless fraction and
// α keeps the same meaning across layers and calibration scales.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mgptq/allocator.hpp"
#include "mgptq/error.hpp"
#include "mgptq/gptq.hpp"
#include "mgptq/linalg.hpp"

namespace mgptq {

enum class Encoder { gcn, mlp };

struct TrainConfig {
  std::size_t epochs = 50;
  double lr = 1e-3;
  std::size_t accum_steps = 4;
  double alpha = 1.0;
  double tau = 1.0;
  // Linear anneal from tau to tau_final over the epochs when set.
  std::optional<double> tau_final;
  double target_bits = 2.5;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate(int t_max) const {
    if (!(target_bits >= 1.0 && target_bits <= t_max))
      throw ValidationError("target_bits must lie in [1, t_max]");
    if (!(lr > 0.0)) throw ValidationError("lr must be positive");
    if (accum_steps < 1) throw ValidationError("accum_steps must be >= 1");
    if (!(tau > 0.0) || (tau_final && !(*tau_final > 0.0)))
      throw ValidationError("temperature must be positive");
    if (!(alpha >= 0.0)) throw ValidationError("alpha must be >= 0");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
      throw ValidationError("invalid Adam constants");
  }

  double temperature(std::size_t epoch) const {
    if (!tau_final || epochs <= 1) return tau;
    const double frac = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return tau + (*tau_final - tau) * frac;
  }
};

// Settings of the quantization pipeline the allocator is trained against.
struct PipelineOptions {
  Encoder encoder = Encoder::gcn;
  AdjacencyMode adjacency = AdjacencyMode::cholesky;
  std::size_t block_size = kDefaultBlockSize;
  bool intra_block = true;
};

struct LossBreakdown {
  double l_quant = 0.0;
  double l_bit = 0.0;
  double total = 0.0;
  double mean_bits_soft = 0.0;
};

namespace detail {

inline void check_probability_rows(const Matrix<double>& probs) {
  for (std::size_t j = 0; j < probs.rows(); ++j) {
    double s = 0.0;
    for (double v : probs.row(j)) s += v;
    if (std::abs(s - 1.0) > 1e-9)
      throw ValidationError("probability row " + std::to_string(j) + " sums to " + std::to_string(s));
  }
}

}  // namespace detail

inline LossBreakdown soft_losses(const Matrix<double>& probs, const Matrix<double>& errs,
                                 double target_bits, double alpha) {
  if (probs.rows() != errs.rows() || probs.cols() != errs.cols())
    throw DimensionError("soft_losses shape mismatch: " + probs.shape_string() + " vs " +
                         errs.shape_string());
  if (probs.rows() == 0) throw ValidationError("soft_losses: no columns");
  detail::check_probability_rows(probs);
  for (double e : errs.data())
    if (!(e >= 0.0)) throw ValidationError("soft_losses: error table must be non-negative");
  LossBreakdown out;
  double bits = 0.0;
  for (std::size_t j = 0; j < probs.rows(); ++j)
    for (std::size_t t = 0; t < probs.cols(); ++t) {
      out.l_quant += probs(j, t) * errs(j, t);
      bits += static_cast<double>(t + 1) * probs(j, t);
    }
  out.mean_bits_soft = bits / static_cast<double>(probs.rows());
  const double r = out.mean_bits_soft - target_bits;
  out.l_bit = r * r;
  out.total = out.l_quant + alpha * out.l_bit;
  return out;
}

inline AllocatorParams zeros_like(const AllocatorParams& p) {
  AllocatorParams z;
  z.shape = p.shape;
  z.w0 = Matrix<double>(p.w0.rows(), p.w0.cols());
  z.w1 = Matrix<double>(p.w1.rows(), p.w1.cols());
  z.wf = Matrix<double>(p.wf.rows(), p.wf.cols());
  z.bf.assign(p.bf.size(), 0.0);
  z.wc = Matrix<double>(p.wc.rows(), p.wc.cols());
  z.bc.assign(p.bc.size(), 0.0);
  return z;
}

// Applies f(param_values, other_values) to each parameter tensor in a fixed order.
template <typename F>
void for_each_tensor(AllocatorParams& a, const AllocatorParams& b, F&& f) {
  f(a.w0.data(), b.w0.data());
  f(a.w1.data(), b.w1.data());
  f(a.wf.data(), b.wf.data());
  f(a.bf, b.bf);
  f(a.wc.data(), b.wc.data());
  f(a.bc, b.bc);
}

inline void add_inplace(AllocatorParams& acc, const AllocatorParams& g) {
  for_each_tensor(acc, g, [](std::vector<double>& x, const std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
  });
}

inline void scale_inplace(AllocatorParams& acc, double s) {
  for_each_tensor(acc, acc, [s](std::vector<double>& x, const std::vector<double>&) {
    for (double& v : x) v *= s;
  });
}

// Forward quantities of one relaxed allocation.
struct RelaxedForward {
  ForwardCache cache;
  Matrix<double> probs;  // Gumbel-Softmax P, d_col × t_max
  double tau = 1.0;
};

inline RelaxedForward relaxed_forward(const Matrix<double>* adj, const NodeFeatures& x0,
                                      const AllocatorParams& p, const Matrix<double>& noise,
                                      double tau) {
  RelaxedForward f;
  f.cache = encode_and_classify(adj, x0, p);
  f.tau = tau;
  const Matrix<double>& logits = f.cache.logits;
  if (noise.rows() != logits.rows() || noise.cols() != logits.cols())
    throw DimensionError("Gumbel noise " + noise.shape_string() + " does not match logits " +
                         logits.shape_string());
  f.probs = Matrix<double>(logits.rows(), logits.cols());
  for (std::size_t j = 0; j < logits.rows(); ++j) {
    const auto pj = gumbel_softmax(logits.row(j), tau, noise.row(j));
    std::copy(pj.begin(), pj.end(), f.probs.row(j).begin());
  }
  return f;
}

// ∂L/∂P for L = Σ P·errs + α(mean_bits − target)².
inline Matrix<double> loss_grad_probs(const Matrix<double>& probs, const Matrix<double>& errs,
                                      double target_bits, double alpha) {
  const LossBreakdown l = soft_losses(probs, errs, target_bits, alpha);
  const double d = static_cast<double>(probs.rows());
  const double bit_coeff = 2.0 * alpha * (l.mean_bits_soft - target_bits) / d;
  Matrix<double> g(probs.rows(), probs.cols());
  for (std::size_t j = 0; j < probs.rows(); ++j)
    for (std::size_t t = 0; t < probs.cols(); ++t)
      g(j, t) = errs(j, t) + bit_coeff * static_cast<double>(t + 1);
  return g;
}

// Exact gradients of the surrogate loss with the error table held constant.
inline AllocatorParams backward(const Matrix<double>* adj, const NodeFeatures& x0,
                                const AllocatorParams& p, const RelaxedForward& fwd,
                                const Matrix<double>& dloss_dprobs) {
  const ForwardCache& c = fwd.cache;
  if (c.logits.empty() || c.z2.empty()) throw ValidationError("backward: missing forward cache");
  const Matrix<double>& probs = fwd.probs;
  AllocatorParams g = zeros_like(p);

  // Softmax Jacobian of softmax((logits + noise)/τ).
  Matrix<double> dlogits(probs.rows(), probs.cols());
  for (std::size_t j = 0; j < probs.rows(); ++j) {
    double dot = 0.0;
    for (std::size_t t = 0; t < probs.cols(); ++t) dot += probs(j, t) * dloss_dprobs(j, t);
    for (std::size_t t = 0; t < probs.cols(); ++t)
      dlogits(j, t) = probs(j, t) * (dloss_dprobs(j, t) - dot) / fwd.tau;
  }
  auto column_sums = [](const Matrix<double>& m) {
    std::vector<double> s(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t k = 0; k < m.cols(); ++k) s[k] += m(r, k);
    return s;
  };
  auto relu_mask = [](Matrix<double>& grad, const Matrix<double>& pre) {
    for (std::size_t i = 0; i < grad.size(); ++i)
      if (!(pre.data()[i] > 0.0)) grad.data()[i] = 0.0;
  };

  g.bc = column_sums(dlogits);
  Matrix<double> dz2;
  if (p.two_layer_classifier()) {
    g.wc = matmul_at_b(c.zf, dlogits);
    Matrix<double> daf = matmul_a_bt(dlogits, p.wc);
    relu_mask(daf, c.af);
    g.wf = matmul_at_b(c.z2, daf);
    g.bf = column_sums(daf);
    dz2 = matmul_a_bt(daf, p.wf);
  } else {
    g.wc = matmul_at_b(c.z2, dlogits);
    dz2 = matmul_a_bt(dlogits, p.wc);
  }
  relu_mask(dz2, c.a2);
  g.w1 = matmul_at_b(c.az1, dz2);
  const Matrix<double> daz1 = matmul_a_bt(dz2, p.w1);
  Matrix<double> dz1 = adj ? matmul_at_b(*adj, daz1) : daz1;
  relu_mask(dz1, c.a1);
  g.w0 = matmul_at_b(c.ax0, dz1);
  (void)x0;
  return g;
}

struct LossAndGradients {
  LossBreakdown loss;
  AllocatorParams grads;
  RelaxedForward forward;
};

inline LossAndGradients loss_and_gradients(const Matrix<double>* adj, const NodeFeatures& x0,
                                           const AllocatorParams& p, const Matrix<double>& noise,
                                           const Matrix<double>& errs, double tau,
                                           double target_bits, double alpha) {
  LossAndGradients out;
  out.forward = relaxed_forward(adj, x0, p, noise, tau);
  out.loss = soft_losses(out.forward.probs, errs, target_bits, alpha);
  const Matrix<double> dp = loss_grad_probs(out.forward.probs, errs, target_bits, alpha);
  out.grads = backward(adj, x0, p, out.forward, dp);
  return out;
}

struct OptimizerState {
  AllocatorParams m;
  AllocatorParams v;
  std::size_t step = 0;

  static OptimizerState for_params(const AllocatorParams& p) {
    return OptimizerState{zeros_like(p), zeros_like(p), 0};
  }
};

// Decoupled weight decay, then the bias-corrected Adam update.
inline void adamw_step(AllocatorParams& params, const AllocatorParams& grads,
                       OptimizerState& state, const TrainConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
      throw DimensionError("adamw_step: parameter and gradient shapes differ");
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= cfg.lr * cfg.weight_decay * p[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  };
  update(params.w0.data(), grads.w0.data(), state.m.w0.data(), state.v.w0.data());
  update(params.w1.data(), grads.w1.data(), state.m.w1.data(), state.v.w1.data());
  update(params.wf.data(), grads.wf.data(), state.m.wf.data(), state.v.wf.data());
  update(params.bf, grads.bf, state.m.bf, state.v.bf);
  update(params.wc.data(), grads.wc.data(), state.m.wc.data(), state.v.wc.data());
  update(params.bc, grads.bc, state.m.bc, state.v.bc);
}

// One weight matrix with its Hessian factor.
struct TrainLayer {
  std::string name;
  Matrix<double> weight;
  TriangularMatrix<double> hc;
};

struct TrainRecord {
  std::size_t epoch = 0;
  std::size_t layer = 0;
  LossBreakdown loss;
  double hard_mean_bits = 0.0;
};

struct TrainResult {
  AllocatorParams params;
  std::vector<TrainRecord> log;
  // Argmax allocations of the trained allocator (no noise), one per layer.
  std::vector<BitAssignment> final_assignments;
  double final_mean_bits = 0.0;
  double final_soft_mean_bits = 0.0;
  double wall_time = 0.0;
};

// Scales a raw error table by the layer's total 1-bit error.
inline Matrix<double> normalize_error_table(Matrix<double> errs) {
  double total = 0.0;
  for (std::size_t j = 0; j < errs.rows(); ++j) total += errs(j, 0);
  if (total > 0.0)
    for (double& v : errs.data()) v /= total;
  return errs;
}

namespace detail {

struct PreparedLayer {
  NodeFeatures x0;
  std::optional<Matrix<double>> adj;
  const Matrix<double>* adjacency() const { return adj ? &*adj : nullptr; }
};

inline PreparedLayer prepare_layer(const TrainLayer& layer, const AllocatorShape& shape,
                                   const PipelineOptions& opts) {
  if (layer.weight.cols() != layer.hc.n())
    throw DimensionError("layer '" + layer.name + "': weight " + layer.weight.shape_string() +
                         " does not match Hessian width " + std::to_string(layer.hc.n()));
  PreparedLayer out;
  if (opts.encoder == Encoder::gcn) {
    out.x0 = preprocess(layer.weight, shape.d_gnn);
    out.adj = adjacency(layer.hc, opts.adjacency);
  } else {
    out.x0 = hessian_features(layer.hc, shape.d_gnn);
  }
  return out;
}

}  // namespace detail

// Argmax allocation for one layer under the chosen encoder.
template <Real T>
BitAssignment infer_assignment(const Matrix<T>& w, const TriangularMatrix<double>& hc,
                               const AllocatorParams& p, const PipelineOptions& opts) {
  if (opts.encoder == Encoder::gcn) return allocate_bits(w, hc, p, opts.adjacency);
  return allocate(mlp_forward(hessian_features(hc, p.shape.d_gnn), p), p);
}

using TrainCallback = std::function<void(const TrainRecord&)>;

// Trains from `init` over every layer for cfg.epochs. One optimizer step is
// taken after every cfg.accum_steps layer passes (gradients are summed); a
// partial accumulation left at the end of training is flushed.
inline TrainResult train(const std::vector<TrainLayer>& layers, const TrainConfig& cfg,
                         AllocatorParams init, const PipelineOptions& opts = {},
                         const TrainCallback& on_record = {}) {
  const auto start = std::chrono::steady_clock::now();
  if (layers.empty()) throw ValidationError("train: no layers");
  init.validate();
  cfg.validate(init.shape.t_max);
  const int t_max = init.shape.t_max;

  std::vector<detail::PreparedLayer> prepared;
  prepared.reserve(layers.size());
  for (const auto& l : layers) prepared.push_back(detail::prepare_layer(l, init.shape, opts));

  TrainResult res;
  res.params = std::move(init);
  OptimizerState state = OptimizerState::for_params(res.params);
  AllocatorParams grad_acc = zeros_like(res.params);
  std::size_t pending = 0;
  std::mt19937_64 rng(cfg.seed);

  BlockwiseOptions qopts;
  qopts.intra_block = opts.intra_block;
  qopts.record_error_table = true;
  qopts.error_table_bits = t_max;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double tau = cfg.temperature(epoch);
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const TrainLayer& layer = layers[li];
      const detail::PreparedLayer& prep = prepared[li];
      const std::size_t d_col = layer.weight.cols();
      const Matrix<double> noise = sample_gumbel(rng, d_col, static_cast<std::size_t>(t_max));

      RelaxedForward fwd = relaxed_forward(prep.adjacency(), prep.x0, res.params, noise, tau);
      const BitAssignment hard = assignment_from_logits(fwd.probs, t_max);
      qopts.block_size = std::min(opts.block_size, d_col);
      const auto qres = quantize_blockwise(layer.weight, layer.hc, hard, qopts);
      const Matrix<double> errs = normalize_error_table(qres.error_table);

      TrainRecord rec;
      rec.epoch = epoch;
      rec.layer = li;
      rec.loss = soft_losses(fwd.probs, errs, cfg.target_bits, cfg.alpha);
      rec.hard_mean_bits = hard.mean();
      const Matrix<double> dp = loss_grad_probs(fwd.probs, errs, cfg.target_bits, cfg.alpha);
      add_inplace(grad_acc, backward(prep.adjacency(), prep.x0, res.params, fwd, dp));
      if (++pending == cfg.accum_steps) {
        adamw_step(res.params, grad_acc, state, cfg);
        grad_acc = zeros_like(res.params);
        pending = 0;
      }
      res.log.push_back(rec);
      if (on_record) on_record(rec);
    }
  }
  if (pending > 0) adamw_step(res.params, grad_acc, state, cfg);

  double bits = 0.0, soft_bits = 0.0;
  std::size_t cols = 0;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& prep = prepared[li];
    const ForwardCache c = encode_and_classify(prep.adjacency(), prep.x0, res.params);
    BitAssignment a = assignment_from_logits(c.logits, t_max);
    for (std::size_t j = 0; j < c.logits.rows(); ++j) {
      const auto pj = softmax(c.logits.row(j));
      for (std::size_t t = 0; t < pj.size(); ++t) soft_bits += static_cast<double>(t + 1) * pj[t];
    }
    bits += a.mean() * static_cast<double>(a.size());
    cols += a.size();
    res.final_assignments.push_back(std::move(a));
  }
  res.final_mean_bits = bits / static_cast<double>(cols);
  res.final_soft_mean_bits = soft_bits / static_cast<double>(cols);
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace mgptq
