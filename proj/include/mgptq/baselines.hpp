#pragma once

// Reference quantizers: round-to-nearest at fixed bits, GPTQ with a constant
// assignment, and the MLP-PTQ ablation (allocator without graph propagation,
// fed with rows of the Hessian factor).

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mgptq/allocator.hpp"
#include "mgptq/error.hpp"
#include "mgptq/gptq.hpp"
#include "mgptq/training.hpp"

namespace mgptq {

enum class BaselineMethod { rtn, gptq_uniform, mlp_ptq };

inline BaselineMethod parse_baseline_method(std::string_view s) {
  if (s == "rtn") return BaselineMethod::rtn;
  if (s == "gptq-uniform") return BaselineMethod::gptq_uniform;
  if (s == "mlp-ptq") return BaselineMethod::mlp_ptq;
  throw ValidationError("unknown baseline method '" + std::string(s) +
                        "' (expected rtn, gptq-uniform or mlp-ptq)");
}

inline const char* baseline_name(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::rtn: return "rtn";
    case BaselineMethod::gptq_uniform: return "gptq-uniform";
    case BaselineMethod::mlp_ptq: return "mlp-ptq";
  }
  return "?";
}

struct BaselineSpec {
  BaselineMethod method = BaselineMethod::rtn;
  int bits = 2;              // rtn, gptq-uniform
  double target_bits = 2.5;  // mlp-ptq
  int t_max = kDefaultMaxBits;

  void validate() const {
    if (method == BaselineMethod::mlp_ptq) {
      if (!(target_bits >= 1.0 && target_bits <= t_max))
        throw ValidationError("target bits must lie in [1, t_max]");
    } else if (bits < 1 || bits > t_max) {
      throw ValidationError("bits must lie in [1, " + std::to_string(t_max) + "]");
    }
  }
};

// First ⌊d/2⌋ columns at `low` bits, the rest at `high` bits.
inline BitAssignment split_assignment(std::size_t d_col, int low, int high, int t_max = kDefaultMaxBits) {
  std::vector<int> widths(d_col, high);
  for (std::size_t j = 0; j < d_col / 2; ++j) widths[j] = low;
  return BitAssignment(std::move(widths), t_max);
}

// Trains the MLP-PTQ allocator over `layers`.
inline TrainResult train_mlp_allocator(const std::vector<TrainLayer>& layers, TrainConfig cfg,
                                       const AllocatorShape& shape, PipelineOptions opts = {}) {
  opts.encoder = Encoder::mlp;
  return train(layers, cfg, init_params(shape, cfg.seed), opts);
}

// `mlp_params` must hold a trained MLP-PTQ allocator when method is mlp_ptq.
template <Real T>
QuantResult<T> run_baseline(const BaselineSpec& spec, const Matrix<T>& w,
                            const TriangularMatrix<double>& hc,
                            const BlockwiseOptions& qopts = {},
                            const AllocatorParams* mlp_params = nullptr) {
  spec.validate();
  switch (spec.method) {
    case BaselineMethod::rtn:
      return quantize_columns_independent(w, BitAssignment::uniform(w.cols(), spec.bits, spec.t_max));
    case BaselineMethod::gptq_uniform:
      return quantize_blockwise(w, hc, BitAssignment::uniform(w.cols(), spec.bits, spec.t_max), qopts);
    case BaselineMethod::mlp_ptq: {
      if (!mlp_params) throw ValidationError("mlp-ptq baseline needs trained allocator parameters");
      PipelineOptions popts;
      popts.encoder = Encoder::mlp;
      const BitAssignment a = infer_assignment(w, hc, *mlp_params, popts);
      return quantize_blockwise(w, hc, a, qopts);
    }
  }
  throw ValidationError("unknown baseline method");
}

}  // namespace mgptq
