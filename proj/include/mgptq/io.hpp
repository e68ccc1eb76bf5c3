#pragma once

// Run configuration and the mapping of domain objects onto tensor files.
//
// Section names used by each file kind:
//   weights      "weight"                       (d_row × d_col, f32 or f64)
//   calibration  "x"                            (rows × d_col)
//   gram         "gram", "samples"
//   hessian      "hc" (upper factor), "gram", "samples", "damp_frac", "lambda"
//   params       "shape" [d_gnn, hidden, t_max, ffnn_hidden], "W0", "W1",
//                "Wc", "bc", and "Wf", "bf" for a two-layer classifier,
//                "encoder" (0 = gcn, 1 = mlp)
//   quantized    "dequant" (f32), "codes" (u8), "bits" (u8), "scale", "zero"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"

#include "mgptq/allocator.hpp"
#include "mgptq/calibration.hpp"
#include "mgptq/error.hpp"
#include "mgptq/gptq.hpp"
#include "mgptq/tensor_file.hpp"
#include "mgptq/training.hpp"

namespace mgptq {

enum class Precision { f32, f64 };

struct RunConfig {
  TrainConfig train;
  std::size_t block_size = kDefaultBlockSize;
  double damp_frac = kDefaultDampFrac;
  AllocatorShape shape;
  Precision precision = Precision::f32;
  AdjacencyMode adjacency = AdjacencyMode::cholesky;
  bool intra_block = true;
  std::optional<std::string> weights_dir;
  std::optional<std::string> hessians_dir;
  std::optional<std::string> out;

  void validate() const {
    shape.validate();
    train.validate(shape.t_max);
    if (block_size < 1) throw ValidationError("block_size must be >= 1");
    if (!(damp_frac >= 0.0)) throw ValidationError("damp_frac must be >= 0");
  }

  PipelineOptions pipeline(Encoder encoder = Encoder::gcn) const {
    PipelineOptions p;
    p.encoder = encoder;
    p.adjacency = adjacency;
    p.block_size = block_size;
    p.intra_block = intra_block;
    return p;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = train.epochs;
    j["lr"] = train.lr;
    j["accum_steps"] = train.accum_steps;
    j["alpha"] = train.alpha;
    j["tau"] = train.tau;
    j["tau_final"] = train.tau_final ? nlohmann::ordered_json(*train.tau_final) : nlohmann::ordered_json();
    j["target_bits"] = train.target_bits;
    j["seed"] = train.seed;
    j["weight_decay"] = train.weight_decay;
    j["beta1"] = train.beta1;
    j["beta2"] = train.beta2;
    j["eps"] = train.eps;
    j["block_size"] = block_size;
    j["damp_frac"] = damp_frac;
    j["d_gnn"] = shape.d_gnn;
    j["hidden"] = shape.hidden;
    j["t_max"] = shape.t_max;
    j["ffnn_hidden"] = shape.ffnn_hidden;
    j["precision"] = precision == Precision::f32 ? "f32" : "f64";
    j["adjacency"] = adjacency == AdjacencyMode::cholesky ? "cholesky" : "symmetrized";
    j["intra_block"] = intra_block;
    return j;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    static const std::set<std::string> known{
        "epochs", "lr", "accum_steps", "alpha", "tau", "tau_final", "target_bits", "seed",
        "weight_decay", "beta1", "beta2", "eps", "block_size", "damp_frac", "d_gnn", "hidden",
        "t_max", "ffnn_hidden", "precision", "adjacency", "intra_block", "weights_dir",
        "hessians_dir", "out"};
    for (const auto& [key, _] : j.items())
      if (!known.count(key)) throw ValidationError("unknown config key '" + key + "'");
    RunConfig c;
    try {
      auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
      };
      get("epochs", c.train.epochs);
      get("lr", c.train.lr);
      get("accum_steps", c.train.accum_steps);
      get("alpha", c.train.alpha);
      get("tau", c.train.tau);
      if (j.contains("tau_final") && !j.at("tau_final").is_null())
        c.train.tau_final = j.at("tau_final").get<double>();
      get("target_bits", c.train.target_bits);
      get("seed", c.train.seed);
      get("weight_decay", c.train.weight_decay);
      get("beta1", c.train.beta1);
      get("beta2", c.train.beta2);
      get("eps", c.train.eps);
      get("block_size", c.block_size);
      get("damp_frac", c.damp_frac);
      get("d_gnn", c.shape.d_gnn);
      c.shape.hidden = c.shape.d_gnn;
      get("hidden", c.shape.hidden);
      get("t_max", c.shape.t_max);
      get("ffnn_hidden", c.shape.ffnn_hidden);
      get("intra_block", c.intra_block);
      if (j.contains("precision")) {
        const auto p = j.at("precision").get<std::string>();
        if (p == "f32") c.precision = Precision::f32;
        else if (p == "f64") c.precision = Precision::f64;
        else throw ValidationError("precision must be f32 or f64");
      }
      if (j.contains("adjacency")) {
        const auto a = j.at("adjacency").get<std::string>();
        if (a == "cholesky") c.adjacency = AdjacencyMode::cholesky;
        else if (a == "symmetrized") c.adjacency = AdjacencyMode::symmetrized;
        else throw ValidationError("adjacency must be cholesky or symmetrized");
      }
      if (j.contains("weights_dir")) c.weights_dir = j.at("weights_dir").get<std::string>();
      if (j.contains("hessians_dir")) c.hessians_dir = j.at("hessians_dir").get<std::string>();
      if (j.contains("out")) c.out = j.at("out").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("invalid config value: ") + e.what());
    }
    c.validate();
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
  }
};

// --- weights, calibration, Gram, Hessian --------------------------------

template <Real T>
Matrix<T> load_matrix_section(const TensorFile& f, const char* section) {
  const Tensor& t = f.get(section);
  if (t.dtype == DType::u8) throw FormatError(std::string("section '") + section + "' must be f32 or f64");
  return t.to_matrix<T>();
}

template <Real T>
TensorFile weights_file(const Matrix<T>& w) {
  TensorFile f;
  f.add(Tensor::from_matrix("weight", w));
  return f;
}

template <Real T>
TensorFile calibration_file(const Matrix<T>& x) {
  TensorFile f;
  f.add(Tensor::from_matrix("x", x));
  return f;
}

inline TensorFile gram_file(const GramAccumulator& acc) {
  TensorFile f;
  f.add(Tensor::from_matrix("gram", acc.gram()));
  f.add(Tensor::scalar("samples", static_cast<double>(acc.samples_seen())));
  return f;
}

inline GramAccumulator load_gram(const TensorFile& f) {
  const auto gram = load_matrix_section<double>(f, "gram");
  const double samples = f.get("samples").to_scalar();
  if (!(samples >= 0.0) || samples != std::floor(samples)) throw FormatError("invalid sample count");
  if (gram.rows() != gram.cols()) throw FormatError("Gram section is not square");
  return GramAccumulator(gram, static_cast<std::size_t>(samples));
}

struct HessianData {
  TriangularMatrix<double> hc;
  std::optional<GramAccumulator> gram;
};

inline TensorFile hessian_file(const TriangularMatrix<double>& hc, const GramAccumulator& acc,
                               double damp_frac) {
  TensorFile f;
  f.add(Tensor::from_matrix("hc", hc.full()));
  f.add(Tensor::from_matrix("gram", acc.gram()));
  f.add(Tensor::scalar("samples", static_cast<double>(acc.samples_seen())));
  f.add(Tensor::scalar("damp_frac", damp_frac));
  f.add(Tensor::scalar("lambda", damping(acc.gram(), damp_frac)));
  return f;
}

inline HessianData load_hessian(const TensorFile& f) {
  Matrix<double> full = load_matrix_section<double>(f, "hc");
  HessianData h;
  try {
    h.hc = TriangularMatrix<double>(std::move(full), Orientation::upper);
  } catch (const Error& e) {
    throw FormatError(std::string("section 'hc' is not a valid upper Cholesky factor: ") + e.what());
  }
  if (f.contains("gram")) h.gram = load_gram(f);
  return h;
}

// --- allocator parameters ----------------------------------------------

inline TensorFile params_file(const AllocatorParams& p, Encoder encoder) {
  TensorFile f;
  const std::vector<double> shape{static_cast<double>(p.shape.d_gnn), static_cast<double>(p.shape.hidden),
                                  static_cast<double>(p.shape.t_max),
                                  static_cast<double>(p.shape.ffnn_hidden)};
  f.add(Tensor::from_vector("shape", shape));
  f.add(Tensor::scalar("encoder", encoder == Encoder::gcn ? 0.0 : 1.0));
  f.add(Tensor::from_matrix("W0", p.w0));
  f.add(Tensor::from_matrix("W1", p.w1));
  if (p.two_layer_classifier()) {
    f.add(Tensor::from_matrix("Wf", p.wf));
    f.add(Tensor::from_vector("bf", p.bf));
  }
  f.add(Tensor::from_matrix("Wc", p.wc));
  f.add(Tensor::from_vector("bc", p.bc));
  return f;
}

struct LoadedParams {
  AllocatorParams params;
  Encoder encoder = Encoder::gcn;
};

inline LoadedParams load_params(const TensorFile& f) {
  const auto shape = f.get("shape").to_doubles();
  if (shape.size() != 4) throw FormatError("section 'shape' must hold 4 values");
  LoadedParams out;
  AllocatorParams& p = out.params;
  p.shape.d_gnn = static_cast<std::size_t>(shape[0]);
  p.shape.hidden = static_cast<std::size_t>(shape[1]);
  p.shape.t_max = static_cast<int>(shape[2]);
  p.shape.ffnn_hidden = static_cast<std::size_t>(shape[3]);
  if (f.contains("encoder")) out.encoder = f.get("encoder").to_scalar() == 0.0 ? Encoder::gcn : Encoder::mlp;
  p.w0 = load_matrix_section<double>(f, "W0");
  p.w1 = load_matrix_section<double>(f, "W1");
  if (p.shape.ffnn_hidden > 0) {
    p.wf = load_matrix_section<double>(f, "Wf");
    p.bf = f.get("bf").to_doubles();
  }
  p.wc = load_matrix_section<double>(f, "Wc");
  p.bc = f.get("bc").to_doubles();
  try {
    p.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent allocator parameters: ") + e.what());
  }
  return out;
}

// --- quantized output ----------------------------------------------------

template <Real T>
TensorFile quantized_file(const QuantResult<T>& r) {
  const std::size_t d_row = r.quantized.rows();
  const std::size_t d_col = r.quantized.cols();
  TensorFile f;
  f.add(Tensor::from_matrix("dequant", Matrix<float>::cast(r.quantized)));
  std::vector<std::uint8_t> codes(d_row * d_col);
  std::vector<std::uint8_t> bits(d_col);
  std::vector<double> scale(d_col), zero(d_col);
  for (std::size_t j = 0; j < d_col; ++j) {
    const auto& c = r.columns[j];
    for (std::size_t i = 0; i < d_row; ++i) codes[i * d_col + j] = c.codes[i];
    bits[j] = static_cast<std::uint8_t>(c.grid.bits);
    scale[j] = c.grid.scale;
    zero[j] = c.grid.zero;
  }
  f.add(Tensor::from_values<std::uint8_t>("codes", {d_row, d_col}, std::span<const std::uint8_t>(codes)));
  f.add(Tensor::from_vector("bits", bits));
  f.add(Tensor::from_vector("scale", scale));
  f.add(Tensor::from_vector("zero", zero));
  return f;
}

}  // namespace mgptq
