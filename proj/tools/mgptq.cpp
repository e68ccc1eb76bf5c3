// Command-line front end: Gram/Hessian construction, allocator training,
// mixed-precision quantization, baselines, evaluation and synthetic data.
//
// Exit codes: 0 success, 2 usage/validation, 3 corrupt data, 4 numeric failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mgptq/mgptq.hpp"

namespace fs = std::filesystem;
using namespace mgptq;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

TensorFile read_tensor_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw ValidationError("no such file '" + p.string() + "'");
  return TensorFile::read(p);
}

// Rethrows an error with the offending file named in its message, keeping its kind.
template <typename F>
auto with_file(const fs::path& p, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const FormatError& e) {
    const std::string what = e.what();
    if (what.find(p.string()) != std::string::npos) throw;
    throw FormatError(p.string() + ": " + what);
  } catch (const DimensionError& e) {
    throw DimensionError(p.string() + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(p.string() + ": " + e.what());
  }
}

// stem → path for every regular file in `dir`, sorted by stem.
std::map<std::string, fs::path> files_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("'" + dir.string() + "' is not a directory");
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string stem = e.path().stem().string();
    if (!out.emplace(stem, e.path()).second)
      throw ValidationError("two files share the stem '" + stem + "' in " + dir.string());
  }
  return out;
}

struct LayerPaths {
  std::string name;
  fs::path weights;
  fs::path hessian;
};

std::vector<LayerPaths> pair_layers(const fs::path& weights, const fs::path& hessians) {
  if (fs::is_regular_file(weights) && fs::is_regular_file(hessians))
    return {{weights.stem().string(), weights, hessians}};
  const auto w = files_by_stem(weights);
  const auto h = files_by_stem(hessians);
  std::vector<LayerPaths> out;
  for (const auto& [stem, path] : w) {
    auto it = h.find(stem);
    if (it == h.end()) throw ValidationError("weight file '" + path.string() + "' has no matching Hessian");
    out.push_back({stem, path, it->second});
  }
  for (const auto& [stem, path] : h)
    if (!w.count(stem)) throw ValidationError("Hessian file '" + path.string() + "' has no matching weights");
  if (out.empty()) throw ValidationError("no layers found in '" + weights.string() + "'");
  return out;
}

template <Real T>
Matrix<T> load_weights(const fs::path& p) {
  return with_file(p, [&] { return load_matrix_section<T>(read_tensor_file(p), "weight"); });
}

HessianData load_hessian_file(const fs::path& p) {
  return with_file(p, [&] { return load_hessian(read_tensor_file(p)); });
}

CalibrationSet<double> load_calibration(const std::vector<std::string>& paths) {
  CalibrationSet<double> set;
  for (const auto& p : paths)
    with_file(p, [&] {
      set.add(load_matrix_section<double>(read_tensor_file(p), "x"));
      return 0;
    });
  return set;
}

// Proxy loss from raw calibration rows when given, else from the Gram stored
// alongside the Hessian factor.
template <Real T>
std::optional<double> layer_proxy_loss(const Matrix<T>& w, const Matrix<T>& q, const HessianData& h,
                                       const CalibrationSet<double>* calib) {
  if (calib && calib->samples() > 0) return proxy_loss(w, q, *calib);
  if (h.gram) return proxy_loss_from_gram(w, q, h.gram->gram(), h.gram->samples_seen());
  return std::nullopt;
}

void print_json_line(const nlohmann::ordered_json& j) { std::cout << j.dump() << "\n"; }

// --- gram ---------------------------------------------------------------

int cmd_gram(const std::vector<std::string>& calib, const std::string& out) {
  if (calib.empty()) throw ValidationError("gram: at least one --calib file is required");
  std::optional<GramAccumulator> acc;
  for (const auto& p : calib) {
    with_file(p, [&] {
      const auto x = load_matrix_section<double>(read_tensor_file(p), "x");
      if (!acc) acc.emplace(x.cols());
      acc->accumulate(x);
      return 0;
    });
  }
  gram_file(*acc).write(out);
  nlohmann::ordered_json j;
  j["d_col"] = acc->d_col();
  j["samples"] = acc->samples_seen();
  print_json_line(j);
  return 0;
}

// --- hessian ------------------------------------------------------------

int cmd_hessian(const std::string& gram_path, double damp, const std::string& out) {
  const GramAccumulator acc = with_file(gram_path, [&] { return load_gram(read_tensor_file(gram_path)); });
  const auto hc = build_hessian_cholesky(acc, damp);
  hessian_file(hc, acc, damp).write(out);
  nlohmann::ordered_json j;
  j["d_col"] = hc.n();
  j["lambda"] = damping(acc.gram(), damp);
  print_json_line(j);
  return 0;
}

// --- train --------------------------------------------------------------

struct TrainArgs {
  std::string weights, hessians, config, out, log;
  std::string encoder = "gcn";
};

std::vector<TrainLayer> load_train_layers(const std::vector<LayerPaths>& paths) {
  std::vector<TrainLayer> layers;
  for (const auto& lp : paths) {
    TrainLayer l;
    l.name = lp.name;
    l.weight = load_weights<double>(lp.weights);
    l.hc = load_hessian_file(lp.hessian).hc;
    if (l.weight.cols() != l.hc.n())
      throw DimensionError("layer '" + lp.name + "': weight " + l.weight.shape_string() +
                           " does not match Hessian width " + std::to_string(l.hc.n()));
    layers.push_back(std::move(l));
  }
  return layers;
}

nlohmann::ordered_json loss_json(const LossBreakdown& l) {
  nlohmann::ordered_json j;
  j["l_quant"] = l.l_quant;
  j["l_bit"] = l.l_bit;
  j["total"] = l.total;
  j["mean_bits_soft"] = l.mean_bits_soft;
  return j;
}

nlohmann::ordered_json record_json(const TrainRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["layer"] = r.layer;
  j["l_quant"] = r.loss.l_quant;
  j["l_bit"] = r.loss.l_bit;
  j["total"] = r.loss.total;
  j["hard_mean_bits"] = r.hard_mean_bits;
  j["soft_mean_bits"] = r.loss.mean_bits_soft;
  return j;
}

// Mean loss over the records of the last epoch.
std::optional<LossBreakdown> final_loss(const std::vector<TrainRecord>& log) {
  if (log.empty()) return std::nullopt;
  const std::size_t last = log.back().epoch;
  LossBreakdown sum;
  std::size_t n = 0;
  for (const auto& r : log) {
    if (r.epoch != last) continue;
    sum.l_quant += r.loss.l_quant;
    sum.l_bit += r.loss.l_bit;
    sum.total += r.loss.total;
    sum.mean_bits_soft += r.loss.mean_bits_soft;
    ++n;
  }
  const double inv = 1.0 / static_cast<double>(n);
  sum.l_quant *= inv;
  sum.l_bit *= inv;
  sum.total *= inv;
  sum.mean_bits_soft *= inv;
  return sum;
}

RunConfig load_config(const std::string& path) { return path.empty() ? RunConfig{} : RunConfig::load(path); }

int cmd_train(TrainArgs args) {
  const RunConfig cfg = load_config(args.config);
  if (args.weights.empty() && cfg.weights_dir) args.weights = *cfg.weights_dir;
  if (args.hessians.empty() && cfg.hessians_dir) args.hessians = *cfg.hessians_dir;
  if (args.out.empty() && cfg.out) args.out = *cfg.out;
  if (args.weights.empty() || args.hessians.empty() || args.out.empty())
    throw ValidationError("train: --weights, --hessians and --out are required");
  const Encoder encoder = args.encoder == "gcn" ? Encoder::gcn
                          : args.encoder == "mlp"
                              ? Encoder::mlp
                              : throw ValidationError("encoder must be gcn or mlp");
  const auto layers = load_train_layers(pair_layers(args.weights, args.hessians));
  const TrainResult res =
      train(layers, cfg.train, init_params(cfg.shape, cfg.train.seed), cfg.pipeline(encoder));
  params_file(res.params, encoder).write(args.out);

  std::string log;
  for (const auto& r : res.log) log += record_json(r).dump() + "\n";
  const fs::path log_path = args.log.empty() ? fs::path(args.out + ".log.jsonl") : fs::path(args.log);
  TensorFile::write_atomic(log_path, std::span<const std::uint8_t>(
                                         reinterpret_cast<const std::uint8_t*>(log.data()), log.size()));

  nlohmann::ordered_json j;
  const auto fl = final_loss(res.log);
  j["final_loss"] = fl ? loss_json(*fl) : nlohmann::ordered_json();
  j["final_mean_bits"] = res.final_mean_bits;
  j["final_soft_mean_bits"] = res.final_soft_mean_bits;
  j["target_bits"] = cfg.train.target_bits;
  j["layers"] = layers.size();
  j["epochs"] = cfg.train.epochs;
  print_json_line(j);
  return 0;
}

// --- quantize -------------------------------------------------------------

struct QuantizeArgs {
  std::string weights, hessian, params, out, report, config;
  std::vector<std::string> calib;
  std::optional<std::size_t> block;
  std::optional<std::string> precision;
  bool no_intra_block = false;
};

template <Real T>
int run_quantize(const QuantizeArgs& args, const RunConfig& cfg, std::size_t block) {
  const Matrix<T> w = load_weights<T>(args.weights);
  const HessianData h = load_hessian_file(args.hessian);
  const LoadedParams lp = with_file(args.params, [&] { return load_params(read_tensor_file(args.params)); });
  if (w.cols() != h.hc.n())
    throw DimensionError("weight " + w.shape_string() + " does not match Hessian width " + std::to_string(h.hc.n()));
  const CalibrationSet<double> calib = load_calibration(args.calib);

  const auto t0 = Clock::now();
  const BitAssignment assign = infer_assignment(w, h.hc, lp.params, cfg.pipeline(lp.encoder));
  const double alloc_s = seconds_since(t0);

  BlockwiseOptions q;
  q.block_size = std::min(block, w.cols());
  q.intra_block = cfg.intra_block && !args.no_intra_block;
  QuantResult<T> r = quantize_blockwise(w, h.hc, assign, q);
  r.proxy_loss = layer_proxy_loss(w, r.quantized, h, &calib);
  quantized_file(r).write(args.out);

  Report rep("quantize", lp.encoder == Encoder::gcn ? "mg-ptq" : "mlp-ptq");
  auto cj = cfg.to_json();
  cj["block_size"] = q.block_size;
  cj["intra_block"] = q.intra_block;
  cj["precision"] = std::is_same_v<T, float> ? "f32" : "f64";
  rep.set_config(cj);
  rep.set_seed(cfg.train.seed);
  rep.add_layer(layer_report(fs::path(args.weights).stem().string(), r, alloc_s));
  if (!args.report.empty()) rep.write(args.report);
  print_json_line(without_timing(rep.to_json())["totals"]);
  return 0;
}

int cmd_quantize(const QuantizeArgs& args) {
  RunConfig cfg = load_config(args.config);
  if (args.precision) {
    if (*args.precision == "f32") cfg.precision = Precision::f32;
    else if (*args.precision == "f64") cfg.precision = Precision::f64;
    else throw ValidationError("precision must be f32 or f64");
  }
  const std::size_t block = args.block.value_or(cfg.block_size);
  if (block < 1) throw ValidationError("block size must be >= 1");
  return cfg.precision == Precision::f32 ? run_quantize<float>(args, cfg, block)
                                         : run_quantize<double>(args, cfg, block);
}

// --- baseline -------------------------------------------------------------

struct BaselineArgs {
  std::string method, weights, hessian, out, report, config, compare_params;
  std::vector<std::string> calib;
  std::optional<int> bits;
  std::optional<double> target_bits;
  std::optional<std::size_t> block;
};

struct LayerOutcome {
  double proxy = 0.0;
  double mean_bits = 0.0;
  std::size_t cols = 0;
  bool has_proxy = false;
};

nlohmann::ordered_json outcome_json(const std::vector<LayerOutcome>& v) {
  double proxy = 0.0, bits = 0.0;
  std::size_t cols = 0;
  bool all = !v.empty();
  for (const auto& o : v) {
    proxy += o.proxy;
    bits += o.mean_bits * static_cast<double>(o.cols);
    cols += o.cols;
    all = all && o.has_proxy;
  }
  nlohmann::ordered_json j;
  j["proxy_loss"] = all ? nlohmann::ordered_json(proxy) : nlohmann::ordered_json();
  j["mean_bits"] = cols ? bits / static_cast<double>(cols) : 0.0;
  return j;
}

int cmd_baseline(const BaselineArgs& args) {
  RunConfig cfg = load_config(args.config);
  BaselineSpec spec;
  spec.method = parse_baseline_method(args.method);
  spec.t_max = cfg.shape.t_max;
  if (spec.method == BaselineMethod::mlp_ptq) {
    if (args.bits) throw ValidationError("mlp-ptq takes --target-bits, not --bits");
    spec.target_bits = args.target_bits.value_or(cfg.train.target_bits);
    cfg.train.target_bits = spec.target_bits;
  } else {
    if (!args.bits) throw ValidationError(args.method + " requires --bits");
    spec.bits = *args.bits;
  }
  spec.validate();
  cfg.validate();
  if (!args.compare_params.empty() && spec.method != BaselineMethod::mlp_ptq)
    throw ValidationError("--compare-params is only meaningful for mlp-ptq");

  const auto paths = pair_layers(args.weights, args.hessian);
  const bool multi = paths.size() > 1 || fs::is_directory(args.weights);
  if (multi && !args.calib.empty())
    throw ValidationError("--calib applies to single-layer runs; directory runs use the Gram in each Hessian file");
  if (multi) fs::create_directories(args.out);
  const CalibrationSet<double> calib = load_calibration(args.calib);

  std::optional<AllocatorParams> mlp;
  double train_s = 0.0;
  if (spec.method == BaselineMethod::mlp_ptq) {
    const auto t0 = Clock::now();
    mlp = train_mlp_allocator(load_train_layers(paths), cfg.train, cfg.shape, cfg.pipeline()).params;
    train_s = seconds_since(t0);
  }
  std::optional<LoadedParams> gcn;
  if (!args.compare_params.empty())
    gcn = with_file(args.compare_params, [&] { return load_params(read_tensor_file(args.compare_params)); });

  Report rep("baseline", baseline_name(spec.method));
  nlohmann::ordered_json cj = cfg.to_json();
  const std::size_t block = args.block.value_or(cfg.block_size);
  cj["block_size"] = block;
  if (spec.method == BaselineMethod::mlp_ptq) cj["target_bits"] = spec.target_bits;
  else cj["bits"] = spec.bits;
  rep.set_config(cj);
  rep.set_seed(cfg.train.seed);

  std::vector<LayerOutcome> mlp_out, gcn_out;
  nlohmann::ordered_json cmp_layers = nlohmann::ordered_json::array();
  for (const auto& lp : paths) {
    const Matrix<float> w = load_weights<float>(lp.weights);
    const HessianData h = load_hessian_file(lp.hessian);
    BlockwiseOptions q;
    q.block_size = std::min(block, w.cols());
    q.intra_block = cfg.intra_block;

    const auto t0 = Clock::now();
    std::optional<BitAssignment> assign;
    if (mlp) assign = infer_assignment(w, h.hc, *mlp, cfg.pipeline(Encoder::mlp));
    const double alloc_s = seconds_since(t0);
    QuantResult<float> r = assign ? quantize_blockwise(w, h.hc, *assign, q)
                                  : run_baseline(spec, w, h.hc, q, nullptr);
    r.proxy_loss = layer_proxy_loss(w, r.quantized, h, &calib);
    const fs::path out = multi ? fs::path(args.out) / (lp.name + ".mgqt") : fs::path(args.out);
    quantized_file(r).write(out);
    rep.add_layer(layer_report(lp.name, r, alloc_s));

    if (gcn) {
      const BitAssignment ga = infer_assignment(w, h.hc, gcn->params, cfg.pipeline(gcn->encoder));
      QuantResult<float> gr = quantize_blockwise(w, h.hc, ga, q);
      gr.proxy_loss = layer_proxy_loss(w, gr.quantized, h, &calib);
      LayerOutcome m{r.proxy_loss.value_or(0.0), r.assignment.mean(), w.cols(), r.proxy_loss.has_value()};
      LayerOutcome g{gr.proxy_loss.value_or(0.0), gr.assignment.mean(), w.cols(), gr.proxy_loss.has_value()};
      nlohmann::ordered_json e;
      e["name"] = lp.name;
      e["gcn"] = outcome_json({g});
      e["mlp"] = outcome_json({m});
      cmp_layers.push_back(std::move(e));
      mlp_out.push_back(m);
      gcn_out.push_back(g);
    }
  }
  if (gcn) {
    nlohmann::ordered_json cmp;
    cmp["target_bits"] = spec.target_bits;
    cmp["layers"] = std::move(cmp_layers);
    cmp["gcn"] = outcome_json(gcn_out);
    cmp["mlp"] = outcome_json(mlp_out);
    rep.set_extra("comparison", std::move(cmp));
  }
  if (mlp) rep.set_extra("mlp_training_layers", paths.size());
  nlohmann::ordered_json j = rep.to_json();
  if (mlp) j["timing"]["train_seconds"] = train_s;
  if (!args.report.empty()) {
    const std::string s = j.dump(2) + "\n";
    TensorFile::write_atomic(args.report, std::span<const std::uint8_t>(
                                              reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }
  print_json_line(j["totals"]);
  return 0;
}

// --- eval -------------------------------------------------------------------

int cmd_eval(const std::string& orig, const std::string& quant, const std::vector<std::string>& calib_paths,
             const std::string& report) {
  if (calib_paths.empty()) throw ValidationError("eval: at least one --calib file is required");
  const Matrix<double> w = load_weights<double>(orig);
  const TensorFile qf = with_file(quant, [&] { return read_tensor_file(quant); });
  const Matrix<double> q = with_file(quant, [&] {
    return qf.contains("dequant") ? load_matrix_section<double>(qf, "dequant")
                                  : load_matrix_section<double>(qf, "weight");
  });
  if (w.rows() != q.rows() || w.cols() != q.cols())
    throw DimensionError("original " + w.shape_string() + " and quantized " + q.shape_string() + " differ in shape");
  const CalibrationSet<double> calib = load_calibration(calib_paths);

  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  j["command"] = "eval";
  j["d_row"] = w.rows();
  j["d_col"] = w.cols();
  j["proxy_loss"] = proxy_loss(w, q, calib);
  double max_abs = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) max_abs = std::max(max_abs, std::abs(w.data()[i] - q.data()[i]));
  j["max_abs_error"] = max_abs;
  if (qf.contains("bits")) {
    const auto bits = with_file(quant, [&] { return qf.get("bits").to_doubles(); });
    int t_max = kDefaultMaxBits;
    for (double b : bits) t_max = std::max(t_max, static_cast<int>(b));
    std::vector<int> widths(bits.begin(), bits.end());
    const BitAssignment a(std::move(widths), t_max);
    j["mean_bits"] = a.mean();
    j["bit_histogram"] = a.histogram();
  }
  if (!report.empty()) {
    const std::string s = j.dump(2) + "\n";
    TensorFile::write_atomic(report, std::span<const std::uint8_t>(
                                         reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }
  print_json_line(j);
  return 0;
}

// --- synth ------------------------------------------------------------------

int cmd_synth(const fs::path& dir, std::size_t layers, const SyntheticSpec& spec, std::uint64_t seed,
              double damp) {
  if (layers < 1) throw ValidationError("synth: --layers must be >= 1");
  for (const char* sub : {"weights", "calib", "hessians"}) fs::create_directories(dir / sub);
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string name = "layer" + std::to_string(i);
    const SyntheticLayer l = make_synthetic_layer(spec, seed * 1000 + i);
    GramAccumulator acc(spec.d_col);
    acc.accumulate(l.calib);
    weights_file(Matrix<float>::cast(l.weight)).write(dir / "weights" / (name + ".mgqt"));
    calibration_file(l.calib).write(dir / "calib" / (name + ".mgqt"));
    hessian_file(build_hessian_cholesky(acc, damp), acc, damp).write(dir / "hessians" / (name + ".mgqt"));
  }
  nlohmann::ordered_json j;
  j["layers"] = layers;
  j["dir"] = dir.string();
  print_json_line(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-precision graph-guided post-training quantization"};
  app.require_subcommand(1);

  std::vector<std::string> gram_calib;
  std::string gram_out;
  auto* gram = app.add_subcommand("gram", "Accumulate 2·XᵀX over calibration batches");
  gram->add_option("--calib", gram_calib, "Calibration tensor files (section 'x')")->required();
  gram->add_option("--out", gram_out, "Output Gram file")->required();

  std::string hess_gram, hess_out;
  double hess_damp = kDefaultDampFrac;
  auto* hess = app.add_subcommand("hessian", "Damped inverse-Hessian upper Cholesky factor");
  hess->add_option("--gram", hess_gram, "Gram file")->required();
  hess->add_option("--damp", hess_damp, "Damping as a fraction of the mean Gram diagonal");
  hess->add_option("--out", hess_out, "Output Hessian file")->required();

  TrainArgs targs;
  auto* tr = app.add_subcommand("train", "Train the bit-width allocator over a set of layers");
  tr->add_option("--weights", targs.weights, "Directory of weight files");
  tr->add_option("--hessians", targs.hessians, "Directory of Hessian files (paired by file stem)");
  tr->add_option("--config", targs.config, "JSON run configuration");
  tr->add_option("--out", targs.out, "Output parameter file");
  tr->add_option("--log", targs.log, "Training log (JSON lines); default <out>.log.jsonl");
  tr->add_option("--encoder", targs.encoder, "gcn or mlp");

  QuantizeArgs qargs;
  auto* qu = app.add_subcommand("quantize", "Allocate bit-widths and quantize one layer");
  qu->add_option("--weights", qargs.weights, "Weight file")->required();
  qu->add_option("--hessian", qargs.hessian, "Hessian file")->required();
  qu->add_option("--params", qargs.params, "Trained allocator parameters")->required();
  qu->add_option("--block", qargs.block, "Block size");
  qu->add_option("--out", qargs.out, "Output quantized file")->required();
  qu->add_option("--report", qargs.report, "JSON report");
  qu->add_option("--calib", qargs.calib, "Calibration files for the proxy loss");
  qu->add_option("--config", qargs.config, "JSON run configuration");
  qu->add_option("--precision", qargs.precision, "f32 or f64");
  qu->add_flag("--no-intra-block", qargs.no_intra_block, "Only compensate at block boundaries");

  BaselineArgs bargs;
  auto* bl = app.add_subcommand("baseline", "Run a reference quantizer (rtn, gptq-uniform, mlp-ptq)");
  bl->add_option("--method", bargs.method, "rtn, gptq-uniform or mlp-ptq")->required();
  bl->add_option("--bits", bargs.bits, "Bit-width for rtn and gptq-uniform");
  bl->add_option("--target-bits", bargs.target_bits, "Average bit target for mlp-ptq");
  bl->add_option("--weights", bargs.weights, "Weight file or directory")->required();
  bl->add_option("--hessian,--hessians", bargs.hessian, "Hessian file or directory")->required();
  bl->add_option("--out", bargs.out, "Output file (or directory for directory input)")->required();
  bl->add_option("--report", bargs.report, "JSON report");
  bl->add_option("--calib", bargs.calib, "Calibration files (single-layer runs)");
  bl->add_option("--config", bargs.config, "JSON run configuration");
  bl->add_option("--block", bargs.block, "Block size");
  bl->add_option("--compare-params", bargs.compare_params,
                 "GCN allocator parameters to compare against (mlp-ptq only)");

  std::string ev_orig, ev_quant, ev_report;
  std::vector<std::string> ev_calib;
  auto* ev = app.add_subcommand("eval", "Proxy loss and weight error of a quantized layer");
  ev->add_option("--orig", ev_orig, "Original weight file")->required();
  ev->add_option("--quant", ev_quant, "Quantized file")->required();
  ev->add_option("--calib", ev_calib, "Calibration files")->required();
  ev->add_option("--report", ev_report, "JSON report");

  std::string sy_dir;
  std::size_t sy_layers = 8;
  std::uint64_t sy_seed = 0;
  double sy_damp = kDefaultDampFrac;
  SyntheticSpec sy_spec;
  auto* sy = app.add_subcommand("synth", "Write a synthetic layer set (weights, calib, hessians)");
  sy->add_option("--out-dir", sy_dir, "Output directory")->required();
  sy->add_option("--layers", sy_layers, "Number of layers");
  sy->add_option("--rows", sy_spec.d_row, "Rows per weight matrix");
  sy->add_option("--cols", sy_spec.d_col, "Columns per weight matrix");
  sy->add_option("--samples", sy_spec.samples, "Calibration rows per layer");
  sy->add_option("--decades", sy_spec.salience_decades, "Column scale spread in decades");
  sy->add_option("--correlation", sy_spec.correlation, "AR(1) feature correlation");
  sy->add_option("--seed", sy_seed, "Seed");
  sy->add_option("--damp", sy_damp, "Hessian damping fraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gram) return cmd_gram(gram_calib, gram_out);
    if (*hess) return cmd_hessian(hess_gram, hess_damp, hess_out);
    if (*tr) return cmd_train(targs);
    if (*qu) return cmd_quantize(qargs);
    if (*bl) return cmd_baseline(bargs);
    if (*ev) return cmd_eval(ev_orig, ev_quant, ev_calib, ev_report);
    if (*sy) return cmd_synth(sy_dir, sy_layers, sy_spec, sy_seed, sy_damp);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
