#pragma once

// JSON run reports. Everything outside the top-level "timing" object is a
// deterministic function of the inputs and configuration; wall-clock
// measurements live only under "timing".

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mgptq/gptq.hpp"
#include "mgptq/tensor_file.hpp"

namespace mgptq {

inline constexpr const char* kReportSchema = "mgptq.report/1";

struct LayerReport {
  std::string name;
  std::size_t d_row = 0;
  std::size_t d_col = 0;
  std::optional<double> proxy_loss;
  double mean_bits = 0.0;
  std::vector<std::size_t> bit_histogram;
  double block_error_sum = 0.0;
  double quantize_seconds = 0.0;
  double allocate_seconds = 0.0;
};

template <Real T>
LayerReport layer_report(std::string name, const QuantResult<T>& r, double allocate_seconds = 0.0) {
  LayerReport l;
  l.name = std::move(name);
  l.d_row = r.quantized.rows();
  l.d_col = r.quantized.cols();
  l.proxy_loss = r.proxy_loss;
  l.mean_bits = r.assignment.mean();
  l.bit_histogram = r.assignment.histogram();
  l.block_error_sum = r.block_error_sum();
  l.quantize_seconds = r.wall_time;
  l.allocate_seconds = allocate_seconds;
  return l;
}

inline nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

class Report {
 public:
  Report(std::string command, std::string method) {
    json_["schema"] = kReportSchema;
    json_["command"] = std::move(command);
    json_["method"] = std::move(method);
  }

  void set_config(nlohmann::ordered_json config) { json_["config"] = std::move(config); }
  void set_seed(std::uint64_t seed) { json_["seed"] = seed; }
  void add_layer(const LayerReport& l) { layers_.push_back(l); }
  void set_extra(const std::string& key, nlohmann::ordered_json value) { extra_[key] = std::move(value); }

  const std::vector<LayerReport>& layers() const noexcept { return layers_; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = json_;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    nlohmann::ordered_json timing_layers = nlohmann::ordered_json::array();
    std::size_t columns = 0;
    double bits = 0.0, block_err = 0.0, proxy = 0.0, quant_s = 0.0, alloc_s = 0.0;
    bool all_proxy = !layers_.empty();
    for (const auto& l : layers_) {
      nlohmann::ordered_json e;
      e["name"] = l.name;
      e["d_row"] = l.d_row;
      e["d_col"] = l.d_col;
      e["proxy_loss"] = optional_number(l.proxy_loss);
      e["mean_bits"] = l.mean_bits;
      e["bit_histogram"] = l.bit_histogram;
      e["block_error_sum"] = l.block_error_sum;
      layers.push_back(std::move(e));
      nlohmann::ordered_json t;
      t["name"] = l.name;
      t["allocate_seconds"] = l.allocate_seconds;
      t["quantize_seconds"] = l.quantize_seconds;
      timing_layers.push_back(std::move(t));
      columns += l.d_col;
      bits += l.mean_bits * static_cast<double>(l.d_col);
      block_err += l.block_error_sum;
      if (l.proxy_loss) proxy += *l.proxy_loss;
      else all_proxy = false;
      quant_s += l.quantize_seconds;
      alloc_s += l.allocate_seconds;
    }
    j["layers"] = std::move(layers);
    nlohmann::ordered_json totals;
    totals["layers"] = layers_.size();
    totals["columns"] = columns;
    totals["mean_bits"] = columns ? bits / static_cast<double>(columns) : 0.0;
    totals["proxy_loss"] = all_proxy ? nlohmann::ordered_json(proxy) : nlohmann::ordered_json();
    totals["block_error_sum"] = block_err;
    j["totals"] = std::move(totals);
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    nlohmann::ordered_json timing;
    timing["layers"] = std::move(timing_layers);
    timing["allocate_seconds"] = alloc_s;
    timing["quantize_seconds"] = quant_s;
    j["timing"] = std::move(timing);
    return j;
  }

  std::string dump() const { return to_json().dump(2) + "\n"; }

  void write(const std::filesystem::path& path) const {
    const std::string s = dump();
    TensorFile::write_atomic(path, std::span<const std::uint8_t>(
                                       reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }

 private:
  nlohmann::ordered_json json_;
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
  std::vector<LayerReport> layers_;
};

// Report JSON without the "timing" object, for determinism comparisons.
inline nlohmann::ordered_json without_timing(nlohmann::ordered_json j) {
  j.erase("timing");
  return j;
}

}  // namespace mgptq
