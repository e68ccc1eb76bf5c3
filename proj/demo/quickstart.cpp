// Train a small allocator on synthetic layers, then quantize a held-out
// layer with it and compare against uniform 2/3-bit GPTQ.
#include <cstdio>

#include "mgptq/mgptq.hpp"

using namespace mgptq;

int main() {
  SyntheticSpec spec;
  spec.d_row = 128;
  spec.d_col = 128;
  spec.samples = 256;

  std::vector<TrainLayer> layers;
  for (int i = 0; i < 4; ++i) {
    const auto l = make_synthetic_layer(spec, 100 + i);
    layers.push_back({"layer" + std::to_string(i), l.weight, synthetic_hessian(l)});
  }
  AllocatorShape shape;
  shape.d_gnn = 64;
  shape.hidden = 64;
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.seed = 1;
  const auto trained = train(layers, cfg, init_params(shape, 1));
  std::printf("trained in %.2fs, mean bits %.3f\n", trained.wall_time, trained.final_mean_bits);

  const auto test = make_synthetic_layer(spec, 999);
  const auto hc = synthetic_hessian(test);
  CalibrationSet<double> calib;
  calib.add(test.calib);

  const auto mixed = infer_assignment(test.weight, hc, trained.params, {});
  const auto q_mixed = quantize_blockwise(test.weight, hc, mixed, {});
  const auto q_split = quantize_blockwise(test.weight, hc, split_assignment(spec.d_col, 2, 3), {});
  const auto hist = mixed.histogram();
  std::printf("allocation: %zu/%zu/%zu/%zu columns at 1/2/3/4 bits\n", hist[0], hist[1], hist[2], hist[3]);
  std::printf("proxy loss mixed %.5f (%.3f bits), split %.5f (2.5 bits)\n",
              proxy_loss(test.weight, q_mixed.quantized, calib), mixed.mean(),
              proxy_loss(test.weight, q_split.quantized, calib));
}
