// Serial reference kernels against the blocked OpenMP kernels, plus the
// per-frame latency of the full-size network.

#include <benchmark/benchmark.h>

#include <vector>

#include "lcodom/kernels.hpp"
#include "lcodom/rng.hpp"
#include "lcodom/runtime.hpp"
#include "lcodom/training.hpp"

namespace {

using namespace lcodom;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <bool kReference>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1);
  const auto b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (kReference) {
      kernels::reference::gemm<float>(n, n, n, a.data(), n, 1, b.data(), n, 1, c.data(), n, 1, false);
    } else {
      kernels::gemm<float>(n, n, n, a.data(), n, 1, b.data(), n, 1, c.data(), n, 1, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}
BENCHMARK_TEMPLATE(BM_Gemm, true)->Name("gemm/reference")->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_Gemm, false)->Name("gemm/optimized")->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

// Conv shapes of the camera network: first layer, a 5x5 stride-2 layer and a 3x3 layer.
const kernels::ConvGeometry kConvShapes[] = {
    {6, 128, 416, 64, 7, 7, 2, 2, 3, 3},
    {64, 64, 208, 128, 5, 5, 2, 2, 2, 2},
    {256, 16, 52, 256, 3, 3, 1, 1, 1, 1},
};

template <bool kReference>
void BM_Conv(benchmark::State& state) {
  const auto& g = kConvShapes[state.range(0)];
  const auto input = random_vec(g.in_channels * g.in_h * g.in_w, 3);
  const auto weight = random_vec(g.out_channels * g.patch_size(), 4);
  const auto bias = random_vec(g.out_channels, 5);
  std::vector<float> out(g.out_channels * g.out_positions());
  for (auto _ : state) {
    if constexpr (kReference) {
      kernels::reference::conv_forward(g, input.data(), weight.data(), bias.data(), out.data());
    } else {
      kernels::conv_forward(g, input.data(), weight.data(), bias.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(g.out_channels * g.out_positions() * g.patch_size()),
                                                benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}
BENCHMARK_TEMPLATE(BM_Conv, true)->Name("conv/reference")->DenseRange(0, 2)->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK_TEMPLATE(BM_Conv, false)->Name("conv/optimized")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_Linear(benchmark::State& state) {
  // The laser network's 115200 -> 512 layer.
  const std::size_t in = 115200, out = 512;
  const auto w = random_vec(in * out, 6);
  const auto x = random_vec(in, 7);
  const auto b = random_vec(out, 8);
  std::vector<float> y(out);
  for (auto _ : state) {
    kernels::linear_forward(out, in, w.data(), b.data(), x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["bytes/s"] = benchmark::Counter(static_cast<double>(in * out * sizeof(float)),
                                              benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Linear)->Name("linear/laser_features")->Unit(benchmark::kMillisecond);

void BM_Inference(benchmark::State& state) {
  retain_freed_memory();
  const ModelConfig config = ModelConfig::paper();
  OdometryNet<float> net(config);
  ParamStore<float> params(9);
  net.register_laser(params);
  net.register_cam(params);
  net.register_fusion_heads(params);
  Tensor32 scans(config.laser.input_shape());
  Tensor32 images(config.cam.input_shape());
  Rng rng(10);
  for (auto& v : scans.values()) v = static_cast<float>(rng.uniform());
  for (auto& v : images.values()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  infer(net, params, scans, images);
  for (auto _ : state) benchmark::DoNotOptimize(infer(net, params, scans, images));
}
BENCHMARK(BM_Inference)->Name("inference/full_size_frame")->Unit(benchmark::kMillisecond)->MinTime(3.0);

}  // namespace

BENCHMARK_MAIN();
