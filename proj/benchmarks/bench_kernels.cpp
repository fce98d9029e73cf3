#include <benchmark/benchmark.h>

#include <random>

#include "uedge/quant.hpp"
#include "uedge/tensor.hpp"

namespace {

using namespace uedge;

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

ConvParams conv3x3(std::int64_t cin, std::int64_t cout) {
  ConvParams p;
  p.kh = p.kw = 3;
  p.c_in = cin;
  p.c_out = cout;
  p.kernel = noise(static_cast<std::size_t>(9 * cin * cout), 2);
  p.bias = noise(static_cast<std::size_t>(cout), 3);
  return p;
}

// Args: spatial side, channels in = channels out.
void BM_Conv2d(benchmark::State& state) {
  const std::int64_t side = state.range(0), c = state.range(1);
  set_num_threads(1);
  const ConvParams p = conv3x3(c, c);
  const Tensor x({1, side, side, c}, noise(static_cast<std::size_t>(side * side * c), 1));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
  state.SetItemsProcessed(state.iterations() * side * side * c * c * 9);
}
BENCHMARK(BM_Conv2d)->Args({128, 16})->Args({64, 64})->Args({32, 64})->Unit(benchmark::kMicrosecond);

void BM_QConv2d(benchmark::State& state) {
  const std::int64_t side = state.range(0), c = state.range(1);
  const ConvParams p = conv3x3(c, c);
  const QuantKernel k = quantize_kernel(p.kernel, 3, 3, c, c);
  const QuantParams in_qp = activation_params(-1.0f, 1.0f);
  const std::vector<std::int32_t> bias = quantize_bias(p.bias, in_qp.scale, k.qp.scale);
  const QuantTensor x = quantize(Tensor({1, side, side, c}, noise(static_cast<std::size_t>(side * side * c), 1)), in_qp);
  const QuantParams out_qp = activation_params(-8.0f, 8.0f);
  for (auto _ : state) benchmark::DoNotOptimize(qconv2d(x, k, bias, out_qp));
  state.SetItemsProcessed(state.iterations() * side * side * c * c * 9);
}
BENCHMARK(BM_QConv2d)->Args({128, 16})->Args({64, 64})->Args({32, 64})->Unit(benchmark::kMicrosecond);

void BM_MaxPool2(benchmark::State& state) {
  const Tensor x({1, 128, 128, 16}, noise(128 * 128 * 16, 4));
  for (auto _ : state) benchmark::DoNotOptimize(maxpool2(x));
}
BENCHMARK(BM_MaxPool2)->Unit(benchmark::kMicrosecond);

void BM_UpConv2(benchmark::State& state) {
  ConvParams p;
  p.kh = p.kw = 2;
  p.c_in = 32;
  p.c_out = 16;
  p.kernel = noise(4 * 32 * 16, 5);
  p.bias = noise(16, 6);
  const Tensor x({1, 64, 64, 32}, noise(64 * 64 * 32, 7));
  for (auto _ : state) benchmark::DoNotOptimize(upconv2(x, p));
}
BENCHMARK(BM_UpConv2)->Unit(benchmark::kMicrosecond);

}  // namespace
