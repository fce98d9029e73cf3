#include <benchmark/benchmark.h>

#include "uedge/calibrate.hpp"
#include "uedge/datagen.hpp"
#include "uedge/engine.hpp"

namespace {

using namespace uedge;

// Full 128x128 forward pass of the two presets; range(0) selects 6/40 or 6/64.
struct Model {
  Graph graph;
  WeightSet weights;
  QuantWeightSet quant;
  Tensor image;
};

const Model& model(bool cup) {
  static const auto make = [](const char* spec) {
    Model m;
    m.graph = build_graph(parse_spec(spec));
    m.weights = generate_random_weights(m.graph, 1);
    std::vector<Tensor> calib;
    for (int i = 0; i < 4; ++i) calib.push_back(gen_sample(random_spec(100, i, {}, 4)).image);
    m.quant = quantize_weights(m.graph, m.weights, calibrate(m.graph, m.weights, calib));
    m.image = gen_sample(random_spec(200, 0, {}, 4)).image;
    return m;
  };
  static const Model disc = make("6/40/Y/1.1");
  static const Model cup_model = make("6/64/Y/1.1");
  return cup ? cup_model : disc;
}

void BM_ForwardFloat(benchmark::State& state) {
  set_num_threads(1);
  const Model& m = model(state.range(0) == 1);
  const FloatExecutor exec(m.graph, m.weights);
  for (auto _ : state) benchmark::DoNotOptimize(exec.run(m.image));
}
BENCHMARK(BM_ForwardFloat)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ForwardQuant(benchmark::State& state) {
  set_num_threads(1);
  const Model& m = model(state.range(0) == 1);
  const QuantExecutor exec(m.graph, m.quant);
  for (auto _ : state) benchmark::DoNotOptimize(exec.run(m.image));
}
BENCHMARK(BM_ForwardQuant)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
