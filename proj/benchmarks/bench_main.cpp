#include "bitsearch/agent.hpp"
#include "bitsearch/network.hpp"
#include "bitsearch/pareto.hpp"
#include "bitsearch/quantizer.hpp"
#include "bitsearch/training.hpp"

#include <benchmark/benchmark.h>

using namespace bitsearch;

namespace {

Architecture lenet() {
  Architecture a;
  a.input = {1, 12, 12};
  a.layers = {{LayerKind::conv2d, 16, 5}, {LayerKind::conv2d, 32, 3}, {LayerKind::dense, 128, 0},
              {LayerKind::dense, 10, 0}};
  return a;
}

Tensor random_batch(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(0.0, 1.0);
  return t;
}

void BM_QuantizeLayer(benchmark::State& state) {
  Rng rng(1);
  std::vector<double> w(static_cast<std::size_t>(state.range(0)));
  for (auto& v : w) v = rng.uniform(-0.3, 0.3);
  std::vector<double> out(w.size());
  for (auto _ : state) {
    quantize_into(w, 3, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QuantizeLayer)->Arg(1 << 10)->Arg(1 << 16);

void BM_Forward(benchmark::State& state) {
  const NetworkSpec spec = build_spec(lenet());
  Rng rng(2);
  const NetworkWeights w = init_weights(spec, rng);
  const Tensor x = random_batch({32, 1, 12, 12}, rng);
  const QuantAssignment a({2, 2, 4, 2});
  const bool quantized = state.range(0) != 0;
  for (auto _ : state) {
    Tensor logits = quantized ? forward(spec, w, x, a) : forward(spec, w, x);
    benchmark::DoNotOptimize(logits.data().data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1);

void BM_TrainStep(benchmark::State& state) {
  const NetworkSpec spec = build_spec(lenet());
  Rng rng(3);
  const NetworkWeights w = init_weights(spec, rng);
  const Tensor x = random_batch({32, 1, 12, 12}, rng);
  std::vector<int> y(32);
  for (auto& v : y) v = static_cast<int>(rng.below(10));
  NetworkWeights grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_and_gradient(spec, w, x, y, std::nullopt, grad));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainStep);

void BM_PolicyStep(benchmark::State& state) {
  Rng rng(4);
  const AgentParams params = AgentParams::initialized(AgentArch{}, rng);
  StateEmbedding e;
  e.values = {0.25, 0.35, 0.57, 0.14, 0.5, 0.6, 0.97};
  PolicyRunner runner(params);
  for (auto _ : state) {
    runner.reset();
    benchmark::DoNotOptimize(runner.act(e, {}, &rng).action);
  }
}
BENCHMARK(BM_PolicyStep);

void BM_ParetoFrontier(benchmark::State& state) {
  Rng rng(5);
  std::vector<ParetoPoint> pts(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pts) {
    p.quant = rng.uniform(0.1, 1.0);
    p.acc = rng.uniform(0.0, 1.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(pareto_frontier(pts).size());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ParetoFrontier)->Arg(81)->Arg(1 << 14);

}  // namespace

BENCHMARK_MAIN();
