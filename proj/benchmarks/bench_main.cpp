#include <benchmark/benchmark.h>

#include "neurules/activation_store.hpp"
#include "neurules/grounding_tabular.hpp"
#include "neurules/mlp.hpp"
#include "neurules/predicates.hpp"
#include "neurules/protocol.hpp"
#include "neurules/rng.hpp"
#include "neurules/rules.hpp"
#include "neurules/tree.hpp"

namespace {

using namespace neurules;

ActivationDump make_dump(std::size_t n, std::size_t h, std::uint32_t classes) {
  Pcg32 rng(1, 1);
  ActivationDump d;
  d.n = n;
  d.h = h;
  d.num_classes = classes;
  d.values.resize(n * h);
  for (auto& v : d.values) v = static_cast<float>(rng.uniform(-2, 2));
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(static_cast<std::uint32_t>(i % classes));
  return d;
}

void BM_MinePredicates(benchmark::State& state) {
  const auto d = make_dump(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(mine_predicates(d, 15));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}
BENCHMARK(BM_MinePredicates)->Args({1000, 32})->Args({10000, 64})->Args({10000, 768})->Unit(benchmark::kMillisecond);

void BM_FitTree(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Pcg32 rng(2, 1);
  std::vector<double> x(n * 30);
  for (auto& v : x) v = static_cast<double>(rng.bounded(2));
  std::vector<std::uint32_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<std::uint32_t>(x[i * 30] != x[i * 30 + 1]);
  for (auto _ : state) benchmark::DoNotOptimize(fit_tree({x, n, 30}, y, 2, TreeParams{}));
}
BENCHMARK(BM_FitTree)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Distill(benchmark::State& state) {
  const auto d = make_dump(5000, 64, 2);
  const auto pset = mine_predicates(d, 15);
  const auto bits = evaluate_predicates(pset, d);
  for (auto _ : state) benchmark::DoNotOptimize(distill(bits, d.labels, 2, TreeParams{}));
}
BENCHMARK(BM_Distill)->Unit(benchmark::kMillisecond);

void BM_TrainXor(benchmark::State& state) {
  const auto ds = generate_xor(800, 3);
  MlpConfig c;
  c.layer_sizes = {10, 64, 32, 2};
  c.epochs = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train_mlp(c, ds));
}
BENCHMARK(BM_TrainXor)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_Synthesize(benchmark::State& state) {
  Pcg32 rng(3, 1);
  GroundingDataset gd;
  gd.d = 3;
  for (int i = 0; i < 400; ++i) {
    const double a = rng.uniform(0, 1), b = rng.uniform(0, 1), c = rng.uniform(0, 1);
    gd.rows.insert(gd.rows.end(), {a, b, c});
    const bool t = (a > 0.5) != (b > 0.5);
    gd.targets.push_back(t);
    (t ? gd.num_active : gd.num_inactive) += 1;
    ++gd.n;
  }
  SynthesisParams p;
  p.max_size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(synthesize_expression(gd, p));
}
BENCHMARK(BM_Synthesize)->Arg(3)->Arg(5)->Arg(7)->Unit(benchmark::kMillisecond);

void BM_NladRoundTrip(benchmark::State& state) {
  const auto d = make_dump(10000, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(decode_activation_dump(encode_activation_dump(d)));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(d.values.size() * sizeof(float)));
}
BENCHMARK(BM_NladRoundTrip)->Unit(benchmark::kMillisecond);

void BM_ProtocolResponse(benchmark::State& state) {
  OracleResponse r;
  r.id = 42;
  r.activations = std::vector<double>(768, 0.123456789);
  r.prediction = 3;
  for (auto _ : state) benchmark::DoNotOptimize(decode_response(encode_response(r)));
}
BENCHMARK(BM_ProtocolResponse);

}  // namespace
BENCHMARK_MAIN();
