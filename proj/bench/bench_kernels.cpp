#include <benchmark/benchmark.h>

#include <random>

#include "nvmap/dataset.hpp"
#include "nvmap/dynamics_oracle.hpp"
#include "nvmap/heatmap.hpp"
#include "nvmap/signal_model.hpp"

using namespace nvmap;

namespace {

QuantumNode make_node(int n) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> par(-100e3, 100e3), perp(2e3, 102e3);
  std::vector<Nucleus> nuclei;
  for (int j = 0; j < n; ++j) nuclei.push_back({par(gen), perp(gen)});
  return {nuclei, 0.056};
}

const PulseSequence kN256{256, 10e-6, 40e-6, 1000};

template <bool Serial>
void BM_SurvivalProbability(benchmark::State& state) {
  const auto node = make_node(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto t = Serial ? serial::survival_probability(node, kN256) : survival_probability(node, kN256);
    benchmark::DoNotOptimize(t.values.data());
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_SurvivalProbability<true>)->Name("survival_probability/serial")->Arg(1)->Arg(20);
BENCHMARK(BM_SurvivalProbability<false>)->Name("survival_probability/openmp")->Arg(1)->Arg(20);

template <bool Serial>
void BM_OracleSurvival(benchmark::State& state) {
  const auto node = make_node(3);
  for (auto _ : state) {
    auto t = Serial ? serial::oracle_survival(node, kN256) : oracle_survival(node, kN256);
    benchmark::DoNotOptimize(t.values.data());
  }
}
BENCHMARK(BM_OracleSurvival<true>)->Name("oracle_survival/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_OracleSurvival<false>)->Name("oracle_survival/openmp")->Unit(benchmark::kMillisecond);

template <bool Serial>
void BM_GenerateRecords(benchmark::State& state) {
  const auto spec = GenerationSpec::for_regime(FieldRegime::high, 1000, 7);
  const auto count = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) {
    auto r = Serial ? serial::generate_records(spec, 0, count) : generate_records(spec, 0, count);
    benchmark::DoNotOptimize(r.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateRecords<true>)->Name("generate_records/serial")->Arg(100)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenerateRecords<false>)->Name("generate_records/openmp")->Arg(100)
    ->Unit(benchmark::kMillisecond);

std::vector<HeatImage> make_images(std::size_t count) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> par(-100e3, 100e3), perp(2e3, 102e3);
  std::uniform_int_distribution<int> n(1, 20);
  std::vector<std::vector<Nucleus>> nodes(count);
  for (auto& node : nodes)
    for (int j = n(gen); j > 0; --j) node.push_back({par(gen), perp(gen)});
  return render_targets(nodes, GridSpec{});
}

template <bool Serial>
void BM_PostProcessBatch(benchmark::State& state) {
  const auto images = make_images(static_cast<std::size_t>(state.range(0)));
  const GridSpec grid;
  for (auto _ : state) {
    auto d = Serial ? serial::post_process_batch(images, {}, grid)
                    : post_process_batch(images, {}, grid);
    benchmark::DoNotOptimize(d.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PostProcessBatch<true>)->Name("post_process_batch/serial")->Arg(256)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PostProcessBatch<false>)->Name("post_process_batch/openmp")->Arg(256)
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
