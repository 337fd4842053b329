#include <benchmark/benchmark.h>

#include "phasespace/estimators.hpp"
#include "phasespace/harness.hpp"
#include "phasespace/kernels.hpp"
#include "phasespace/projection.hpp"

using namespace phasespace;

namespace {

RunConfig bench_config(int depth, int gap) {
  RunConfig c;
  c.tree.depth = depth;
  c.tree.seed = 3;
  c.field.seed = 3;
  c.gap = gap;
  return c;
}

void BM_ApplyMultiplier(benchmark::State& state) {
  const TorusGrid g{1, 8.0, state.range(0)};
  RunConfig c;
  c.samples = state.range(0);
  SampledField f = make_field(c, g);
  const Multiplier m = psi_cone_hat(1, 0, -1);
  for (auto _ : state) benchmark::DoNotOptimize(apply_multiplier(f, m));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ApplyMultiplier)->RangeMultiplier(4)->Range(1 << 10, 1 << 16)->Complexity();

void BM_KappaDerivative(benchmark::State& state) {
  const TorusGrid g{1, 8.0, 1 << 14};
  for (auto _ : state) benchmark::DoNotOptimize(build_kappa_derivative(g, -1, 0, static_cast<int>(state.range(0)), 3));
}
BENCHMARK(BM_KappaDerivative)->DenseRange(0, 2);

void BM_BuildDictionary(benchmark::State& state) {
  const TorusGrid g{1, 8.0, 1 << 14};
  for (auto _ : state) benchmark::DoNotOptimize(build_dictionary(g, {KernelClass::Phi, -2, 12.0}, DictionarySpec{}));
}
BENCHMARK(BM_BuildDictionary)->Unit(benchmark::kMillisecond);

void BM_Assemble(benchmark::State& state) {
  RunConfig c = bench_config(static_cast<int>(state.range(0)), 0);
  const TorusGrid g = c.grid();
  TreeIndex t = expand_to_tree(make_tree(c));
  ProjectionEngine e(g, t, c.projection);
  SampledField f = make_field(c, g);
  e.assemble(f);  // warm the mollifier caches
  for (auto _ : state) benchmark::DoNotOptimize(e.assemble(f));
}
BENCHMARK(BM_Assemble)->DenseRange(1, 3)->Unit(benchmark::kMillisecond);

void BM_EstimateSize(benchmark::State& state) {
  RunConfig c = bench_config(2, 0);
  const TorusGrid g = c.grid();
  TreeIndex t = expand_to_tree(make_tree(c));
  SampledField f = make_field(c, g);
  DictionaryCache dicts(g, c.dictionary);
  estimate_size(f, t, c.ps, dicts);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_size(f, t, c.ps, dicts));
}
BENCHMARK(BM_EstimateSize)->Unit(benchmark::kMillisecond);

void BM_OfftreeTable(benchmark::State& state) {
  RunConfig c = bench_config(2, 1);
  const TorusGrid g = c.grid();
  TreeIndex t = expand_to_tree(make_tree(c));
  SampledField f = make_field(c, g);
  ProjectionEngine e(g, t, c.projection);
  SampledField gg = e.assemble(f).g;
  DictionaryCache dicts(g, c.dictionary);
  const std::vector<double> ps{static_cast<double>(state.range(0)) == 0 ? kInfinity : static_cast<double>(state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(OfftreeTable(gg, t, ps, t.finest_level() - 3, dicts));
}
BENCHMARK(BM_OfftreeTable)->Arg(2)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
