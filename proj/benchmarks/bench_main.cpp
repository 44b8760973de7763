#include <benchmark/benchmark.h>

#include "sbanm/densities.hpp"
#include "sbanm/init.hpp"
#include "sbanm/simulate.hpp"
#include "sbanm/vem.hpp"

namespace {

using namespace sbanm;

const SimNetwork& experiment2_network() {
  static const SimNetwork sim = [] {
    const auto [p, sizes] = experiment2_spec();
    Rng rng = make_rng(1, "network");
    return gen_network(p, sizes, rng);
  }();
  return sim;
}

void BM_GaussianKernel(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  BlockParams b{std::vector<double>(K, 0.5), std::vector<double>(K, 1.5), 0.3};
  const GaussianKernel g(b);
  std::vector<double> x(K, 0.1);
  for (auto _ : state) {
    x[0] += 1e-9;
    benchmark::DoNotOptimize(g.log_density(x.data()));
  }
}
BENCHMARK(BM_GaussianKernel)->Arg(1)->Arg(3)->Arg(8);

void BM_PairDensities(benchmark::State& state) {
  const auto& sim = experiment2_network();
  const ModelParams p = experiment2_spec().first;
  for (auto _ : state) {
    PairDensities d(sim.net, p);
    benchmark::DoNotOptimize(d.noise(0));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sim.net.num_pairs()));
}
BENCHMARK(BM_PairDensities)->Unit(benchmark::kMillisecond);

void BM_TauMap(benchmark::State& state) {
  const auto& sim = experiment2_network();
  const ModelParams p = experiment2_spec().first;
  const PairDensities d(sim.net, p);
  VariationalState st = random_init(sim.net.num_nodes(), p.Q, 1);
  st.P = {0.1, 0.9, 0.9, 0.9};
  for (auto _ : state) benchmark::DoNotOptimize(tau_fixed_point_map(d, p, st));
}
BENCHMARK(BM_TauMap)->Unit(benchmark::kMillisecond);

void BM_FitExperiment2(benchmark::State& state) {
  const auto& sim = experiment2_network();
  FitConfig cfg;
  cfg.Q = 4;
  cfg.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit(sim.net, cfg).elbo);
}
BENCHMARK(BM_FitExperiment2)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
