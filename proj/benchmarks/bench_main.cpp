#include <benchmark/benchmark.h>

#include <set>

#include "vaxsignal/inference.hpp"
#include "vaxsignal/model.hpp"
#include "vaxsignal/sampler.hpp"
#include "vaxsignal/simulation.hpp"

namespace {

using namespace vaxsignal;

SimulatedDataset dataset(std::size_t per_cluster) {
  SimulationSpec spec;
  spec.cluster_sizes = {per_cluster, 3 * per_cluster, 2 * per_cluster};
  Rng rng(7);
  return simulate(spec, rng);
}

void BM_LogLikelihood(benchmark::State& st) {
  const auto ds = dataset(static_cast<std::size_t>(st.range(0)));
  const auto hyper = Hyperparams::dpm();
  const auto state = init_state(ds.table, hyper, 1);
  for (auto _ : st) benchmark::DoNotOptimize(log_likelihood(state, ds.table));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(ds.beta_truth.size()));
}
BENCHMARK(BM_LogLikelihood)->Arg(10)->Arg(50);

void BM_Sweep(benchmark::State& st) {
  const auto ds = dataset(static_cast<std::size_t>(st.range(0)));
  const auto hyper = st.range(1) ? Hyperparams::dpm() : Hyperparams::il_informative();
  ChainConfig config;
  Sampler sampler(hyper, init_state(ds.table, hyper, 1), config);
  Rng rng(3);
  for (auto _ : st) sampler.sweep(ds.table, rng);
  st.SetItemsProcessed(st.iterations());
}
BENCHMARK(BM_Sweep)->Args({10, 1})->Args({50, 1})->Args({50, 0})->Unit(benchmark::kMicrosecond);

void BM_SignalProbability(benchmark::State& st) {
  const std::size_t J = 300, T = static_cast<std::size_t>(st.range(0));
  Rng rng(11);
  std::vector<double> beta(J * T);
  for (auto& b : beta) b = rng.standard_normal();
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < J; ++j) ids.push_back("ae" + std::to_string(j));
  const auto draws = PosteriorDraws::from_matrix(ids, beta, {}, PriorMode::IL, 1);
  std::set<std::size_t> nc;
  for (std::size_t j = 0; j < J; j += 5) nc.insert(j);
  for (auto _ : st) benchmark::DoNotOptimize(nc_signal_probability(draws, nc, 35, 0.9));
}
BENCHMARK(BM_SignalProbability)->Arg(1000)->Arg(3000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
