// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP block kernel for candidate rollouts.
#include <benchmark/benchmark.h>

#include "lmpc/gmm.hpp"
#include "lmpc/rollout.hpp"

namespace {

struct Fixture {
  lmpc::PosteriorEnsemble ens;
  lmpc::EnsembleBelief belief;
  std::vector<double> candidates;
  std::vector<double> out;
  std::size_t K, T;

  Fixture(std::size_t E, std::size_t K_, std::size_t T_) : K(K_), T(T_) {
    lmpc::RssmConfig c;
    ens = lmpc::init_ensemble(c, E, 7);
    belief = lmpc::initial_belief(ens);
    lmpc::Rng rng(11);
    auto g = lmpc::initial_gmm(1, T, c.action_dim, 0.5, -1.0, 1.0);
    candidates = lmpc::sample_candidates(g, K, -1.0, 1.0, rng);
    out.resize(K * E);
  }
  lmpc::RolloutJob job() const { return {&ens, &belief, candidates, K, T, 3}; }
};

void BM_RolloutSerial(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 12);
  for (auto _ : state) {
    lmpc::rollout_serial(f.job(), f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

void BM_RolloutParallel(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 12);
  for (auto _ : state) {
    lmpc::rollout_parallel(f.job(), f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

}  // namespace

BENCHMARK(BM_RolloutSerial)->Args({5, 200})->Args({1, 1000})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RolloutParallel)->Args({5, 200})->Args({1, 1000})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
