// Microbenchmarks for the hot paths: per-state checker suites, digesting and
// simulator step throughput.
#include <benchmark/benchmark.h>

#include <random>

#include "buddysim/safety.hpp"
#include "buddysim/sim.hpp"

using namespace buddysim;

namespace {

PoolConfig pool_b() {
  PoolConfig cfg;
  cfg.id = "POOL_B";
  cfg.max_sz = 64;
  cfg.n_max = 2;
  cfg.n_levels = 2;
  return cfg;
}

Scenario pair_scenario() {
  Scenario sc;
  sc.pools = {pool_b()};
  for (const char* id : {"t1", "t2"}) {
    ThreadSpec spec;
    spec.id = id;
    Op alloc;
    alloc.kind = Op::Kind::Alloc;
    alloc.pool = 0;
    alloc.size = 16;
    alloc.timeout = TimeoutMode::forever();
    Op free;
    free.kind = Op::Kind::Free;
    free.alloc_index = 0;
    spec.script = {alloc, free};
    sc.threads.push_back(spec);
  }
  for (const char* name : kCheckNames) sc.checks.insert(name);
  return sc;
}

KernelState mid_run_state() {
  Scenario sc = pair_scenario();
  Simulator sim(sc);
  auto& st = sim.mutable_state();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 25; ++i) {
    auto cands = sim.enabled(st, false);
    sim.apply(st, cands[rng() % cands.size()]);
    sim.normalize(st);
  }
  return st.kernel;
}

void BM_InvariantSuite(benchmark::State& state) {
  const KernelState s = mid_run_state();
  for (auto _ : state) benchmark::DoNotOptimize(check_all_invariants(s));
}
BENCHMARK(BM_InvariantSuite);

void BM_MemPartBruteForce(benchmark::State& state) {
  const KernelState s = mid_run_state();
  for (auto _ : state) benchmark::DoNotOptimize(check_mem_part(s));
}
BENCHMARK(BM_MemPartBruteForce);

void BM_MemPartIntervalOracle(benchmark::State& state) {
  const KernelState s = mid_run_state();
  for (auto _ : state) benchmark::DoNotOptimize(check_mem_part_intervals(s));
}
BENCHMARK(BM_MemPartIntervalOracle);

void BM_StateDigest(benchmark::State& state) {
  const KernelState s = mid_run_state();
  for (auto _ : state) benchmark::DoNotOptimize(state_digest(s));
}
BENCHMARK(BM_StateDigest);

void BM_RandomRunAllChecks(benchmark::State& state) {
  Scenario sc = pair_scenario();
  std::uint64_t steps = 0;
  for (auto _ : state) {
    auto res = run_random(sc, 42, 4000);
    steps += res.report.transitions;
    benchmark::DoNotOptimize(res);
  }
  state.counters["steps/s"] =
      benchmark::Counter(static_cast<double>(steps), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_RandomRunAllChecks);

void BM_RandomRunNoChecks(benchmark::State& state) {
  Scenario sc = pair_scenario();
  sc.checks.clear();
  std::uint64_t steps = 0;
  for (auto _ : state) {
    auto res = run_random(sc, 42, 4000);
    steps += res.report.transitions;
    benchmark::DoNotOptimize(res);
  }
  state.counters["steps/s"] =
      benchmark::Counter(static_cast<double>(steps), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_RandomRunNoChecks);

} // namespace

BENCHMARK_MAIN();
