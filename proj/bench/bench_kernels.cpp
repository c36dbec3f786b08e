// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "mdiqkd/optics.h"
#include "mdiqkd/session.h"

namespace {

using namespace mdiqkd;

SessionConfig bench_session(std::uint64_t rounds) {
  SessionConfig c;
  c.n_rounds = rounds;
  c.keep_sifted = false;
  return c;
}

void BM_SessionSerial(benchmark::State& state) {
  const SessionConfig c = bench_session(static_cast<std::uint64_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(run_session_serial(c).tallies.rounds);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SessionParallel(benchmark::State& state) {
  const SessionConfig c = bench_session(static_cast<std::uint64_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(run_session(c).tallies.rounds);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_HomSerial(benchmark::State& state) {
  const PulsePair p = hom_probe_pulse(0.03);
  const InterferenceContext ctx;
  const DetectorModel det;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        hom_coincidence_prob_serial(p, p, ctx, det, static_cast<std::uint64_t>(state.range(0)), 1).probability);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_HomParallel(benchmark::State& state) {
  const PulsePair p = hom_probe_pulse(0.03);
  const InterferenceContext ctx;
  const DetectorModel det;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        hom_coincidence_prob(p, p, ctx, det, static_cast<std::uint64_t>(state.range(0)), 1).probability);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_SessionSerial)->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SessionParallel)->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HomSerial)->Arg(1 << 18)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HomParallel)->Arg(1 << 18)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
