#include <benchmark/benchmark.h>

#include <numbers>

#include "kwp/dynamics.hpp"
#include "kwp/integrate.hpp"
#include "kwp/orbits.hpp"

using namespace kwp;

namespace {

Params reference(int k) { return Params::with_k(k, 5.0, 1.0, RotatingForcing{6.0}); }

const State kStart{0.05, 1.45, 0.3, -0.2};

void BM_RhsFull(benchmark::State& st) {
    const Params p = reference(10);
    double t = 0.0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(rhs_full(t, kStart, p));
        t += 1e-3;
    }
}
BENCHMARK(BM_RhsFull);

void BM_RhsModified(benchmark::State& st) {
    const Params p = reference(10);
    const BumpConfig bump{40.0, 0.01, 1e-3};
    double t = 0.0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(rhs_modified(t, kStart, p, bump));
        t += 1e-3;
    }
}
BENCHMARK(BM_RhsModified);

void BM_RhsAveraged(benchmark::State& st) {
    const Params p = reference(10);
    double t = 0.0;
    for (auto _ : st) {
        benchmark::DoNotOptimize(rhs_averaged(t, kStart, p));
        t += 1e-3;
    }
}
BENCHMARK(BM_RhsAveraged);

void BM_StrobeMapFull(benchmark::State& st) {
    const Params p = reference(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(strobe_map(kStart, 0.0, FullSystem{}, p, default_orbit_control()));
}
BENCHMARK(BM_StrobeMapFull)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_StrobeMapAveraged(benchmark::State& st) {
    const Params p = reference(10);
    for (auto _ : st) benchmark::DoNotOptimize(strobe_map(kStart, 0.0, AveragedSystem{}, p, default_orbit_control()));
}
BENCHMARK(BM_StrobeMapAveraged)->Unit(benchmark::kMillisecond);

void BM_MonodromyVar(benchmark::State& st) {
    const Params p = reference(10);
    const State seed = attractor_seed(FullSystem{}, p, 100 * p.T, State{0.05, 1.45, 0.0, 0.0});
    const PeriodicOrbit orbit = find_orbit_newton(FullSystem{}, p, seed);
    for (auto _ : st) benchmark::DoNotOptimize(monodromy_var(orbit));
}
BENCHMARK(BM_MonodromyVar)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
