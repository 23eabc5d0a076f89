// Serial reference vs OpenMP path for the three parallel kernels.

#include <benchmark/benchmark.h>

#include "cqcd/censoring.hpp"
#include "cqcd/simulation.hpp"
#include "cqcd/srp_numerics.hpp"

namespace {

const cqcd::DistributionPair& unit_pair() {
    static const auto pair = cqcd::gaussian_mean_shift(0.0, 1.0, 1.0);
    return pair;
}

void BM_OptimizeSerial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(cqcd::optimize_policy_serial(unit_pair(), 0.1, 1e-3));
}

void BM_OptimizeParallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(cqcd::optimize_policy(unit_pair(), 0.1, 1e-3));
}

void BM_KernelSerial(benchmark::State& state) {
    const auto policy = cqcd::optimize_policy(unit_pair(), 0.1, 1e-3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            cqcd::build_srp_kernel_serial(unit_pair(), policy, 200.0, 0.1, cqcd::Regime::PreChange));
    }
}

void BM_KernelParallel(benchmark::State& state) {
    const auto policy = cqcd::optimize_policy(unit_pair(), 0.1, 1e-3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cqcd::build_srp_kernel(unit_pair(), policy, 200.0, 0.1, cqcd::Regime::PreChange));
    }
}

cqcd::Experiment replica_experiment() {
    cqcd::ExperimentConfig cfg;
    cfg.policy = cqcd::PolicyChoice::Censoring;
    cfg.epsilon = 0.1;
    cfg.runs = 200;
    return cqcd::Experiment(cfg);
}

void BM_ReplicasSerial(benchmark::State& state) {
    const auto exp = replica_experiment();
    for (auto _ : state) benchmark::DoNotOptimize(exp.estimate_arl(100.0, cqcd::Execution::Serial));
}

void BM_ReplicasParallel(benchmark::State& state) {
    const auto exp = replica_experiment();
    for (auto _ : state) benchmark::DoNotOptimize(exp.estimate_arl(100.0, cqcd::Execution::Parallel));
}

}  // namespace

BENCHMARK(BM_OptimizeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_OptimizeParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReplicasSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReplicasParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
