#include <numbers>

#include <benchmark/benchmark.h>

#include "qfl/federate.hpp"
#include "qfl/random.hpp"

using namespace qfl;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> d(-std::numbers::pi, std::numbers::pi);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = d(rng);
    }
    return v;
}

void BM_RotationGate(benchmark::State& state) {
    const int q = static_cast<int>(state.range(0));
    StateVector s(q);
    int target = 0;
    for (auto _ : state) {
        s.apply_ry(target, 0.3);
        target = (target + 1) % q;
        benchmark::DoNotOptimize(s[0]);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.dimension()));
}
BENCHMARK(BM_RotationGate)->DenseRange(2, 14, 4);

void BM_Cnot(benchmark::State& state) {
    const int q = static_cast<int>(state.range(0));
    StateVector s(q);
    s.apply_ry(0, 0.3);
    for (auto _ : state) {
        s.apply_cnot(0, q - 1);
        benchmark::DoNotOptimize(s[0]);
    }
}
BENCHMARK(BM_Cnot)->DenseRange(2, 14, 4);

void BM_Forward(benchmark::State& state) {
    const int q = static_cast<int>(state.range(0));
    const int l = static_cast<int>(state.range(1));
    Rng rng(1);
    const auto spec = build_circuit(q, l);
    const auto params = random_vector(spec.num_parameters, rng);
    const auto input = amplitude_encode(random_vector(std::size_t{1} << q, rng), q);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(spec, params, input));
    }
}
BENCHMARK(BM_Forward)->Args({4, 2})->Args({6, 2})->Args({10, 2})->Args({6, 10});

void BM_ParameterShiftGradient(benchmark::State& state) {
    const int q = static_cast<int>(state.range(0));
    const int l = static_cast<int>(state.range(1));
    Rng rng(2);
    const auto spec = build_circuit(q, l);
    const auto params = random_vector(spec.num_parameters, rng);
    std::vector<LabeledSample> batch;
    for (int i = 0; i < 16; ++i) {
        batch.push_back({random_vector(std::size_t{1} << q, rng), i % 2});
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(parameter_shift_gradient(spec, params, ClassMapping{2}, batch));
    }
    state.counters["parameters"] = static_cast<double>(spec.num_parameters);
}
BENCHMARK(BM_ParameterShiftGradient)->Args({2, 1})->Args({4, 2})->Args({6, 2})->Unit(benchmark::kMillisecond);

void BM_Aggregate(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto p = static_cast<std::size_t>(state.range(1));
    Rng rng(3);
    std::vector<ParameterVector> params(n);
    std::vector<std::size_t> sizes(n);
    for (std::size_t c = 0; c < n; ++c) {
        params[c] = random_vector(p, rng);
        sizes[c] = 10 + c;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(aggregate(params, sizes));
    }
}
BENCHMARK(BM_Aggregate)->Args({5, 24})->Args({100, 60})->Args({100, 600});

void BM_FederatedRound(benchmark::State& state) {
    SimulationConfig config;
    config.num_qubits = static_cast<int>(state.range(0));
    config.num_layers = 2;
    config.num_clients = 5;
    config.max_parallel_clients = 1;
    Simulation sim(config, load_builtin("digits8x8"));
    for (auto _ : state) {
        benchmark::DoNotOptimize(sim.run_round());
    }
}
BENCHMARK(BM_FederatedRound)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
