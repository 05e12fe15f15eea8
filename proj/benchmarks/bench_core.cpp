#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ncbf/mlp.hpp"
#include "ncbf/relax.hpp"
#include "ncbf/trainer.hpp"
#include "ncbf/verifier.hpp"

using namespace ncbf;

namespace {

MlpParams net_for(int in, int width, int depth) {
    std::vector<int> dims{in};
    for (int i = 0; i < depth; ++i) dims.push_back(width);
    dims.push_back(1);
    return make_mlp(dims, 7);
}

void BM_Forward(benchmark::State& state) {
    const auto net = net_for(2, static_cast<int>(state.range(0)), 1);
    const State x = State::Constant(2, 0.3);
    for (auto _ : state) benchmark::DoNotOptimize(forward(net, x));
}
BENCHMARK(BM_Forward)->Arg(36)->Arg(256);

void BM_Jacobian(benchmark::State& state) {
    const auto net = net_for(2, static_cast<int>(state.range(0)), 1);
    const State x = State::Constant(2, 0.3);
    for (auto _ : state) benchmark::DoNotOptimize(jacobian(net, x));
}
BENCHMARK(BM_Jacobian)->Arg(36)->Arg(256);

// value and gradient enclosures on one small box
void BM_BoundNetwork(benchmark::State& state) {
    const int in = static_cast<int>(state.range(1));
    const auto net = net_for(in, static_cast<int>(state.range(0)), in == 2 ? 1 : 2);
    const HyperRect box(Vec::Constant(in, 0.1), Vec::Constant(in, 0.01));
    for (auto _ : state) benchmark::DoNotOptimize(bound_network(net, box, true));
}
BENCHMARK(BM_BoundNetwork)->Args({36, 2})->Args({64, 4});

void BM_Loss(benchmark::State& state) {
    const auto sys = make_system("pendulum");
    TrainConfig cfg;
    const auto net = net_for(2, 36, 1);
    const auto guide = net_for(2, 16, 1);
    const Dataset data = make_dataset(sys, guide, static_cast<std::size_t>(state.range(0)), cfg.dt_guide, 3);
    MlpParams grad;
    for (auto _ : state) benchmark::DoNotOptimize(cbvf_vi_loss(net, data.points, cfg.gamma, cfg.lambda, &grad));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Loss)->Arg(1000);

// full branch and bound on an untrained pendulum net
void BM_Verify(benchmark::State& state) {
    const auto sys = make_system("pendulum");
    const auto net = net_for(2, 36, 1);
    VerifierConfig cfg;
    cfg.eps_init = Vec::Constant(2, 0.2);
    cfg.t_gap = 0.05;
    cfg.threads = 1;
    for (auto _ : state) benchmark::DoNotOptimize(verify(net, sys, cfg));
}
BENCHMARK(BM_Verify)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
