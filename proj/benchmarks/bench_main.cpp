#include <benchmark/benchmark.h>

#include "flowedge/autograd.hpp"
#include "flowedge/bench_eval.hpp"
#include "flowedge/inference.hpp"
#include "flowedge/pixel_objective.hpp"
#include "flowedge/rng.hpp"
#include "flowedge/synthdata.hpp"
#include "flowedge/velocity_net.hpp"

using namespace flowedge;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    return randn(rng, {r, c});
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_VelocityForward(benchmark::State& state) {
    const VelocityNet net(NetConfig{}, 1);
    const NetConfig& cfg = net.config();
    const Tensor z = random_matrix(cfg.grid() * cfg.grid(), cfg.latent_channels(), 3);
    const Tensor cond = random_matrix(cfg.grid() * cfg.grid(), cfg.latent_channels(), 4);
    for (auto _ : state) {
        Graph g(&net.params(), false);
        benchmark::DoNotOptimize(net.forward(g, z, 0.5, &cond, true).value());
    }
}
BENCHMARK(BM_VelocityForward)->Unit(benchmark::kMillisecond);

void BM_FinetuneLossBackward(benchmark::State& state) {
    VelocityNet net(NetConfig{}, 1);
    net.attach_lora(2);
    apply_partition(net, Phase::finetune);
    const Sample s = generate_one(SceneSpec{}, 0);
    Rng rng(5);
    TrainingSample ts;
    ts.z0 = PatchCodec::to_tokens(net.codec().encode(s.gt));
    ts.eps = randn(rng, ts.z0.shape());
    ts.t = 0.4;
    ts.cond = net.condition_tokens(s.image);
    ts.gt = s.gt;
    const std::vector<TrainingSample> batch{ts};
    for (auto _ : state) {
        Graph g(&net.params());
        benchmark::DoNotOptimize(g.backward(total_loss(g, net, batch, LossOptions{})));
    }
}
BENCHMARK(BM_FinetuneLossBackward)->Unit(benchmark::kMillisecond);

void BM_PredictEdges(benchmark::State& state) {
    VelocityNet net(NetConfig{}, 1);
    net.attach_lora(2);
    const Sample s = generate_one(SceneSpec{}, 0);
    InferOptions opts;
    opts.steps = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(predict_edges(net, s.image, 1, opts));
}
BENCHMARK(BM_PredictEdges)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_NmsThin(benchmark::State& state) {
    const Sample s = generate_one(SceneSpec{}, 1);
    for (auto _ : state) benchmark::DoNotOptimize(nms_thin(s.gt, 0.5));
}
BENCHMARK(BM_NmsThin);

void BM_MatchBoundaries(benchmark::State& state) {
    const Sample s = generate_one(SceneSpec{}, 2);
    const BinaryMap pred = binarize(s.gt, 0.2);
    const double d = state.range(0) / 10.0;
    for (auto _ : state) benchmark::DoNotOptimize(match_boundaries(pred, s.gt, d, 0.3));
}
BENCHMARK(BM_MatchBoundaries)->Arg(7)->Arg(30);

void BM_SweepImage(benchmark::State& state) {
    const Sample s = generate_one(SceneSpec{}, 3);
    SweepOptions opts;
    opts.mode = state.range(0) ? EvalMode::seval : EvalMode::ceval;
    for (auto _ : state) benchmark::DoNotOptimize(sweep_image(s.gt, s.gt, opts));
}
BENCHMARK(BM_SweepImage)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
