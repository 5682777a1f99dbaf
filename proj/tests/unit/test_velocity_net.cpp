#include <algorithm>

#include "doctest.h"
#include "fd_check.hpp"
#include "flowedge/adamw.hpp"
#include "flowedge/flow.hpp"
#include "flowedge/rng.hpp"
#include "flowedge/velocity_net.hpp"

using namespace flowedge;

namespace {

NetConfig tiny_config() {
    NetConfig cfg;
    cfg.d_model = 8;
    cfg.blocks = 2;
    cfg.heads = 2;
    cfg.rank = 2;
    cfg.prompt_tokens = 2;
    cfg.mlp_ratio = 2;
    cfg.patch = 2;
    cfg.canvas = 6;
    return cfg;
}

std::size_t cells(const NetConfig& cfg) { return cfg.grid() * cfg.grid(); }

void randomize_lora_b(VelocityNet& net, std::uint64_t seed) {
    Rng rng(seed);
    for (const auto& name : VelocityNet::lora_names(net.config()))
        if (name.find("lora.b_") != std::string::npos)
            for (double& v : net.params().get(name).value.data()) v = 0.3 * rng.normal();
}

bool rows_equal(const Tensor& a, const Tensor& b, std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r)
        for (std::size_t c = 0; c < a.cols(); ++c)
            if (a.at(r, c) != b.at(r, c)) return false;
    return true;
}

}  // namespace

TEST_CASE("output shape equals the latent shape for several sizes") {
    for (std::size_t canvas : {4, 8, 12}) {
        NetConfig cfg = tiny_config();
        cfg.canvas = canvas;
        VelocityNet net(cfg, 1);
        Rng rng(canvas);
        const Latent z = randn(rng, {cfg.latent_channels(), cfg.grid(), cfg.grid()});
        const Tensor cond = randn(rng, {cells(cfg), cfg.latent_channels()});
        CHECK(net.velocity(z, 0.3, nullptr, false).shape() == z.shape());
        CHECK(net.velocity(z, 0.3, &cond, true).shape() == z.shape());
    }
}

TEST_CASE("zero B factors make lora on and off bit-identical") {
    NetConfig cfg = tiny_config();
    VelocityNet net(cfg, 2);
    net.attach_lora(9);
    Rng rng(1);
    const Latent z = randn(rng, {cfg.latent_channels(), cfg.grid(), cfg.grid()});
    const Tensor cond = randn(rng, {cells(cfg), cfg.latent_channels()});
    CHECK(net.velocity(z, 0.6, &cond, true) == net.velocity(z, 0.6, &cond, false));
}

TEST_CASE("without condition tokens the output ignores LoRA values") {
    NetConfig cfg = tiny_config();
    VelocityNet net(cfg, 3);
    Rng rng(2);
    const Latent z = randn(rng, {cfg.latent_channels(), cfg.grid(), cfg.grid()});
    const Latent before = net.velocity(z, 0.25, nullptr, false);
    randomize_lora_b(net, 5);
    net.attach_lora(77);
    randomize_lora_b(net, 6);
    CHECK(net.velocity(z, 0.25, nullptr, false) == before);
}

TEST_CASE("lora without a condition image is rejected") {
    NetConfig cfg = tiny_config();
    VelocityNet net(cfg, 3);
    const Latent z({cfg.latent_channels(), cfg.grid(), cfg.grid()});
    CHECK_THROWS_AS(net.velocity(z, 0.5, nullptr, true), std::invalid_argument);
}

TEST_CASE("perturbing A_Q only moves the condition rows of the projections") {
    NetConfig cfg = tiny_config();
    VelocityNet net(cfg, 4);
    randomize_lora_b(net, 8);
    Rng rng(3);
    const Tensor z = randn(rng, {cells(cfg), cfg.latent_channels()});
    const Tensor cond = randn(rng, {cells(cfg), cfg.latent_channels()});

    auto run = [&](ForwardTrace& trace) {
        Graph g(&net.params(), false);
        Tensor out = net.forward(g, z, 0.4, &cond, true, &trace).value();
        std::vector<Tensor> snap;
        for (const BlockTrace& b : trace.blocks) {
            snap.push_back(b.q.value());
            snap.push_back(b.k.value());
            snap.push_back(b.v.value());
            snap.push_back(b.attn_out.value());
        }
        snap.push_back(out);
        return snap;
    };
    ForwardTrace t0, t1;
    const auto before = run(t0);
    for (double& v : net.params().get("block0.lora.a_q").value.data()) v += 0.5;
    const auto after = run(t1);

    const std::size_t shared = t0.prompt_rows + t0.noise_rows;
    const std::size_t total = shared + t0.cond_rows;
    // Block 0: q changes on condition rows only; k and v do not change at all.
    CHECK(rows_equal(before[0], after[0], 0, shared));
    CHECK_FALSE(rows_equal(before[0], after[0], shared, total));
    CHECK(before[1] == after[1]);
    CHECK(before[2] == after[2]);
    // Prompt and noise queries are untouched, so their attention rows are too;
    // the condition rows see the changed queries.
    CHECK(rows_equal(before[3], after[3], 0, shared));
    CHECK_FALSE(rows_equal(before[3], after[3], shared, total));
    // The noise branch is reached only through attention to condition tokens in later blocks.
    CHECK_FALSE(before.back() == after.back());
}

TEST_CASE("partition sizes") {
    const NetConfig cfg;
    VelocityNet net(cfg, 5);
    const std::size_t d = cfg.d_model, r = cfg.rank, c = cfg.latent_channels();

    apply_partition(net, Phase::finetune);
    CHECK(net.params().trainable_count() == cfg.blocks * 6 * r * d + c * d + d);
    CHECK(net.params().trainable_count() == 5696);
    const Partition fine = param_partition(net, Phase::finetune);
    CHECK(fine.trainable.size() == cfg.blocks * 6 + 2);

    const Partition pre = param_partition(net, Phase::pretrain);
    for (const auto& name : pre.trainable) CHECK(name.find("lora.") == std::string::npos);
    CHECK(std::find(pre.trainable.begin(), pre.trainable.end(), "block0.attn.wq") != pre.trainable.end());
    CHECK(pre.trainable.size() + pre.frozen.size() == net.params().size());
}

TEST_CASE("frozen backbone: no gradient on W_Q, A_Q matches finite differences") {
    NetConfig cfg = tiny_config();
    VelocityNet net(cfg, 6);
    net.attach_lora(3);
    randomize_lora_b(net, 4);
    apply_partition(net, Phase::finetune);
    Rng rng(9);
    const Tensor z = randn(rng, {cells(cfg), cfg.latent_channels()});
    const Tensor cond = randn(rng, {cells(cfg), cfg.latent_channels()});
    const Tensor target = randn(rng, {cells(cfg), cfg.latent_channels()});
    auto build = [&](Graph& g) { return fm_loss(net.forward(g, z, 0.7, &cond, true), target); };

    Graph g(&net.params());
    const GradResult grads = g.backward(build(g));
    CHECK(grads.grads.count("block0.attn.wq") == 0);
    CHECK(grads.disconnected.empty());

    const auto check = flowedge::testing::check_gradients(net.params(), build);
    INFO(check.worst_name);
    CHECK(check.worst < 1e-5);

    const Tensor wq = net.params().value("block0.attn.wq");
    net.params().zero_grad();
    net.params().accumulate(grads.grads);
    adamw_step(net.params(), AdamWConfig{});
    CHECK(net.params().value("block0.attn.wq") == wq);
}

TEST_CASE("pretrain gradients match finite differences") {
    NetConfig cfg = tiny_config();
    cfg.blocks = 1;
    VelocityNet net(cfg, 8);
    Rng rng(10);
    const Tensor z = randn(rng, {cells(cfg), cfg.latent_channels()});
    const Tensor target = randn(rng, {cells(cfg), cfg.latent_channels()});
    const auto check = flowedge::testing::check_gradients(
        net.params(), [&](Graph& g) { return fm_loss(net.forward(g, z, 0.2, nullptr, false), target); });
    INFO(check.worst_name);
    CHECK(check.worst < 1e-5);
}

TEST_CASE("attach_lora zeroes B and resets optimizer state") {
    VelocityNet net(tiny_config(), 1);
    randomize_lora_b(net, 2);
    net.params().get("block0.lora.a_q").step = 4;
    net.attach_lora(5);
    for (const auto& name : VelocityNet::lora_names(net.config())) {
        const Param& p = net.params().get(name);
        CHECK(p.step == 0);
        if (name.find("lora.b_") != std::string::npos)
            for (double v : p.value.data()) CHECK(v == 0.0);
    }
}
