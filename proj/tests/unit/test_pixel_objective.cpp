#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "flowedge/flow.hpp"
#include "flowedge/pixel_objective.hpp"
#include "flowedge/rng.hpp"
#include "oracles.hpp"

using namespace flowedge;
using flowedge::testing::pixel_loss_oracle;

namespace {

EdgeMap map_from(std::size_t h, std::size_t w, std::vector<double> values) {
    EdgeMap m(h, w);
    m.pixels = std::move(values);
    return m;
}

NetConfig tiny_config() {
    NetConfig cfg;
    cfg.d_model = 8;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.rank = 2;
    cfg.prompt_tokens = 2;
    cfg.mlp_ratio = 2;
    cfg.patch = 2;
    cfg.canvas = 6;
    return cfg;
}

}  // namespace

TEST_CASE("worked 2x2 example") {
    const EdgeMap y = map_from(2, 2, {0.0, 0.2, 0.5, 1.0});
    const EdgeMap p = map_from(2, 2, {0.1, 0.9, 0.5, 0.8});
    const PixelLossResult r = pixel_loss(p, y, PixelLossConfig{});
    CHECK(r.positives == 2);
    CHECK(r.negatives == 1);
    CHECK(r.alpha == doctest::Approx(2.2 / 3.0));
    CHECK(r.beta == doctest::Approx(1.0 / 3.0));
    // (-(2.2/3) log 0.9 - (1/3) log 0.5 - (1/3) log 0.8) / 3
    CHECK(r.value == doctest::Approx(0.12757).epsilon(1e-4));
    CHECK(std::abs(r.value - pixel_loss_oracle(p.pixels, y.pixels, 0.3, 1.1)) < 1e-15);
}

TEST_CASE("vectorized loss matches the scalar oracle on random cases") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = 1 + rng.below(12), w = 1 + rng.below(12);
        PixelLossConfig cfg;
        cfg.eta = rng.uniform(0.05, 0.95);
        cfg.lambda = rng.uniform(0.1, 3.0);
        EdgeMap y(h, w), p(h, w);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double u = rng.uniform();
            y.pixels[i] = u < 0.4 ? 0.0 : (u < 0.7 ? std::round(rng.uniform() * 255.0) / 255.0 : 1.0);
            p.pixels[i] = rng.uniform(1e-6, 1.0 - 1e-6);
        }
        const double got = pixel_loss(p, y, cfg).value;
        CHECK(std::abs(got - pixel_loss_oracle(p.pixels, y.pixels, cfg.eta, cfg.lambda)) < 1e-12);
    }
}

TEST_CASE("balanced binary image gives alpha = lambda/2, beta = 1/2") {
    const EdgeMap y = map_from(2, 3, {0, 1, 0, 1, 0, 1});
    const PixelLossResult r = pixel_loss(EdgeMap(2, 3, 1, 0.5), y, PixelLossConfig{0.3, 1.4});
    CHECK(r.alpha == doctest::Approx(0.7));
    CHECK(r.beta == doctest::Approx(0.5));
}

TEST_CASE("all-uncertain image is degenerate with zero loss") {
    const EdgeMap y(3, 3, 1, 0.1);
    const PixelLossResult r = pixel_loss(EdgeMap(3, 3, 1, 0.4), y, PixelLossConfig{});
    CHECK(r.value == 0.0);
    CHECK(r.degenerate);
}

TEST_CASE("perfect prediction is near zero after the clamp") {
    const EdgeMap y = map_from(2, 2, {0, 1, 1, 0});
    const PixelLossResult r = pixel_loss(clamp_probability(y), y, PixelLossConfig{});
    CHECK(r.value < 1e-4);
}

TEST_CASE("prediction outside (0,1) is rejected") {
    const EdgeMap y(1, 2);
    CHECK_THROWS_AS(pixel_loss(EdgeMap(1, 2, 1, 0.0), y, PixelLossConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(pixel_loss(EdgeMap(1, 2, 1, 1.0), y, PixelLossConfig{}), std::invalid_argument);
}

TEST_CASE("near-zero ground truth counts as non-edge") {
    const EdgeMap y = map_from(1, 3, {1.0 / 600.0, 1.0 / 255.0, 1.0});
    const PixelLossResult r = pixel_loss(EdgeMap(1, 3, 1, 0.5), y, PixelLossConfig{});
    CHECK(r.negatives == 1);
    CHECK(r.positives == 1);
}

TEST_CASE("sigma weight") {
    CHECK(sigma_weight(1.0) == 0.0);
    CHECK(sigma_weight(0.0) == 1.0);
    CHECK(sigma_weight(0.5) == 0.25);
}

TEST_CASE("config validation") {
    CHECK_THROWS(PixelLossConfig{0.0, 1.1}.validate());
    CHECK_THROWS(PixelLossConfig{1.0, 1.1}.validate());
    CHECK_THROWS(PixelLossConfig{0.3, 0.0}.validate());
    CHECK_NOTHROW(PixelLossConfig{}.validate());
}

TEST_CASE("proxy gradient on the clean estimate is exactly L_pix everywhere") {
    ParamStore ps;
    Rng rng(1);
    ps.add("z", randn(rng, {4, 3}));
    for (double l : {0.0, 0.125, 0.73}) {
        Graph g(&ps);
        Var z = g.param("z");
        Var node = inject_proxy_gradient(z, l);
        CHECK(node.value().item() == l);
        const GradResult r = g.backward(node);
        for (double v : r.grads.at("z").data()) CHECK(v == l);
    }
}

TEST_CASE("linear model: grad W = g u^T") {
    Rng rng(2);
    ParamStore ps;
    ps.add("W", randn(rng, {3, 4}));
    const Tensor u = randn(rng, {4, 1});
    auto grad_for = [&](double l) {
        Graph g(&ps);
        return g.backward(inject_proxy_gradient(matmul(g.param("W"), g.constant(u)), l)).grads.at("W");
    };
    const double l = 0.37;
    const Tensor gw = grad_for(l);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(gw.at(i, j) == l * u[j]);
    const Tensor doubled = grad_for(2 * l);
    for (std::size_t i = 0; i < gw.size(); ++i) CHECK(doubled[i] == 2.0 * gw[i]);
}

TEST_CASE("total loss decomposes into flow matching plus weighted proxy term") {
    const NetConfig cfg = tiny_config();
    VelocityNet net(cfg, 3);
    net.attach_lora(4);
    Rng rng(5);
    for (const auto& name : VelocityNet::lora_names(cfg))
        for (double& v : net.params().get(name).value.data()) v = 0.3 * rng.normal();
    apply_partition(net, Phase::finetune);
    const std::size_t n = cfg.grid() * cfg.grid(), c = cfg.latent_channels();

    TrainingSample s;
    s.gt = EdgeMap(cfg.canvas, cfg.canvas);
    for (double& v : s.gt.pixels) v = rng.coin(0.3) ? 1.0 : (rng.coin(0.5) ? 0.0 : 0.15);
    s.z0 = PatchCodec::to_tokens(net.codec().encode(s.gt));
    s.eps = randn(rng, {n, c});
    s.t = 0.35;
    s.cond = randn(rng, {n, c});
    const LossOptions opts;

    std::vector<LossTerms> terms;
    Graph g_total(&net.params());
    const GradResult total = g_total.backward(total_loss(g_total, net, {s}, opts, &terms));
    REQUIRE(terms.size() == 1);
    CHECK(terms[0].sigma == sigma_weight(0.35));
    CHECK(terms[0].total == doctest::Approx(terms[0].fm + terms[0].sigma * terms[0].pix).epsilon(1e-14));

    // Flow-matching part alone.
    LossOptions fm_only = opts;
    fm_only.pixel_term = false;
    Graph g_fm(&net.params());
    const GradResult fm = g_fm.backward(total_loss(g_fm, net, {s}, fm_only));

    // Proxy part: d/dtheta of sigma * L_pix * sum(z_hat) with L_pix held fixed.
    Graph g_px(&net.params());
    const Tensor zt = PatchCodec::to_tokens(make_path_sample(PatchCodec::from_tokens(s.z0, cfg.grid(), cfg.grid()),
                                                             PatchCodec::from_tokens(s.eps, cfg.grid(), cfg.grid()),
                                                             s.t));
    Var v = net.forward(g_px, zt, s.t, &s.cond, true);
    Var z_hat = clean_estimate(g_px.constant(zt), s.t, v);
    const GradResult px = g_px.backward(scale(sum(z_hat), terms[0].sigma * terms[0].pix));

    double worst = 0.0, norm = 0.0;
    for (const auto& [name, gt] : total.grads) {
        const Tensor& a = fm.grads.at(name);
        const Tensor& b = px.grads.at(name);
        for (std::size_t i = 0; i < gt.size(); ++i) {
            worst = std::max(worst, std::abs(gt[i] - (a[i] + b[i])));
            norm = std::max(norm, std::abs(gt[i]));
        }
    }
    CHECK(norm > 0.0);
    CHECK(worst <= 1e-12 * norm);
}

TEST_CASE("at t = 1 the total equals the flow-matching loss") {
    const NetConfig cfg = tiny_config();
    VelocityNet net(cfg, 6);
    Rng rng(7);
    const std::size_t n = cfg.grid() * cfg.grid(), c = cfg.latent_channels();
    TrainingSample s;
    s.gt = EdgeMap(cfg.canvas, cfg.canvas);
    s.gt.pixels[3] = 1.0;
    s.z0 = randn(rng, {n, c});
    s.eps = randn(rng, {n, c});
    s.t = 1.0;
    s.cond = randn(rng, {n, c});
    std::vector<LossTerms> terms;
    Graph g(&net.params());
    const double total = total_loss(g, net, {s}, LossOptions{}, &terms).value().item();
    CHECK(terms[0].sigma == 0.0);
    CHECK(total == terms[0].fm);
}

TEST_CASE("the codec is never a parameter of the objective") {
    const NetConfig cfg = tiny_config();
    VelocityNet net(cfg, 6);
    for (const auto& name : net.params().names()) CHECK(name.find("codec") == std::string::npos);
    const Tensor mix = net.codec().mix();
    Rng rng(8);
    const std::size_t n = cfg.grid() * cfg.grid(), c = cfg.latent_channels();
    TrainingSample s;
    s.gt = EdgeMap(cfg.canvas, cfg.canvas, 1, 1.0);
    s.z0 = randn(rng, {n, c});
    s.eps = randn(rng, {n, c});
    s.t = 0.5;
    LossOptions opts;
    opts.lora = false;
    Graph g(&net.params());
    g.backward(total_loss(g, net, {s}, opts));
    CHECK(net.codec().mix() == mix);
}
