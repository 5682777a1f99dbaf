#include "flowedge/velocity_net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "flowedge/errors.hpp"
#include "flowedge/rng.hpp"

namespace flowedge {

void NetConfig::validate() const {
    if (d_model == 0 || heads == 0 || d_model % heads != 0)
        throw ConfigError("d_model must be a positive multiple of heads");
    if (d_model % 4 != 0) throw ConfigError("d_model must be divisible by 4 for 2-D position embeddings");
    if (blocks == 0 || rank == 0 || prompt_tokens == 0 || mlp_ratio == 0) throw ConfigError("sizes must be positive");
    if (patch == 0 || canvas == 0 || canvas % patch != 0) throw ConfigError("canvas must be divisible by patch");
}

std::vector<double> sinusoidal_embedding(double position, std::size_t dim) {
    std::vector<double> e(dim, 0.0);
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(half, 1)));
        e[i] = std::sin(position * freq);
        e[half + i] = std::cos(position * freq);
    }
    return e;
}

std::vector<double> grid_embedding(double position, std::size_t dim, std::size_t extent) {
    std::vector<double> e(dim, 0.0);
    const std::size_t half = dim / 2;
    // Wavelengths from 2 cells up to 2 * extent, so neighbouring cells stay distinguishable.
    const double ratio = half > 1 ? std::pow(1.0 / static_cast<double>(std::max<std::size_t>(extent, 1)),
                                             1.0 / static_cast<double>(half - 1))
                                  : 1.0;
    double freq = std::numbers::pi;
    for (std::size_t i = 0; i < half; ++i, freq *= ratio) {
        e[i] = std::sin(position * freq);
        e[half + i] = std::cos(position * freq);
    }
    return e;
}

namespace {

std::string block_prefix(std::size_t i) { return "block" + std::to_string(i) + "."; }

Tensor gaussian(Rng& rng, Shape shape, double stddev) {
    Tensor t = randn(rng, shape);
    for (double& v : t.data()) v *= stddev;
    return t;
}

}  // namespace

VelocityNet::VelocityNet(const NetConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg), codec_((cfg.validate(), cfg.patch), cfg.codec_seed) {
    const std::size_t d = cfg.d_model, c = cfg.latent_channels(), hidden = d * cfg.mlp_ratio;
    const double wd = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng(init_seed);

    params_.add("prompt.tokens", gaussian(rng, {cfg.prompt_tokens, d}, 0.1));
    params_.add("type_embed", gaussian(rng, {3, d}, 0.1));
    params_.add("time.w", gaussian(rng, {d, d}, wd));
    params_.add("time.b", Tensor({d}));
    params_.add("latent_in.w", gaussian(rng, {c, d}, 1.0 / std::sqrt(static_cast<double>(c))));
    params_.add("latent_in.b", Tensor({d}));
    params_.add("cond_in.w", gaussian(rng, {c, d}, 1.0 / std::sqrt(static_cast<double>(c))));
    params_.add("cond_in.b", Tensor({d}));
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = block_prefix(b);
        params_.add(p + "ln1.g", Tensor({d}, 1.0));
        params_.add(p + "ln1.b", Tensor({d}));
        params_.add(p + "attn.wq", gaussian(rng, {d, d}, wd));
        params_.add(p + "attn.wk", gaussian(rng, {d, d}, wd));
        params_.add(p + "attn.wv", gaussian(rng, {d, d}, wd));
        params_.add(p + "attn.wo", gaussian(rng, {d, d}, wd));
        params_.add(p + "attn.bo", Tensor({d}));
        for (const char* proj : {"q", "k", "v"}) {
            params_.add(p + "lora.a_" + proj, gaussian(rng, {cfg.rank, d}, wd));
            params_.add(p + "lora.b_" + proj, Tensor({d, cfg.rank}));
        }
        params_.add(p + "ln2.g", Tensor({d}, 1.0));
        params_.add(p + "ln2.b", Tensor({d}));
        params_.add(p + "mlp.w1", gaussian(rng, {d, hidden}, wd));
        params_.add(p + "mlp.b1", Tensor({hidden}));
        params_.add(p + "mlp.w2", gaussian(rng, {hidden, d}, 1.0 / std::sqrt(static_cast<double>(hidden))));
        params_.add(p + "mlp.b2", Tensor({d}));
    }
    params_.add("out.ln.g", Tensor({d}, 1.0));
    params_.add("out.ln.b", Tensor({d}));
    params_.add("out.w", gaussian(rng, {d, c}, 0.02));
    params_.add("out.b", Tensor({c}));

    const std::size_t grid = cfg.grid();
    positions_ = Tensor({grid * grid, d});
    for (std::size_t r = 0; r < grid; ++r)
        for (std::size_t col = 0; col < grid; ++col) {
            const auto er = grid_embedding(static_cast<double>(r), d / 2, grid);
            const auto ec = grid_embedding(static_cast<double>(col), d / 2, grid);
            for (std::size_t i = 0; i < d / 2; ++i) {
                positions_.at(r * grid + col, i) = er[i];
                positions_.at(r * grid + col, d / 2 + i) = ec[i];
            }
        }

    apply_partition(*this, Phase::pretrain);
}

std::vector<std::string> VelocityNet::lora_names(const NetConfig& cfg) {
    std::vector<std::string> out;
    for (std::size_t b = 0; b < cfg.blocks; ++b)
        for (const char* proj : {"q", "k", "v"}) {
            out.push_back(block_prefix(b) + "lora.a_" + proj);
            out.push_back(block_prefix(b) + "lora.b_" + proj);
        }
    return out;
}

std::vector<std::string> VelocityNet::condition_projector_names() { return {"cond_in.w", "cond_in.b"}; }

void VelocityNet::attach_lora(std::uint64_t seed) {
    const std::size_t d = cfg_.d_model, c = cfg_.latent_channels();
    Rng rng(seed);
    params_.get("cond_in.w").value = gaussian(rng, {c, d}, 1.0 / std::sqrt(static_cast<double>(c)));
    params_.get("cond_in.b").value = Tensor({d});
    for (std::size_t b = 0; b < cfg_.blocks; ++b)
        for (const char* proj : {"q", "k", "v"}) {
            params_.get(block_prefix(b) + "lora.a_" + proj).value =
                gaussian(rng, {cfg_.rank, d}, 1.0 / std::sqrt(static_cast<double>(d)));
            params_.get(block_prefix(b) + "lora.b_" + proj).value = Tensor({d, cfg_.rank});
        }
    for (Param& p : params_.params()) {
        p.m = Tensor();
        p.v = Tensor();
        p.step = 0;
    }
}

Tensor VelocityNet::condition_tokens(const Image& x) const {
    const Image gray = to_gray(x);
    if (gray.height != cfg_.canvas || gray.width != cfg_.canvas)
        throw DataError("condition image is " + std::to_string(gray.height) + "x" + std::to_string(gray.width) +
                        ", model canvas is " + std::to_string(cfg_.canvas));
    return PatchCodec::to_tokens(codec_.encode(gray));
}

Var VelocityNet::forward(Graph& g, const Tensor& z_tokens, double t, const Tensor* cond_tokens, bool lora,
                         ForwardTrace* trace) const {
    const std::size_t d = cfg_.d_model, c = cfg_.latent_channels();
    const std::size_t cells = cfg_.grid() * cfg_.grid();
    if (z_tokens.shape() != Shape{cells, c})
        throw std::invalid_argument("latent tokens " + shape_str(z_tokens.shape()) + " do not match model grid " +
                                    shape_str({cells, c}));
    if (lora && !cond_tokens) throw std::invalid_argument("LoRA requested without condition tokens");
    if (cond_tokens && cond_tokens->shape() != Shape{cells, c})
        throw std::invalid_argument("condition tokens " + shape_str(cond_tokens->shape()) + " do not match model grid");

    // Shared time embedding added to every token.
    const auto ts = sinusoidal_embedding(1000.0 * t, d);
    Var temb = add_row(matmul(g.constant(Tensor({1, d}, ts)), g.param("time.w")), g.param("time.b"));
    Var temb_vec = reshape(temb, {d});
    Var types = g.param("type_embed");
    auto type_row = [&](std::size_t i) { return reshape(slice_rows(types, i, i + 1), {d}); };
    Var pos = g.constant(positions_);

    Var prompt = add_row(add_row(g.param("prompt.tokens"), type_row(0)), temb_vec);
    Var noise = add_row(matmul(g.constant(z_tokens), g.param("latent_in.w")), g.param("latent_in.b"));
    noise = add_row(add_row(add(noise, pos), type_row(1)), temb_vec);
    std::vector<Var> groups{prompt, noise};
    if (cond_tokens) {
        Var cond = add_row(matmul(g.constant(*cond_tokens), g.param("cond_in.w")), g.param("cond_in.b"));
        cond = add_row(add_row(add(cond, pos), type_row(2)), temb_vec);
        groups.push_back(cond);
    }
    const std::size_t n_prompt = cfg_.prompt_tokens;
    const std::size_t cond_offset = n_prompt + cells;
    const std::size_t total = cond_offset + (cond_tokens ? cells : 0);
    Var x = concat_rows(groups);

    if (trace) {
        trace->blocks.clear();
        trace->prompt_rows = n_prompt;
        trace->noise_rows = cells;
        trace->cond_rows = cond_tokens ? cells : 0;
    }

    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
        const std::string p = block_prefix(b);
        Var h = layer_norm(x, g.param(p + "ln1.g"), g.param(p + "ln1.b"));
        Var q = matmul(h, g.param(p + "attn.wq"));
        Var k = matmul(h, g.param(p + "attn.wk"));
        Var v = matmul(h, g.param(p + "attn.wv"));
        if (lora) {
            Var hc = slice_rows(h, cond_offset, total);
            auto delta = [&](const char* proj) {
                Var down = matmul_nt(hc, g.param(p + "lora.a_" + proj));
                return matmul_nt(down, g.param(p + "lora.b_" + proj));
            };
            q = add_rows_at(q, delta("q"), cond_offset);
            k = add_rows_at(k, delta("k"), cond_offset);
            v = add_rows_at(v, delta("v"), cond_offset);
        }
        Var a = attention(q, k, v, cfg_.heads);
        if (trace) trace->blocks.push_back(BlockTrace{q, k, v, a});
        x = add(x, add_row(matmul(a, g.param(p + "attn.wo")), g.param(p + "attn.bo")));

        Var h2 = layer_norm(x, g.param(p + "ln2.g"), g.param(p + "ln2.b"));
        Var m = gelu(add_row(matmul(h2, g.param(p + "mlp.w1")), g.param(p + "mlp.b1")));
        x = add(x, add_row(matmul(m, g.param(p + "mlp.w2")), g.param(p + "mlp.b2")));
    }

    Var out = slice_rows(x, n_prompt, n_prompt + cells);
    out = layer_norm(out, g.param("out.ln.g"), g.param("out.ln.b"));
    return add_row(matmul(out, g.param("out.w")), g.param("out.b"));
}

Latent VelocityNet::velocity(const Latent& z_t, double t, const Tensor* cond_tokens, bool lora) const {
    Graph g(&params_, false);
    const std::size_t grid = cfg_.grid();
    Var v = forward(g, PatchCodec::to_tokens(z_t), t, cond_tokens, lora);
    return PatchCodec::from_tokens(v.value(), grid, grid);
}

Partition param_partition(const VelocityNet& net, Phase phase) {
    std::vector<std::string> adapter = VelocityNet::lora_names(net.config());
    for (const auto& n : VelocityNet::condition_projector_names()) adapter.push_back(n);
    auto is_adapter = [&](const std::string& name) {
        return std::find(adapter.begin(), adapter.end(), name) != adapter.end();
    };
    Partition part;
    for (const std::string& name : net.params().names()) {
        const bool trainable = (phase == Phase::finetune) == is_adapter(name);
        (trainable ? part.trainable : part.frozen).push_back(name);
    }
    return part;
}

void apply_partition(VelocityNet& net, Phase phase) {
    const Partition part = param_partition(net, phase);
    for (const auto& n : part.trainable) net.params().set_trainable(n, true);
    for (const auto& n : part.frozen) net.params().set_trainable(n, false);
}

}  // namespace flowedge
