#include "flowedge/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "flowedge/errors.hpp"
#include "flowedge/flow.hpp"

namespace flowedge {

std::uint64_t noise_seed(const std::string& id, std::uint64_t run_seed) { return hash_string(id) ^ run_seed; }

EdgeMap predict_edges(const VelocityNet& net, const Image& image, std::uint64_t seed, const InferOptions& opts) {
    const NetConfig& cfg = net.config();
    if (image.height != cfg.canvas || image.width != cfg.canvas)
        throw DataError("predict_edges expects a " + std::to_string(cfg.canvas) + "x" + std::to_string(cfg.canvas) +
                        " image");
    if (opts.steps == 0) throw ConfigError("number of sampling steps must be at least 1");
    if (!(opts.guidance >= 0.0)) throw ConfigError("guidance scale must be non-negative");

    const Tensor cond = net.condition_tokens(image);
    VelocityField cond_field = [&](const Latent& z, double t) { return net.velocity(z, t, &cond, true); };
    VelocityField field = cond_field;
    if (opts.use_cfg) {
        GuidanceConfig g;
        g.scale = opts.guidance;
        g.base = [&](const Latent& z, double t) { return net.velocity(z, t, nullptr, false); };
        g.cond = cond_field;
        field = guided_field(std::move(g));
    }
    Rng rng(seed);
    const Latent z0 = sample(field, Schedule::uniform(opts.steps), rng,
                             net.codec().latent_shape(cfg.canvas, cfg.canvas));
    return net.codec().decode(z0, true);
}

namespace {

EdgeMap predict_one(const VelocityNet& net, const Sample& s, const InferOptions& opts) {
    const NetConfig& cfg = net.config();
    PreprocessOptions po;
    po.target = cfg.canvas;
    po.patch = cfg.patch;
    po.floor_plan = opts.floor_plan;
    po.allow_flips = false;
    Rng unused(0);
    const Sample p = preprocess(s, PreprocessMode::eval, po, unused);
    const EdgeMap full = predict_edges(net, p.image, noise_seed(s.id, opts.seed), opts);

    // Undo padding / cropping, then any resize.
    std::size_t h = s.image.height, w = s.image.width;
    bool resized = false;
    if (opts.floor_plan && std::max(h, w) != cfg.canvas) {
        const double f = static_cast<double>(cfg.canvas) / static_cast<double>(std::max(h, w));
        h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(h) * f)));
        w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(w) * f)));
        resized = true;
    }
    EdgeMap out = crop(full, 0, 0, std::min(h, cfg.canvas), std::min(w, cfg.canvas));
    if (resized) return resize_bilinear(out, s.image.height, s.image.width);
    if (out.height != s.image.height || out.width != s.image.width) out = pad_to(out, s.image.height, s.image.width);
    return out;
}

}  // namespace

std::vector<EdgeMap> predict_dataset(const VelocityNet& net, const std::vector<Sample>& samples,
                                     const InferOptions& opts) {
    std::vector<EdgeMap> out(samples.size());
    const std::size_t workers = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(1, samples.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < samples.size(); ++i) out[i] = predict_one(net, samples[i], opts);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < samples.size(); i = next++) {
                    try {
                        out[i] = predict_one(net, samples[i], opts);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace flowedge
