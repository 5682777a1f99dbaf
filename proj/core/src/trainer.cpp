#include "flowedge/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "flowedge/errors.hpp"

namespace flowedge {

void TrainConfig::validate() const {
    if (batch == 0) throw ConfigError("batch size must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
    try {
        pixel.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

namespace {

TrainingSample draw(const VelocityNet& net, const Sample& s, const TrainConfig& cfg, bool conditional, Rng& rng) {
    const NetConfig& nc = net.config();
    PreprocessOptions po;
    po.target = nc.canvas;
    po.patch = nc.patch;
    po.floor_plan = cfg.floor_plan;
    po.allow_flips = cfg.augment;
    const Sample p = preprocess(s, cfg.augment ? PreprocessMode::train : PreprocessMode::eval, po, rng);

    TrainingSample ts;
    ts.z0 = PatchCodec::to_tokens(net.codec().encode(p.gt));
    ts.eps = randn(rng, ts.z0.shape());
    ts.t = rng.uniform();
    if (conditional) ts.cond = net.condition_tokens(p.image);
    ts.gt = p.gt;
    return ts;
}

std::vector<StepRecord> run(VelocityNet& net, const std::vector<Sample>& data, const TrainConfig& cfg,
                            const TrainHooks& hooks, bool conditional, const LossOptions& loss) {
    cfg.validate();
    if (data.empty()) throw DataError("training set is empty");
    AdamWConfig opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;

    Rng rng = Rng(cfg.seed).fork(conditional ? 2 : 1);
    std::vector<StepRecord> log;
    log.reserve(cfg.iterations);
    for (std::size_t step = 1; step <= cfg.iterations; ++step) {
        const auto start = std::chrono::steady_clock::now();
        std::vector<TrainingSample> batch;
        for (std::size_t b = 0; b < cfg.batch; ++b) batch.push_back(draw(net, data[rng.below(data.size())], cfg, conditional, rng));
        StepRecord r;
        try {
            r = train_step(net, batch, loss, opt);
        } catch (const NumericError& e) {
            throw NumericError("iteration " + std::to_string(step) + ": " + e.what());
        }
        r.step = step;
        r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        log.push_back(r);
        if (hooks.on_step) hooks.on_step(r);
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.iterations)
            hooks.on_checkpoint(step);
    }
    return log;
}

}  // namespace

StepRecord train_step(VelocityNet& net, const std::vector<TrainingSample>& batch, const LossOptions& loss,
                      const AdamWConfig& opt) {
    std::vector<LossTerms> terms;
    Graph g(&net.params());
    Var total = total_loss(g, net, batch, loss, &terms);
    StepRecord r;
    for (const LossTerms& t : terms) {
        r.fm += t.fm;
        r.pix += t.pix;
        r.sigma += t.sigma;
    }
    const double n = static_cast<double>(terms.size());
    r.fm /= n;
    r.pix /= n;
    r.sigma /= n;
    r.total = total.value().item();
    if (!std::isfinite(r.total)) throw NumericError("non-finite loss");
    const GradResult grads = g.backward(total);
    net.params().zero_grad();
    net.params().accumulate(grads.grads);
    adamw_step(net.params(), opt);
    return r;
}

std::vector<StepRecord> pretrain(VelocityNet& net, const std::vector<Sample>& corpus, const TrainConfig& cfg,
                                 const TrainHooks& hooks) {
    apply_partition(net, Phase::pretrain);
    LossOptions loss;
    loss.pixel = cfg.pixel;
    loss.pixel_term = false;
    loss.lora = false;
    return run(net, corpus, cfg, hooks, false, loss);
}

std::vector<StepRecord> finetune(VelocityNet& net, const std::vector<Sample>& data, const TrainConfig& cfg,
                                 const TrainHooks& hooks) {
    apply_partition(net, Phase::finetune);
    LossOptions loss;
    loss.pixel = cfg.pixel;
    loss.pixel_term = cfg.pixel_term;
    loss.lora = true;
    return run(net, data, cfg, hooks, true, loss);
}

std::string training_log_csv(const std::vector<StepRecord>& log) {
    std::string out = "step,L_FM,L_pix,sigma_t,total,wall_ms\n";
    char buf[192];
    for (const StepRecord& r : log) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.3f\n", r.step, r.fm, r.pix, r.sigma, r.total, r.wall_ms);
        out += buf;
    }
    return out;
}

std::uint64_t frozen_hash(const ParamStore& params) {
    std::uint64_t h = 1469598103934665603ull;
    for (const Param& p : params.params()) {
        if (p.trainable) continue;
        for (char c : p.name) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
        for (double v : p.value.data()) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof v);
            for (unsigned char b : bytes) h = (h ^ b) * 1099511628211ull;
        }
    }
    return h;
}

}  // namespace flowedge
