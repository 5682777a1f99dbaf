#include "flowedge/pixel_objective.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "flowedge/errors.hpp"
#include "flowedge/flow.hpp"

namespace flowedge {

void PixelLossConfig::validate() const {
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must lie in (0, 1)");
    if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
}

PixelLossResult pixel_loss(const EdgeMap& pred, const EdgeMap& gt, const PixelLossConfig& cfg) {
    if (!pred.same_dims(gt) || pred.channels != 1 || gt.channels != 1)
        throw std::invalid_argument("pixel_loss needs single-channel maps of equal size");
    const auto n = static_cast<Eigen::Index>(gt.pixels.size());
    const Eigen::Map<const Eigen::ArrayXd> y(gt.pixels.data(), n);
    const Eigen::Map<const Eigen::ArrayXd> p(pred.pixels.data(), n);
    if ((p <= 0.0).any() || (p >= 1.0).any()) throw std::invalid_argument("pixel_loss prediction outside (0, 1)");

    const Eigen::ArrayXd neg = (y < kZeroLevel).cast<double>();
    const Eigen::ArrayXd pos = (y >= cfg.eta).cast<double>();

    PixelLossResult r;
    r.negatives = static_cast<std::size_t>(neg.sum());
    r.positives = static_cast<std::size_t>(pos.sum());
    const double valid = static_cast<double>(r.positives + r.negatives);
    if (valid == 0.0) {
        r.degenerate = true;
        return r;
    }
    r.alpha = cfg.lambda * static_cast<double>(r.positives) / valid;
    r.beta = static_cast<double>(r.negatives) / valid;
    const Eigen::ArrayXd per_pixel = -r.alpha * neg * (1.0 - p).log() - r.beta * pos * p.log();
    r.value = per_pixel.sum() / valid;
    return r;
}

double sigma_weight(double t) { return (1.0 - t) * (1.0 - t); }

Var inject_proxy_gradient(Var z_hat, double l_pix) {
    return inject_gradient(z_hat, Tensor(z_hat.shape(), l_pix), l_pix);
}

Var total_loss(Graph& g, const VelocityNet& net, const std::vector<TrainingSample>& batch, const LossOptions& opts,
               std::vector<LossTerms>* terms) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const std::size_t grid = net.config().grid();
    if (terms) terms->clear();
    std::vector<Var> per_sample;
    for (const TrainingSample& s : batch) {
        const bool conditional = !s.cond.empty();
        const Tensor z_t = PatchCodec::to_tokens(make_path_sample(PatchCodec::from_tokens(s.z0, grid, grid),
                                                                  PatchCodec::from_tokens(s.eps, grid, grid), s.t));
        Tensor target(s.z0.shape());
        for (std::size_t i = 0; i < target.size(); ++i) target[i] = s.eps[i] - s.z0[i];

        Var v = net.forward(g, z_t, s.t, conditional ? &s.cond : nullptr, conditional && opts.lora);
        Var fm = fm_loss(v, target);
        LossTerms lt;
        lt.fm = fm.value().item();
        lt.sigma = sigma_weight(s.t);
        Var total = fm;
        if (opts.pixel_term) {
            Var z_hat = clean_estimate(g.constant(z_t), s.t, v);
            const EdgeMap y_hat = clamp_probability(
                net.codec().decode(PatchCodec::from_tokens(z_hat.value(), grid, grid)), kProbabilityClamp);
            lt.pix = pixel_loss(y_hat, s.gt, opts.pixel).value;
            total = add(fm, scale(inject_proxy_gradient(z_hat, lt.pix), lt.sigma));
        }
        lt.total = total.value().item();
        if (terms) terms->push_back(lt);
        per_sample.push_back(total);
    }
    Var acc = per_sample.front();
    for (std::size_t i = 1; i < per_sample.size(); ++i) acc = add(acc, per_sample[i]);
    return scale(acc, 1.0 / static_cast<double>(per_sample.size()));
}

}  // namespace flowedge
