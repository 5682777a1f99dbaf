#include "flowedge/flow.hpp"

#include <stdexcept>

#include "flowedge/errors.hpp"

namespace flowedge {

Schedule Schedule::uniform(std::size_t steps) {
    if (steps == 0) throw std::invalid_argument("schedule needs at least one step");
    std::vector<double> t(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) t[k] = 1.0 - static_cast<double>(k) / static_cast<double>(steps);
    t.front() = 1.0;
    t.back() = 0.0;
    return Schedule(std::move(t));
}

Schedule::Schedule(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2 || times_.front() != 1.0 || times_.back() != 0.0)
        throw std::invalid_argument("schedule must start at 1 and end at 0");
    for (std::size_t k = 1; k < times_.size(); ++k)
        if (!(times_[k] < times_[k - 1])) throw std::invalid_argument("schedule must be strictly decreasing");
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

}  // namespace

Latent make_path_sample(const Latent& z0, const Latent& eps, double t) {
    require_same(z0, eps, "make_path_sample");
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("t outside [0, 1]");
    Latent z(z0.shape());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (1.0 - t) * z0[i] + t * eps[i];
    return z;
}

Latent velocity_target(const Latent& z0, const Latent& eps) {
    require_same(z0, eps, "velocity_target");
    Latent v(z0.shape());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = eps[i] - z0[i];
    return v;
}

double fm_loss(const Latent& v, const Latent& z0, const Latent& eps) {
    require_same(v, z0, "fm_loss");
    require_same(z0, eps, "fm_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = v[i] - (eps[i] - z0[i]);
        acc += r * r;
    }
    return acc / static_cast<double>(v.size());
}

Var fm_loss(Var v, const Tensor& target) { return mse(v, target); }

Latent clean_estimate(const Latent& z_t, double t, const Latent& v) {
    require_same(z_t, v, "clean_estimate");
    Latent z(z_t.shape());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = z_t[i] - t * v[i];
    return z;
}

Var clean_estimate(Var z_t, double t, Var v) { return sub(z_t, scale(v, t)); }

Latent integrate(const VelocityField& field, const Schedule& schedule, Latent z) {
    const auto& ts = schedule.times();
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const double dt = ts[k + 1] - ts[k];
        const Latent v = field(z, ts[k]);
        require_same(z, v, "velocity field");
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += dt * v[i];
        if (!z.all_finite()) throw NumericError("non-finite sampler state at step " + std::to_string(k));
    }
    return z;
}

Latent sample(const VelocityField& field, const Schedule& schedule, Rng& rng, const Shape& latent_shape) {
    return integrate(field, schedule, randn(rng, latent_shape));
}

VelocityField guided_field(GuidanceConfig cfg) {
    if (cfg.scale < 0.0) throw std::invalid_argument("guidance scale must be non-negative");
    if (cfg.scale == 1.0) return cfg.cond;
    if (cfg.scale == 0.0) return cfg.base;
    return [cfg = std::move(cfg)](const Latent& z, double t) {
        const Latent vb = cfg.base(z, t);
        const Latent vc = cfg.cond(z, t);
        require_same(vb, vc, "guided_field");
        Latent v(vb.shape());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = vb[i] + cfg.scale * (vc[i] - vb[i]);
        return v;
    };
}

}  // namespace flowedge
