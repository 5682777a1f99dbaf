#pragma once

#include <functional>
#include <vector>

#include "flowedge/autograd.hpp"
#include "flowedge/patch_codec.hpp"
#include "flowedge/rng.hpp"

namespace flowedge {

// A velocity field v(z, t) over latents.
using VelocityField = std::function<Latent(const Latent& z, double t)>;

// Strictly decreasing times t_0 = 1 > ... > t_K = 0.
class Schedule {
public:
    static Schedule uniform(std::size_t steps);
    explicit Schedule(std::vector<double> times);

    std::size_t steps() const { return times_.size() - 1; }
    const std::vector<double>& times() const { return times_; }

private:
    std::vector<double> times_;
};

// z_t = (1 - t) z0 + t eps
Latent make_path_sample(const Latent& z0, const Latent& eps, double t);

// Flow-matching target eps - z0.
Latent velocity_target(const Latent& z0, const Latent& eps);

// mean((v - (eps - z0))^2) over all latent elements.
double fm_loss(const Latent& v, const Latent& z0, const Latent& eps);
// Differentiable form; `v` and `target` share the same layout.
Var fm_loss(Var v, const Tensor& target);

// z0_hat = z_t - t v
Latent clean_estimate(const Latent& z_t, double t, const Latent& v);
Var clean_estimate(Var z_t, double t, Var v);

// Explicit Euler integration from t = 1 down to t = 0 starting at `initial`.
// Throws NumericError naming the step if the state stops being finite.
Latent integrate(const VelocityField& field, const Schedule& schedule, Latent initial);
// Draws z_{t0} ~ N(0, I) of the given shape from rng, then integrates.
Latent sample(const VelocityField& field, const Schedule& schedule, Rng& rng, const Shape& latent_shape);

struct GuidanceConfig {
    double scale = 2.0;
    VelocityField base;  // unconditional dynamics
    VelocityField cond;  // adapted conditional dynamics
};

// v = v_base + scale (v_cond - v_base).
// At scale 0 and 1 only the surviving field is evaluated, so those endpoints are exact.
VelocityField guided_field(GuidanceConfig cfg);

}  // namespace flowedge
