#include "flowedge/adamw.hpp"

#include <cmath>

#include "flowedge/errors.hpp"

namespace flowedge {

void adamw_step(ParamStore& params, const AdamWConfig& cfg) {
    for (const Param& p : params.params()) {
        if (!p.trainable) continue;
        if (!p.grad.all_finite()) throw NumericError("non-finite gradient for parameter '" + p.name + "'");
    }
    for (Param& p : params.params()) {
        if (!p.trainable) continue;
        if (p.m.shape() != p.value.shape()) p.m = Tensor(p.value.shape());
        if (p.v.shape() != p.value.shape()) p.v = Tensor(p.value.shape());
        ++p.step;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            p.value[i] -= cfg.lr * cfg.weight_decay * p.value[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = p.m[i] / bc1;
            const double v_hat = p.v[i] / bc2;
            p.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace flowedge
