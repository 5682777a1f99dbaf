#pragma once

// Central finite-difference oracle for tape gradients (test-only).

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "flowedge/autograd.hpp"

namespace flowedge::testing {

using LossBuilder = std::function<Var(Graph&)>;

inline double evaluate(const ParamStore& params, const LossBuilder& build) {
    Graph g(&params, false);
    return build(g).value().item();
}

// Numeric gradient of every trainable parameter by central differences.
inline std::map<std::string, Tensor> numeric_grads(ParamStore& params, const LossBuilder& build, double h = 1e-5) {
    std::map<std::string, Tensor> out;
    for (Param& p : params.params()) {
        if (!p.trainable) continue;
        Tensor g(p.value.shape());
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double up = evaluate(params, build);
            p.value[i] = saved - h;
            const double down = evaluate(params, build);
            p.value[i] = saved;
            g[i] = (up - down) / (2.0 * h);
        }
        out.emplace(p.name, std::move(g));
    }
    return out;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Tensor& a, const Tensor& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

struct GradCheck {
    double worst = 0.0;
    std::string worst_name;
};

inline GradCheck check_gradients(ParamStore& params, const LossBuilder& build, double h = 1e-5) {
    Graph g(&params);
    const GradResult analytic = g.backward(build(g));
    const auto numeric = numeric_grads(params, build, h);
    GradCheck r;
    for (const auto& [name, num] : numeric) {
        const double e = relative_error(analytic.grads.at(name), num);
        if (e >= r.worst) {
            r.worst = e;
            r.worst_name = name;
        }
    }
    return r;
}

}  // namespace flowedge::testing
