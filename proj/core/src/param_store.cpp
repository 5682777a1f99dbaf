#include "flowedge/param_store.hpp"

#include <stdexcept>

namespace flowedge {

Param& ParamStore::add(const std::string& name, Tensor value, bool trainable) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    Param p;
    p.name = name;
    p.grad = Tensor(value.shape());
    p.value = std::move(value);
    p.trainable = trainable;
    index_.emplace(name, params_.size());
    params_.push_back(std::move(p));
    return params_.back();
}

Param& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return params_[it->second];
}

void ParamStore::set_trainable(const std::string& name, bool trainable) { get(name).trainable = trainable; }

void ParamStore::freeze_all() {
    for (auto& p : params_) p.trainable = false;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) {
        if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
        for (double& g : p.grad.data()) g = 0.0;
    }
}

void ParamStore::accumulate(const std::map<std::string, Tensor>& grads, double scale) {
    for (const auto& [name, g] : grads) {
        Param& p = get(name);
        if (!p.trainable) continue;
        if (g.shape() != p.value.shape())
            throw std::invalid_argument("gradient shape " + shape_str(g.shape()) + " for '" + name +
                                        "' does not match " + shape_str(p.value.shape()));
        if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += scale * g[i];
    }
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.name);
    return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& p : params_)
        if (p.trainable) out.push_back(p.name);
    return out;
}

std::size_t ParamStore::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p.trainable) n += p.value.size();
    return n;
}

}  // namespace flowedge
