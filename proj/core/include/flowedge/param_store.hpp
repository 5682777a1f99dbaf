#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowedge/tensor.hpp"

namespace flowedge {

struct Param {
    std::string name;
    Tensor value;
    bool trainable = false;
    Tensor grad;  // same shape as value; untouched while frozen
    // AdamW moment buffers and step count.
    Tensor m;
    Tensor v;
    long step = 0;
};

// Named parameters in insertion order.
class ParamStore {
public:
    Param& add(const std::string& name, Tensor value, bool trainable = true);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    const Tensor& value(const std::string& name) const { return get(name).value; }

    void set_trainable(const std::string& name, bool trainable);
    void freeze_all();

    void zero_grad();
    // grad += scale * g for every trainable entry in grads.
    void accumulate(const std::map<std::string, Tensor>& grads, double scale = 1.0);

    std::vector<std::string> names() const;
    std::vector<std::string> trainable_names() const;
    std::size_t trainable_count() const;  // number of scalar entries
    std::size_t size() const { return params_.size(); }

    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace flowedge
