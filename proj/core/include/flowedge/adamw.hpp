#pragma once

#include "flowedge/param_store.hpp"

namespace flowedge {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam over the trainable entries of `params`, using the
// accumulated Param::grad. Moment buffers live in the store. A non-finite gradient
// aborts the whole step before anything is modified (NumericError naming the parameter).
void adamw_step(ParamStore& params, const AdamWConfig& cfg);

}  // namespace flowedge
