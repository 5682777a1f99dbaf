#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowedge/image.hpp"
#include "flowedge/synthdata.hpp"
#include "flowedge/velocity_net.hpp"

namespace flowedge {

struct InferOptions {
    std::size_t steps = 50;
    double guidance = 2.0;
    bool use_cfg = true;  // false: integrate the conditional field alone
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    bool floor_plan = false;
};

// Initial noise for an image depends only on its id and the run seed.
std::uint64_t noise_seed(const std::string& id, std::uint64_t run_seed);

// Raw edge probabilities for a canvas-sized RGB image.
EdgeMap predict_edges(const VelocityNet& net, const Image& image, std::uint64_t seed, const InferOptions& opts);

// Predicts every sample at its original size (eval preprocessing on the way in,
// undone on the way out). Output order follows `samples`.
std::vector<EdgeMap> predict_dataset(const VelocityNet& net, const std::vector<Sample>& samples,
                                     const InferOptions& opts);

}  // namespace flowedge
