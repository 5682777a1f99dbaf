#pragma once

#include <vector>

#include "flowedge/autograd.hpp"
#include "flowedge/image.hpp"
#include "flowedge/velocity_net.hpp"

namespace flowedge {

// Ground-truth values below half an 8-bit quantum count as exact zeros.
inline constexpr double kZeroLevel = 1.0 / 510.0;
inline constexpr double kProbabilityClamp = 1e-6;

struct PixelLossConfig {
    double eta = 0.3;     // uncertainty threshold
    double lambda = 1.1;  // weight multiplier on the non-edge term
    void validate() const;
};

struct PixelLossResult {
    double value = 0.0;
    std::size_t positives = 0;  // y >= eta
    std::size_t negatives = 0;  // y == 0
    double alpha = 0.0;
    double beta = 0.0;
    // Every pixel fell in the uncertain band; value is defined as 0.
    bool degenerate = false;
};

// Uncertainty-aware class-balanced cross-entropy averaged over non-ambiguous pixels.
// `pred` must lie strictly inside (0, 1).
PixelLossResult pixel_loss(const EdgeMap& pred, const EdgeMap& gt, const PixelLossConfig& cfg);

// (1 - t)^2
double sigma_weight(double t);

// Scalar node with forward value l_pix whose backward pass delivers exactly
// l_pix * 1 to z_hat (times the upstream gradient). Nothing upstream of l_pix is differentiated.
Var inject_proxy_gradient(Var z_hat, double l_pix);

struct TrainingSample {
    Tensor z0;     // clean latent, token layout (h*w) x C
    Tensor eps;    // noise, token layout
    double t = 0.0;
    Tensor cond;   // condition tokens; empty for unconditional training
    EdgeMap gt;    // pixel-space target (only needed with the pixel term)
};

struct LossOptions {
    PixelLossConfig pixel;
    bool pixel_term = true;
    bool lora = true;
};

struct LossTerms {
    double fm = 0.0;
    double pix = 0.0;
    double sigma = 0.0;
    double total = 0.0;
};

// Batch mean of L_FM + sigma_t * L_pix, with L_pix reaching the network only
// through the proxy gradient on the clean estimate.
Var total_loss(Graph& g, const VelocityNet& net, const std::vector<TrainingSample>& batch, const LossOptions& opts,
               std::vector<LossTerms>* terms = nullptr);

}  // namespace flowedge
