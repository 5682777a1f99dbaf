#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowedge/adamw.hpp"
#include "flowedge/pixel_objective.hpp"
#include "flowedge/synthdata.hpp"
#include "flowedge/velocity_net.hpp"

namespace flowedge {

struct TrainConfig {
    Phase phase = Phase::pretrain;
    std::size_t iterations = 2000;
    std::size_t batch = 4;
    double lr = 1e-4;
    double weight_decay = 0.01;
    std::uint64_t seed = 1;
    PixelLossConfig pixel;
    bool pixel_term = true;      // finetune only
    bool augment = true;         // random crop/flip
    bool floor_plan = false;     // vertical flips only
    std::size_t checkpoint_every = 0;  // 0 = only at the end
    void validate() const;
};

struct StepRecord {
    std::size_t step = 0;
    double fm = 0.0;     // batch means
    double pix = 0.0;
    double sigma = 0.0;
    double total = 0.0;
    double wall_ms = 0.0;
};

struct TrainHooks {
    std::function<void(const StepRecord&)> on_step;
    // Called after steps that are multiples of checkpoint_every.
    std::function<void(std::size_t step)> on_checkpoint;
};

// Backbone + prompt tokens on L_FM only, unconditional, over the ground-truth maps of `corpus`.
std::vector<StepRecord> pretrain(VelocityNet& net, const std::vector<Sample>& corpus, const TrainConfig& cfg,
                                 const TrainHooks& hooks = {});

// Frozen backbone; LoRA + condition projector trained on L_FM + sigma_t L_pix.
// The LoRA branch must already be attached (attach_lora) by the caller.
std::vector<StepRecord> finetune(VelocityNet& net, const std::vector<Sample>& data, const TrainConfig& cfg,
                                 const TrainHooks& hooks = {});

// One optimisation step on an explicit batch; returns the batch-mean loss terms.
StepRecord train_step(VelocityNet& net, const std::vector<TrainingSample>& batch, const LossOptions& loss,
                      const AdamWConfig& opt);

std::string training_log_csv(const std::vector<StepRecord>& log);

// Hash over the values of every frozen parameter (FNV-1a of the raw doubles).
std::uint64_t frozen_hash(const ParamStore& params);

}  // namespace flowedge
