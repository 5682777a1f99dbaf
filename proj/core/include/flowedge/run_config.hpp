#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowedge/bench_eval.hpp"
#include "flowedge/inference.hpp"
#include "flowedge/synthdata.hpp"
#include "flowedge/trainer.hpp"
#include "flowedge/velocity_net.hpp"

namespace flowedge {

// Everything a command needs. Plain-text key=value; '#' starts a comment.
struct RunConfig {
    std::uint64_t seed = 1;

    // data generation
    std::string scene = "shapes";  // shapes | floor_plan
    std::size_t count = 16;
    std::size_t min_shapes = 2;
    std::size_t max_shapes = 5;
    std::size_t annotators = 5;
    double jitter = 1.0;
    double texture_noise = 0.04;

    // model
    NetConfig net;
    std::uint64_t init_seed = 1;
    std::uint64_t lora_seed = 5;

    // training
    std::size_t pretrain_iterations = 2000;
    std::size_t finetune_iterations = 3000;
    std::size_t batch = 4;
    double lr = 1e-4;
    double weight_decay = 0.01;
    bool pixel_term = true;
    bool augment = true;
    std::size_t checkpoint_every = 0;
    double eta = 0.3;
    double lambda = 1.1;

    // sampling and evaluation
    std::size_t steps = 50;
    double guidance = 2.0;
    bool use_cfg = true;
    std::vector<double> gammas = {0.5, 1.0, 1.5, 2.0, 2.5};
    double tolerance = 0.0075;
    std::size_t thresholds = 99;
    std::size_t threads = 1;

    void set(const std::string& key, const std::string& value);  // throws ConfigError
    void validate() const;
    std::string to_text() const;  // every key, one per line, parseable by parse_run_config

    bool floor_plan() const { return scene == "floor_plan"; }
    SceneSpec scene_spec() const;
    TrainConfig train_config(Phase phase) const;
    InferOptions infer_options() const;
    SweepOptions sweep_options(EvalMode mode) const;
    PixelLossConfig pixel() const { return {eta, lambda}; }

    static std::vector<std::string> keys();
};

RunConfig parse_run_config(const std::string& text);  // errors name the line
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace flowedge
