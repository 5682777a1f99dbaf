#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowedge/autograd.hpp"
#include "flowedge/image.hpp"
#include "flowedge/param_store.hpp"
#include "flowedge/patch_codec.hpp"

namespace flowedge {

struct NetConfig {
    std::size_t d_model = 64;
    std::size_t blocks = 3;
    std::size_t heads = 4;
    std::size_t rank = 4;
    std::size_t prompt_tokens = 4;
    std::size_t mlp_ratio = 4;
    std::size_t patch = 4;
    std::size_t canvas = 64;
    std::uint64_t codec_seed = 7;

    std::size_t latent_channels() const { return patch * patch; }
    std::size_t grid() const { return canvas / patch; }
    void validate() const;
    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

enum class Phase { pretrain, finetune };

struct Partition {
    std::vector<std::string> trainable;
    std::vector<std::string> frozen;
};

// Per-block projections recorded during a forward pass (rows: prompt, noise, condition).
struct BlockTrace {
    Var q, k, v;
    Var attn_out;
};

struct ForwardTrace {
    std::vector<BlockTrace> blocks;
    std::size_t prompt_rows = 0;
    std::size_t noise_rows = 0;
    std::size_t cond_rows = 0;
};

// Miniature transformer velocity field over three token groups: fixed prompt tokens,
// noise-latent tokens and (optionally) condition tokens. LoRA residuals touch only the
// condition rows of the Q/K/V projections.
class VelocityNet {
public:
    VelocityNet(const NetConfig& cfg, std::uint64_t init_seed);

    const NetConfig& config() const { return cfg_; }
    const PatchCodec& codec() const { return codec_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Condition tokens for an input image (converted to gray, then encoded): (h*w) x C.
    Tensor condition_tokens(const Image& x) const;

    // Velocity in token layout ((h*w) x C). z_tokens is (h*w) x C.
    // Throws std::invalid_argument when lora is requested without condition tokens.
    Var forward(Graph& g, const Tensor& z_tokens, double t, const Tensor* cond_tokens, bool lora,
                ForwardTrace* trace = nullptr) const;

    // Inference convenience on latents; no tape is kept.
    Latent velocity(const Latent& z_t, double t, const Tensor* cond_tokens, bool lora) const;

    // Re-initializes the condition pathway: LoRA A ~ N(0, 1/d), B = 0, fresh condition projector.
    void attach_lora(std::uint64_t seed);

    static std::vector<std::string> lora_names(const NetConfig& cfg);
    static std::vector<std::string> condition_projector_names();

private:
    NetConfig cfg_;
    PatchCodec codec_;
    ParamStore params_;
    Tensor positions_;  // (h*w) x d fixed 2-D sinusoidal table
};

Partition param_partition(const VelocityNet& net, Phase phase);
// Sets the trainability flags of net.params() according to param_partition.
void apply_partition(VelocityNet& net, Phase phase);

// Sinusoidal embedding of a scalar position into `dim` features.
std::vector<double> sinusoidal_embedding(double position, std::size_t dim);
// Sinusoidal embedding for a cell index in [0, extent).
std::vector<double> grid_embedding(double position, std::size_t dim, std::size_t extent);

}  // namespace flowedge
