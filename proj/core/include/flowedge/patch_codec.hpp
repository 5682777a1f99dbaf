#pragma once

#include <cstdint>

#include "flowedge/image.hpp"
#include "flowedge/tensor.hpp"

namespace flowedge {

// Latent grid of shape (p*p, H/p, W/p).
using Latent = Tensor;

// Exactly invertible stand-in for an image autoencoder: space-to-depth with patch p,
// an orthogonal channel mix M, and the fixed shift -0.5 * M * 1 so a mid-gray patch maps to 0.
class PatchCodec {
public:
    // Random orthogonal M drawn from `seed`.
    PatchCodec(std::size_t patch, std::uint64_t seed);
    // Explicit mixing matrix ((p*p) x (p*p), must be orthogonal) with optional shift.
    PatchCodec(std::size_t patch, Tensor mix, bool centered);

    static PatchCodec identity(std::size_t patch);

    std::size_t patch() const { return patch_; }
    std::size_t channels() const { return patch_ * patch_; }
    std::uint64_t seed() const { return seed_; }
    const Tensor& mix() const { return mix_; }
    const std::vector<double>& shift() const { return shift_; }

    Shape latent_shape(std::size_t height, std::size_t width) const;

    // Throws DataError if the image is not a multiple of the patch size.
    Latent encode(const EdgeMap& y) const;
    // Exact inverse of encode. With clamp=true the output is clipped to [0, 1].
    EdgeMap decode(const Latent& z, bool clamp = false) const;

    // (h*w) x C token layout of a latent, token index = row * w + col.
    static Tensor to_tokens(const Latent& z);
    static Latent from_tokens(const Tensor& tokens, std::size_t h, std::size_t w);

private:
    std::size_t patch_;
    std::uint64_t seed_ = 0;
    Tensor mix_;
    std::vector<double> shift_;
};

// Clip into [eps, 1 - eps] so log(p) and log(1 - p) stay finite.
EdgeMap clamp_probability(const EdgeMap& y, double eps = 1e-6);

}  // namespace flowedge
