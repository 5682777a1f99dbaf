#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "flowedge/tensor.hpp"

namespace flowedge {

// splitmix64 stream. Gaussian draws use Box-Muller and cache the paired value.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    double uniform();  // [0, 1)
    double uniform(double lo, double hi);
    double normal();
    std::size_t below(std::size_t n);  // [0, n)
    bool coin(double p = 0.5) { return uniform() < p; }

    // Independent generator derived from this one's seed and a stream tag.
    Rng fork(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    std::optional<double> spare_;
};

Tensor randn(Rng& rng, const Shape& shape);
double rand_uniform(Rng& rng, double lo, double hi);

std::uint64_t mix64(std::uint64_t x);
// FNV-1a over the bytes of s.
std::uint64_t hash_string(std::string_view s);

}  // namespace flowedge
