#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "flowedge/velocity_net.hpp"

namespace flowedge {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "ECE1" | u32 version | u32 d, L, heads, r, p, canvas | u64 codec seed | u32 count
//   count x { u32 name length | name | u32 ndim | u32 dims[ndim] | f32 values }
//   u32 CRC-32 of every preceding byte
// Prompt-token count and MLP ratio are recovered from the parameter shapes.
std::string encode_checkpoint(const VelocityNet& net);
VelocityNet decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const VelocityNet& net);
VelocityNet load_checkpoint(const std::filesystem::path& path);

// Throws ConfigError naming every field that differs ("d_model: expected 64, found 32; ...").
void require_architecture(const NetConfig& expected, const NetConfig& found);

}  // namespace flowedge
