#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "flowedge/image.hpp"

namespace flowedge {

// Binary Netpbm with maxval 255: P5 (gray) and P6 (RGB).
// Values are quantized as round(255 * v) after clipping to [0, 1].
std::string encode_netpbm(const Image& img);
// Throws ParseError with the byte offset of the first malformed field.
Image decode_netpbm(std::string_view bytes);

void write_netpbm(const std::filesystem::path& path, const Image& img);
Image read_netpbm(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace flowedge
