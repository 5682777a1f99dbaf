#pragma once

#include <cstddef>
#include <vector>

namespace flowedge {

// Row-major image with interleaved channels; values nominally in [0, 1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c = 1, double fill = 0.0)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    double& at(std::size_t y, std::size_t x, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
        return pixels[(y * width + x) * channels + c];
    }
    std::size_t size() const { return pixels.size(); }
    bool same_dims(const Image& o) const { return height == o.height && width == o.width; }

    friend bool operator==(const Image&, const Image&) = default;
};

// Single-channel map in [0, 1]: soft ground truth or a predicted edge probability.
using EdgeMap = Image;

Image to_gray(const Image& img);
double mean_value(const Image& img);
Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);

}  // namespace flowedge
