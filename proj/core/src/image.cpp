#include "flowedge/image.hpp"

#include <numeric>

namespace flowedge {

Image to_gray(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.height, img.width, 1);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            if (img.channels >= 3) {
                out.at(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            } else {
                out.at(y, x) = img.at(y, x, 0);
            }
        }
    return out;
}

double mean_value(const Image& img) {
    if (img.pixels.empty()) return 0.0;
    return std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0) / static_cast<double>(img.pixels.size());
}

Image flip_horizontal(const Image& img) {
    Image out(img.height, img.width, img.channels);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
    return out;
}

Image flip_vertical(const Image& img) {
    Image out(img.height, img.width, img.channels);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c) out.at(img.height - 1 - y, x, c) = img.at(y, x, c);
    return out;
}

}  // namespace flowedge
