#include "flowedge/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flowedge/errors.hpp"

namespace flowedge {

std::string encode_netpbm(const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw DataError("netpbm supports 1 or 3 channels, got " + std::to_string(img.channels));
    std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.pixels.size());
    for (double v : img.pixels) out.push_back(static_cast<char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
    return out;
}

namespace {

class HeaderReader {
public:
    HeaderReader(std::string_view bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

    std::size_t pos() const { return pos_; }
    std::size_t token_start() const { return token_start_; }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = token_start_ = pos_;
        std::size_t value = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            if (value > 1'000'000) throw ParseError(std::string(what) + " too large", start);
            ++pos_;
        }
        if (pos_ == start) throw ParseError(std::string("expected ") + what, start);
        return value;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    void raster_separator() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
            throw ParseError("expected whitespace before raster", pos_);
        ++pos_;
    }

private:
    std::string_view bytes_;
    std::size_t pos_;
    std::size_t token_start_ = 0;
};

}  // namespace

Image decode_netpbm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw ParseError("bad magic, expected P5 or P6", 0);
    const std::size_t channels = bytes[1] == '5' ? 1 : 3;
    HeaderReader r(bytes, 2);
    const std::size_t width = r.number("width");
    const std::size_t height = r.number("height");
    if (width == 0 || height == 0) throw ParseError("zero image dimension", r.token_start());
    const std::size_t maxval = r.number("maxval");
    if (maxval != 255)
        throw ParseError("unsupported maxval " + std::to_string(maxval) + " (need 255)", r.token_start());
    r.raster_separator();
    const std::size_t start = r.pos();
    const std::size_t need = width * height * channels;
    if (bytes.size() - start < need)
        throw ParseError("truncated raster: need " + std::to_string(need) + " bytes, have " +
                             std::to_string(bytes.size() - start),
                         bytes.size());
    Image img(height, width, channels);
    for (std::size_t i = 0; i < need; ++i)
        img.pixels[i] = static_cast<unsigned char>(bytes[start + i]) / 255.0;
    return img;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
}

void write_netpbm(const std::filesystem::path& path, const Image& img) { write_file(path, encode_netpbm(img)); }

Image read_netpbm(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    try {
        return decode_netpbm(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.message(), e.offset());
    }
}

}  // namespace flowedge
