#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowedge/image.hpp"
#include "flowedge/rng.hpp"

namespace flowedge {

enum class SceneKind { shapes, floor_plan };

struct SceneSpec {
    std::uint64_t seed = 1;
    SceneKind kind = SceneKind::shapes;
    std::size_t canvas = 64;
    std::size_t min_shapes = 2;
    std::size_t max_shapes = 5;
    bool rectangles = true;
    bool circles = true;
    bool polylines = true;
    double texture_noise = 0.04;
    std::size_t annotators = 5;
    double jitter = 1.0;  // pixels
    void validate() const;
};

struct Sample {
    std::string id;
    Image image;  // RGB in [0, 1]
    EdgeMap gt;   // mean of the annotator maps
};

// Sample i is drawn from its own stream derived from (spec.seed, i), so any
// subset can be regenerated independently.
Sample generate_one(const SceneSpec& spec, std::size_t index);
std::vector<Sample> generate(const SceneSpec& spec, std::size_t n);

// Distance from (x, y) to the nearest unjittered analytic boundary of sample `index`.
// Used to audit the annotator simulation.
double boundary_distance(const SceneSpec& spec, std::size_t index, double x, double y);

enum class PreprocessMode { train, eval };

struct PreprocessOptions {
    std::size_t target = 64;
    std::size_t patch = 4;
    bool floor_plan = false;
    bool allow_flips = true;
};

// Zero-pads bottom/right up to the target. Train mode then takes a random
// target x target crop and random flips (vertical only for floor plans), using
// one draw per decision for x and y together. Eval mode for floor plans first
// resizes so the longest side equals the target.
Sample preprocess(const Sample& s, PreprocessMode mode, const PreprocessOptions& opts, Rng& rng);

Image pad_to(const Image& img, std::size_t height, std::size_t width);
Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);

// Dataset directory: images/<id>.ppm, gts/<id>.pgm, manifest.txt (one id per line).
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);
std::vector<std::string> read_manifest(const std::filesystem::path& dir);
std::vector<Sample> read_dataset(const std::filesystem::path& dir);
void write_sample(const std::filesystem::path& dir, const Sample& s);
Sample read_sample(const std::filesystem::path& dir, const std::string& id);

}  // namespace flowedge
