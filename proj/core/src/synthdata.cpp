#include "flowedge/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "flowedge/errors.hpp"
#include "flowedge/netpbm.hpp"

namespace flowedge {

void SceneSpec::validate() const {
    if (canvas < 16) throw ConfigError("scene canvas must be at least 16 pixels");
    if (min_shapes == 0 || min_shapes > max_shapes) throw ConfigError("shape count range must satisfy 1 <= min <= max");
    if (!rectangles && !circles && !polylines) throw ConfigError("at least one shape kind must be enabled");
    if (annotators == 0) throw ConfigError("annotator count must be positive");
    if (jitter < 0.0 || texture_noise < 0.0) throw ConfigError("jitter and texture noise must be non-negative");
}

namespace {

struct Point {
    double x, y;
};

enum class ShapeKind { rect, circle, polyline };

struct ShapeGeom {
    ShapeKind kind;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // rect
    double cx = 0, cy = 0, r = 0;           // circle
    std::vector<Point> pts;                 // polyline
    double color[3] = {0, 0, 0};
};

struct Scene {
    double background[3] = {0, 0, 0};
    std::vector<ShapeGeom> shapes;
    // Floor plans: furniture outlines drawn into the image but not annotated.
    std::vector<ShapeGeom> clutter;
};

double segment_distance(Point p, Point a, Point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

double polyline_distance(const ShapeGeom& s, Point p) {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < s.pts.size(); ++i) d = std::min(d, segment_distance(p, s.pts[i], s.pts[i + 1]));
    return d;
}

bool covers(const ShapeGeom& s, Point p) {
    switch (s.kind) {
        case ShapeKind::rect: return p.x >= s.x0 && p.x < s.x1 && p.y >= s.y0 && p.y < s.y1;
        case ShapeKind::circle: return (p.x - s.cx) * (p.x - s.cx) + (p.y - s.cy) * (p.y - s.cy) <= s.r * s.r;
        case ShapeKind::polyline: return false;
    }
    return false;
}

double outline_distance(const ShapeGeom& s, Point p) {
    switch (s.kind) {
        case ShapeKind::rect: {
            const Point c[4] = {{s.x0, s.y0}, {s.x1, s.y0}, {s.x1, s.y1}, {s.x0, s.y1}};
            double d = std::numeric_limits<double>::infinity();
            for (int i = 0; i < 4; ++i) d = std::min(d, segment_distance(p, c[i], c[(i + 1) % 4]));
            return d;
        }
        case ShapeKind::circle: return std::abs(std::hypot(p.x - s.cx, p.y - s.cy) - s.r);
        case ShapeKind::polyline: return polyline_distance(s, p);
    }
    return std::numeric_limits<double>::infinity();
}

void set_color(ShapeGeom& s, double level, Rng& rng) {
    for (double& c : s.color) c = std::clamp(level + rng.uniform(-0.06, 0.06), 0.0, 1.0);
}

double pick_level(Rng& rng, const std::vector<double>& taken) {
    double best = rng.uniform(0.05, 0.95);
    for (int attempt = 0; attempt < 20; ++attempt) {
        const bool ok = std::all_of(taken.begin(), taken.end(), [&](double t) { return std::abs(t - best) >= 0.2; });
        if (ok) break;
        best = rng.uniform(0.05, 0.95);
    }
    return best;
}

Scene shapes_scene(const SceneSpec& spec, Rng& rng) {
    Scene scene;
    const double w = static_cast<double>(spec.canvas);
    const double bg = rng.uniform(0.1, 0.9);
    for (double& c : scene.background) c = std::clamp(bg + rng.uniform(-0.04, 0.04), 0.0, 1.0);
    std::vector<double> levels{bg};

    std::vector<ShapeKind> kinds;
    if (spec.rectangles) kinds.push_back(ShapeKind::rect);
    if (spec.circles) kinds.push_back(ShapeKind::circle);
    if (spec.polylines) kinds.push_back(ShapeKind::polyline);

    const std::size_t count = spec.min_shapes + rng.below(spec.max_shapes - spec.min_shapes + 1);
    for (std::size_t i = 0; i < count; ++i) {
        ShapeGeom s;
        s.kind = kinds[rng.below(kinds.size())];
        switch (s.kind) {
            case ShapeKind::rect: {
                const double rw = rng.uniform(0.15, 0.5) * w, rh = rng.uniform(0.15, 0.5) * w;
                s.x0 = std::floor(rng.uniform(2.0, w - rw - 2.0));
                s.y0 = std::floor(rng.uniform(2.0, w - rh - 2.0));
                s.x1 = s.x0 + std::round(rw);
                s.y1 = s.y0 + std::round(rh);
                break;
            }
            case ShapeKind::circle: {
                s.r = rng.uniform(0.08, 0.25) * w;
                s.cx = rng.uniform(s.r + 2.0, w - s.r - 2.0);
                s.cy = rng.uniform(s.r + 2.0, w - s.r - 2.0);
                break;
            }
            case ShapeKind::polyline: {
                const std::size_t n = 2 + rng.below(3);
                for (std::size_t k = 0; k < n; ++k) s.pts.push_back({rng.uniform(3.0, w - 3.0), rng.uniform(3.0, w - 3.0)});
                break;
            }
        }
        const double level = pick_level(rng, levels);
        levels.push_back(level);
        set_color(s, level, rng);
        scene.shapes.push_back(std::move(s));
    }
    // Strokes go on top of the filled regions.
    std::stable_partition(scene.shapes.begin(), scene.shapes.end(),
                          [](const ShapeGeom& s) { return s.kind != ShapeKind::polyline; });
    return scene;
}

ShapeGeom wall_rect(double x0, double y0, double x1, double y1) {
    ShapeGeom s;
    s.kind = ShapeKind::rect;
    s.x0 = x0;
    s.y0 = y0;
    s.x1 = x1;
    s.y1 = y1;
    return s;
}

Scene floor_plan_scene(const SceneSpec& spec, Rng& rng) {
    Scene scene;
    const double w = static_cast<double>(spec.canvas);
    const double paper = rng.uniform(0.85, 0.97);
    for (double& c : scene.background) c = paper;
    const double ink = rng.uniform(0.05, 0.25);
    const double t = static_cast<double>(2 + rng.below(2));

    const double bx0 = std::floor(rng.uniform(3.0, 0.15 * w)), by0 = std::floor(rng.uniform(3.0, 0.15 * w));
    const double bx1 = w - std::floor(rng.uniform(3.0, 0.15 * w)), by1 = w - std::floor(rng.uniform(3.0, 0.15 * w));
    std::vector<ShapeGeom> walls{wall_rect(bx0, by0, bx1, by0 + t), wall_rect(bx0, by1 - t, bx1, by1),
                                 wall_rect(bx0, by0, bx0 + t, by1), wall_rect(bx1 - t, by0, bx1, by1)};

    const std::size_t interior = 1 + rng.below(3);
    for (std::size_t i = 0; i < interior; ++i) {
        const bool vertical = rng.coin();
        const double lo = vertical ? bx0 : by0, hi = vertical ? bx1 : by1;
        const double span_lo = vertical ? by0 : bx0, span_hi = vertical ? by1 : bx1;
        if (hi - lo < 24.0) continue;
        const double at = std::floor(rng.uniform(lo + 10.0, hi - 10.0 - t));
        const double door = std::floor(rng.uniform(5.0, 8.0));
        const double door_at = std::floor(rng.uniform(span_lo + t + 2.0, span_hi - t - door - 2.0));
        if (vertical) {
            walls.push_back(wall_rect(at, span_lo, at + t, door_at));
            walls.push_back(wall_rect(at, door_at + door, at + t, span_hi));
        } else {
            walls.push_back(wall_rect(span_lo, at, door_at, at + t));
            walls.push_back(wall_rect(door_at + door, at, span_hi, at + t));
        }
    }
    for (ShapeGeom& s : walls) {
        for (double& c : s.color) c = ink;
        scene.shapes.push_back(std::move(s));
    }

    const std::size_t furniture = spec.min_shapes + rng.below(spec.max_shapes - spec.min_shapes + 1);
    for (std::size_t i = 0; i < furniture; ++i) {
        ShapeGeom s;
        s.kind = ShapeKind::rect;
        const double fw = rng.uniform(4.0, 10.0), fh = rng.uniform(4.0, 10.0);
        s.x0 = std::floor(rng.uniform(bx0 + t + 1.0, std::max(bx0 + t + 1.5, bx1 - t - fw - 1.0)));
        s.y0 = std::floor(rng.uniform(by0 + t + 1.0, std::max(by0 + t + 1.5, by1 - t - fh - 1.0)));
        s.x1 = s.x0 + std::round(fw);
        s.y1 = s.y0 + std::round(fh);
        for (double& c : s.color) c = rng.uniform(0.45, 0.7);
        scene.clutter.push_back(std::move(s));
    }
    return scene;
}

Scene build_scene(const SceneSpec& spec, Rng& rng) {
    return spec.kind == SceneKind::floor_plan ? floor_plan_scene(spec, rng) : shapes_scene(spec, rng);
}

Point jitter_point(Point p, double radius, Rng& rng) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double mag = radius * std::sqrt(rng.uniform());
    return {p.x + mag * std::cos(angle), p.y + mag * std::sin(angle)};
}

ShapeGeom jittered(const ShapeGeom& s, double j, Rng& rng) {
    ShapeGeom out = s;
    switch (s.kind) {
        case ShapeKind::rect:
            out.x0 += rng.uniform(-j, j);
            out.y0 += rng.uniform(-j, j);
            out.x1 += rng.uniform(-j, j);
            out.y1 += rng.uniform(-j, j);
            break;
        case ShapeKind::circle: {
            const Point c = jitter_point({s.cx, s.cy}, 0.5 * j, rng);
            out.cx = c.x;
            out.cy = c.y;
            out.r = std::max(1.0, s.r + rng.uniform(-0.5 * j, 0.5 * j));
            break;
        }
        case ShapeKind::polyline:
            for (Point& p : out.pts) p = jitter_point(p, j, rng);
            break;
    }
    return out;
}

Image render(const Scene& scene, std::size_t size, double noise, Rng& rng) {
    Image img(size, size, 3);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const Point p{x + 0.5, y + 0.5};
            double rgb[3] = {scene.background[0], scene.background[1], scene.background[2]};
            auto paint = [&](const ShapeGeom& s) {
                if (s.kind == ShapeKind::polyline) {
                    const double a = std::clamp(1.0 - polyline_distance(s, p), 0.0, 1.0);
                    for (int c = 0; c < 3; ++c) rgb[c] = (1 - a) * rgb[c] + a * s.color[c];
                } else if (covers(s, p)) {
                    for (int c = 0; c < 3; ++c) rgb[c] = s.color[c];
                }
            };
            for (const ShapeGeom& s : scene.clutter) {
                if (outline_distance(s, p) <= 0.5)
                    for (int c = 0; c < 3; ++c) rgb[c] = s.color[c];
            }
            for (const ShapeGeom& s : scene.shapes) paint(s);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(rgb[c] + noise * rng.normal(), 0.0, 1.0);
        }
    return img;
}

// One simulated annotator: region boundaries of the (jittered) label map, marked on
// the occluding side, plus stroke centerlines.
EdgeMap annotate(const std::vector<ShapeGeom>& shapes, std::size_t size) {
    std::vector<int> label(size * size, 0);
    EdgeMap out(size, size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const Point p{x + 0.5, y + 0.5};
            for (std::size_t i = 0; i < shapes.size(); ++i)
                if (covers(shapes[i], p)) label[y * size + x] = static_cast<int>(i) + 1;
            for (const ShapeGeom& s : shapes)
                if (s.kind == ShapeKind::polyline && polyline_distance(s, p) <= 0.5) out.at(y, x) = 1.0;
        }
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const int l = label[y * size + x];
            const bool lower = (x > 0 && label[y * size + x - 1] < l) || (x + 1 < size && label[y * size + x + 1] < l) ||
                               (y > 0 && label[(y - 1) * size + x] < l) || (y + 1 < size && label[(y + 1) * size + x] < l);
            if (lower) out.at(y, x) = 1.0;
        }
    return out;
}

EdgeMap wall_mask(const std::vector<ShapeGeom>& walls, std::size_t size) {
    EdgeMap out(size, size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
            for (const ShapeGeom& s : walls)
                if (covers(s, {x + 0.5, y + 0.5})) out.at(y, x) = 1.0;
    return out;
}

std::string sample_id(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%05zu", index);
    return buf;
}

}  // namespace

Sample generate_one(const SceneSpec& spec, std::size_t index) {
    spec.validate();
    const Rng root = Rng(spec.seed).fork(index);
    Rng geometry = root.fork(0), texture = root.fork(1);
    const Scene scene = build_scene(spec, geometry);

    Sample s;
    s.id = sample_id(index);
    s.image = render(scene, spec.canvas, spec.texture_noise, texture);
    s.gt = EdgeMap(spec.canvas, spec.canvas);
    for (std::size_t a = 0; a < spec.annotators; ++a) {
        Rng arng = root.fork(100 + a);
        std::vector<ShapeGeom> shapes;
        for (const ShapeGeom& g : scene.shapes) shapes.push_back(jittered(g, spec.jitter, arng));
        const EdgeMap m = spec.kind == SceneKind::floor_plan ? wall_mask(shapes, spec.canvas) : annotate(shapes, spec.canvas);
        for (std::size_t i = 0; i < m.size(); ++i) s.gt.pixels[i] += m.pixels[i];
    }
    for (double& v : s.gt.pixels) v /= static_cast<double>(spec.annotators);
    return s;
}

std::vector<Sample> generate(const SceneSpec& spec, std::size_t n) {
    if (n == 0) throw ConfigError("sample count must be at least 1");
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_one(spec, i));
    return out;
}

double boundary_distance(const SceneSpec& spec, std::size_t index, double x, double y) {
    Rng geometry = Rng(spec.seed).fork(index).fork(0);
    const Scene scene = build_scene(spec, geometry);
    double d = std::numeric_limits<double>::infinity();
    for (const ShapeGeom& s : scene.shapes) d = std::min(d, outline_distance(s, {x, y}));
    return d;
}

Image pad_to(const Image& img, std::size_t height, std::size_t width) {
    Image out(std::max(height, img.height), std::max(width, img.width), img.channels);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, x, c);
    return out;
}

Image crop(const Image& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
    if (top + height > img.height || left + width > img.width) throw std::invalid_argument("crop outside image");
    Image out(height, width, img.channels);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
    return out;
}

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw std::invalid_argument("resize to empty image");
    Image out(height, width, img.channels);
    const double sy = static_cast<double>(img.height) / static_cast<double>(height);
    const double sx = static_cast<double>(img.width) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < img.channels; ++c)
                out.at(y, x, c) = (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
                                  wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
        }
    }
    return out;
}

Sample preprocess(const Sample& s, PreprocessMode mode, const PreprocessOptions& opts, Rng& rng) {
    if (opts.patch == 0 || opts.target % opts.patch != 0)
        throw ConfigError("target size " + std::to_string(opts.target) + " is not divisible by patch size " +
                          std::to_string(opts.patch));
    if (!s.image.same_dims(s.gt)) throw DataError("sample " + s.id + ": image and ground truth sizes differ");
    Sample out = s;
    if (mode == PreprocessMode::eval && opts.floor_plan) {
        const std::size_t longest = std::max(s.image.height, s.image.width);
        const auto scaled = [&](std::size_t v) {
            return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(v) * opts.target /
                                                                                 static_cast<double>(longest))));
        };
        if (longest != opts.target) {
            out.image = resize_bilinear(s.image, scaled(s.image.height), scaled(s.image.width));
            out.gt = resize_bilinear(s.gt, scaled(s.gt.height), scaled(s.gt.width));
        }
    }
    out.image = pad_to(out.image, opts.target, opts.target);
    out.gt = pad_to(out.gt, opts.target, opts.target);
    if (mode == PreprocessMode::eval) {
        if (out.image.height != opts.target || out.image.width != opts.target) {
            out.image = crop(out.image, 0, 0, opts.target, opts.target);
            out.gt = crop(out.gt, 0, 0, opts.target, opts.target);
        }
        return out;
    }
    const std::size_t top = rng.below(out.image.height - opts.target + 1);
    const std::size_t left = rng.below(out.image.width - opts.target + 1);
    out.image = crop(out.image, top, left, opts.target, opts.target);
    out.gt = crop(out.gt, top, left, opts.target, opts.target);
    if (opts.allow_flips) {
        if (rng.coin()) {
            out.image = flip_horizontal(out.image);
            out.gt = flip_horizontal(out.gt);
        }
        if (opts.floor_plan && rng.coin()) {
            out.image = flip_vertical(out.image);
            out.gt = flip_vertical(out.gt);
        }
    }
    return out;
}

namespace {

void check_id(const std::string& id) {
    const bool ok = !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
    if (!ok) throw DataError("invalid sample id '" + id + "'");
}

}  // namespace

void write_sample(const std::filesystem::path& dir, const Sample& s) {
    check_id(s.id);
    std::filesystem::create_directories(dir / "images");
    std::filesystem::create_directories(dir / "gts");
    write_netpbm(dir / "images" / (s.id + ".ppm"), s.image);
    write_netpbm(dir / "gts" / (s.id + ".pgm"), s.gt);
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
    std::filesystem::create_directories(dir);
    std::string manifest;
    for (const Sample& s : samples) {
        write_sample(dir, s);
        manifest += s.id + "\n";
    }
    write_file(dir / "manifest.txt", manifest);
}

std::vector<std::string> read_manifest(const std::filesystem::path& dir) {
    const std::string text = read_file(dir / "manifest.txt");
    std::vector<std::string> ids;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        check_id(line);
        ids.push_back(line);
    }
    if (ids.empty()) throw DataError("manifest in " + dir.string() + " lists no samples");
    return ids;
}

Sample read_sample(const std::filesystem::path& dir, const std::string& id) {
    const auto image_path = dir / "images" / (id + ".ppm");
    const auto gt_path = dir / "gts" / (id + ".pgm");
    for (const auto& p : {image_path, gt_path})
        if (!std::filesystem::exists(p)) throw DataError("sample '" + id + "' is missing " + p.string());
    Sample s;
    s.id = id;
    s.image = read_netpbm(image_path);
    s.gt = read_netpbm(gt_path);
    if (s.gt.channels != 1) throw DataError("ground truth for '" + id + "' must be single-channel (P5)");
    if (!s.image.same_dims(s.gt)) throw DataError("sample '" + id + "': image and ground truth sizes differ");
    return s;
}

std::vector<Sample> read_dataset(const std::filesystem::path& dir) {
    std::vector<Sample> out;
    for (const std::string& id : read_manifest(dir)) out.push_back(read_sample(dir, id));
    return out;
}

}  // namespace flowedge
