#include "flowedge/bench_eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace flowedge {

std::size_t BinaryMap::count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }

BinaryMap binarize(const EdgeMap& m, double tau) {
    BinaryMap b(m.height, m.width);
    for (std::size_t i = 0; i < b.bits.size(); ++i) b.bits[i] = m.pixels[i * m.channels] >= tau;
    return b;
}

EdgeMap to_edge_map(const BinaryMap& b) {
    EdgeMap m(b.height, b.width);
    for (std::size_t i = 0; i < b.bits.size(); ++i) m.pixels[i] = b.bits[i];
    return m;
}

double MatchTolerance::max_distance(std::size_t height, std::size_t width) const {
    return fraction * std::hypot(static_cast<double>(height), static_cast<double>(width));
}

void MatchTolerance::validate() const {
    if (!(fraction > 0.0)) throw std::invalid_argument("match tolerance must be positive");
}

namespace {

double sample_clamped(const EdgeMap& m, long y, long x) {
    y = std::clamp<long>(y, 0, static_cast<long>(m.height) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(m.width) - 1);
    return m.pixels[static_cast<std::size_t>(y) * m.width + static_cast<std::size_t>(x)];
}

double bilinear(const EdgeMap& m, double y, double x) {
    const double fy = std::floor(y), fx = std::floor(x);
    const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
    const double ay = y - fy, ax = x - fx;
    return (1 - ay) * ((1 - ax) * sample_clamped(m, y0, x0) + ax * sample_clamped(m, y0, x0 + 1)) +
           ay * ((1 - ax) * sample_clamped(m, y0 + 1, x0) + ax * sample_clamped(m, y0 + 1, x0 + 1));
}

EdgeMap gaussian_blur(const EdgeMap& m, double sigma) {
    const long radius = static_cast<long>(std::ceil(3 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    for (long i = -radius; i <= radius; ++i) k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    const double norm = std::accumulate(k.begin(), k.end(), 0.0);
    for (double& v : k) v /= norm;

    EdgeMap tmp(m.height, m.width), out(m.height, m.width);
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x) {
            double s = 0.0;
            for (long i = -radius; i <= radius; ++i)
                s += k[static_cast<std::size_t>(i + radius)] * sample_clamped(m, static_cast<long>(y), static_cast<long>(x) + i);
            tmp.at(y, x) = s;
        }
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x) {
            double s = 0.0;
            for (long i = -radius; i <= radius; ++i)
                s += k[static_cast<std::size_t>(i + radius)] * sample_clamped(tmp, static_cast<long>(y) + i, static_cast<long>(x));
            out.at(y, x) = s;
        }
    return out;
}

// Central differences, one-sided at the border.
void gradient(const EdgeMap& m, EdgeMap& gx, EdgeMap& gy) {
    gx = EdgeMap(m.height, m.width);
    gy = EdgeMap(m.height, m.width);
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x) {
            const std::size_t xl = x == 0 ? 0 : x - 1, xr = std::min(x + 1, m.width - 1);
            const std::size_t yu = y == 0 ? 0 : y - 1, yd = std::min(y + 1, m.height - 1);
            gx.at(y, x) = xr > xl ? (m.at(y, xr) - m.at(y, xl)) / static_cast<double>(xr - xl) : 0.0;
            gy.at(y, x) = yd > yu ? (m.at(yd, x) - m.at(yu, x)) / static_cast<double>(yd - yu) : 0.0;
        }
}

}  // namespace

EdgeMap suppress_non_maxima(const EdgeMap& prob) {
    if (prob.channels != 1) throw std::invalid_argument("suppress_non_maxima expects a single-channel map");
    for (double v : prob.pixels)
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("edge probabilities must lie in [0, 1]");
    if (prob.size() == 0) return prob;

    const EdgeMap smooth = gaussian_blur(prob, 1.0);
    EdgeMap gx, gy, gxx, gxy, gyx, gyy;
    gradient(smooth, gx, gy);
    gradient(gx, gxx, gxy);
    gradient(gy, gyx, gyy);

    EdgeMap out = prob;
    for (std::size_t y = 0; y < prob.height; ++y)
        for (std::size_t x = 0; x < prob.width; ++x) {
            const double v = prob.at(y, x);
            if (v == 0.0) continue;
            // Normal = Hessian eigenvector with the largest |eigenvalue|.
            const double a = gxx.at(y, x), d = gyy.at(y, x), b = 0.5 * (gxy.at(y, x) + gyx.at(y, x));
            const double mean = 0.5 * (a + d), disc = std::hypot(0.5 * (a - d), b);
            const double lambda = std::abs(mean + disc) >= std::abs(mean - disc) ? mean + disc : mean - disc;
            double nx = b, ny = lambda - a;
            if (std::abs(nx) + std::abs(ny) < 1e-12) {
                nx = lambda - d;
                ny = b;
            }
            const double len = std::hypot(nx, ny);
            if (len < 1e-12) {
                nx = 1.0;
                ny = 0.0;
            } else {
                nx /= len;
                ny /= len;
            }
            const double fy = static_cast<double>(y), fx = static_cast<double>(x);
            if (v < bilinear(prob, fy + ny, fx + nx) || v < bilinear(prob, fy - ny, fx - nx)) out.at(y, x) = 0.0;
        }
    return out;
}

BinaryMap thin_zhang_suen(BinaryMap b) {
    const std::size_t h = b.height, w = b.width;
    auto px = [&](long y, long x) -> int {
        if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0;
        return b.bits[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
    };
    std::vector<std::size_t> remove;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            remove.clear();
            for (long y = 0; y < static_cast<long>(h); ++y)
                for (long x = 0; x < static_cast<long>(w); ++x) {
                    if (!px(y, x)) continue;
                    // P2..P9 clockwise from north.
                    const std::array<int, 8> p = {px(y - 1, x), px(y - 1, x + 1), px(y, x + 1), px(y + 1, x + 1),
                                                  px(y + 1, x), px(y + 1, x - 1), px(y, x - 1), px(y - 1, x - 1)};
                    const int n = std::accumulate(p.begin(), p.end(), 0);
                    if (n < 2 || n > 6) continue;
                    int transitions = 0;
                    for (int i = 0; i < 8; ++i) transitions += p[i] == 0 && p[(i + 1) % 8] == 1;
                    if (transitions != 1) continue;
                    const bool ok = pass == 0 ? (p[0] * p[2] * p[4] == 0 && p[2] * p[4] * p[6] == 0)
                                              : (p[0] * p[2] * p[6] == 0 && p[0] * p[4] * p[6] == 0);
                    if (ok) remove.push_back(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x));
                }
            for (std::size_t i : remove) b.bits[i] = 0;
            changed = changed || !remove.empty();
        }
    }
    return b;
}

BinaryMap nms_thin(const EdgeMap& prob, double tau) { return thin_zhang_suen(binarize(suppress_non_maxima(prob), tau)); }

namespace {

// Hopcroft-Karp over pixel indices. Left = predicted pixels, right = GT positives.
class Matcher {
public:
    Matcher(const EdgeMap& gt, double d_max, double eta) : h_(gt.height), w_(gt.width) {
        if (gt.channels != 1) throw std::invalid_argument("ground truth must be single-channel");
        if (!(d_max >= 0.0)) throw std::invalid_argument("matching distance must be non-negative");
        const long r = static_cast<long>(std::floor(d_max));
        const double r2 = d_max * d_max + 1e-12;
        for (long dy = -r; dy <= r; ++dy)
            for (long dx = -r; dx <= r; ++dx)
                if (static_cast<double>(dy * dy + dx * dx) <= r2) offsets_.push_back({dy, dx});

        gt_index_.assign(h_ * w_, -1);
        near_dont_care_.assign(h_ * w_, 0);
        for (std::size_t i = 0; i < h_ * w_; ++i) {
            const double g = gt.pixels[i];
            if (g >= eta) {
                gt_index_[i] = static_cast<int>(gt_count_++);
            } else if (g > 0.0) {
                for_neighbours(i, [&](std::size_t j) { near_dont_care_[j] = 1; });
            }
        }
    }

    MatchCounts count(const BinaryMap& pred) {
        if (pred.height != h_ || pred.width != w_) throw std::invalid_argument("prediction and ground truth differ in size");
        // Penalizable predictions first so the maximum matching covers as many of them as possible.
        left_.clear();
        std::size_t penalizable = 0;
        for (int phase = 0; phase < 2; ++phase)
            for (std::size_t i = 0; i < pred.bits.size(); ++i)
                if (pred.bits[i] && near_dont_care_[i] == phase) {
                    left_.push_back(i);
                    penalizable += phase == 0;
                }

        adj_start_.assign(1, 0);
        adj_.clear();
        for (std::size_t i : left_) {
            for_neighbours(i, [&](std::size_t j) {
                if (gt_index_[j] >= 0) adj_.push_back(gt_index_[j]);
            });
            adj_start_.push_back(adj_.size());
        }
        match_left_.assign(left_.size(), -1);
        match_right_.assign(gt_count_, -1);

        run(penalizable);
        std::size_t penalizable_matched = 0;
        for (std::size_t u = 0; u < penalizable; ++u) penalizable_matched += match_left_[u] >= 0;
        run(left_.size());

        MatchCounts c;
        for (int m : match_left_) c.tp += m >= 0;
        c.fp = penalizable - penalizable_matched;
        c.fn = gt_count_ - c.tp;
        return c;
    }

private:
    template <class F>
    void for_neighbours(std::size_t i, F&& f) const {
        const long y = static_cast<long>(i / w_), x = static_cast<long>(i % w_);
        for (const auto& [dy, dx] : offsets_) {
            const long yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(h_) || xx >= static_cast<long>(w_)) continue;
            f(static_cast<std::size_t>(yy) * w_ + static_cast<std::size_t>(xx));
        }
    }

    // Augments the current matching until maximum among left vertices [0, active).
    void run(std::size_t active) {
        constexpr int inf = std::numeric_limits<int>::max();
        std::vector<int> dist(active);
        while (true) {
            std::queue<std::size_t> q;
            for (std::size_t u = 0; u < active; ++u) {
                dist[u] = match_left_[u] < 0 ? 0 : inf;
                if (dist[u] == 0) q.push(u);
            }
            bool found = false;
            while (!q.empty()) {
                const std::size_t u = q.front();
                q.pop();
                for (std::size_t e = adj_start_[u]; e < adj_start_[u + 1]; ++e) {
                    const int v = match_right_[static_cast<std::size_t>(adj_[e])];
                    if (v < 0) {
                        found = true;
                    } else if (static_cast<std::size_t>(v) < active && dist[static_cast<std::size_t>(v)] == inf) {
                        dist[static_cast<std::size_t>(v)] = dist[u] + 1;
                        q.push(static_cast<std::size_t>(v));
                    }
                }
            }
            if (!found) return;
            std::size_t augmented = 0;
            for (std::size_t u = 0; u < active; ++u)
                if (match_left_[u] < 0 && augment(u, dist, active)) ++augmented;
            if (augmented == 0) return;
        }
    }

    bool augment(std::size_t u, std::vector<int>& dist, std::size_t active) {
        for (std::size_t e = adj_start_[u]; e < adj_start_[u + 1]; ++e) {
            const int r = adj_[e];
            const int v = match_right_[static_cast<std::size_t>(r)];
            const bool ok = v < 0 || (static_cast<std::size_t>(v) < active && dist[static_cast<std::size_t>(v)] == dist[u] + 1 &&
                                      augment(static_cast<std::size_t>(v), dist, active));
            if (ok) {
                match_left_[u] = r;
                match_right_[static_cast<std::size_t>(r)] = static_cast<int>(u);
                return true;
            }
        }
        dist[u] = std::numeric_limits<int>::max();
        return false;
    }

    std::size_t h_, w_;
    std::vector<std::pair<long, long>> offsets_;
    std::vector<int> gt_index_;
    std::vector<std::uint8_t> near_dont_care_;
    std::size_t gt_count_ = 0;

    std::vector<std::size_t> left_;
    std::vector<std::size_t> adj_start_;
    std::vector<int> adj_;
    std::vector<int> match_left_, match_right_;
};

}  // namespace

MatchCounts match_boundaries(const BinaryMap& pred, const EdgeMap& gt, double d_max, double eta) {
    Matcher m(gt, d_max, eta);
    return m.count(pred);
}

MatchCounts match_boundaries(const BinaryMap& pred, const EdgeMap& gt, const MatchTolerance& tol, double eta) {
    tol.validate();
    return match_boundaries(pred, gt, tol.max_distance(gt.height, gt.width), eta);
}

double f_score(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

PRF prf(const MatchCounts& c) {
    PRF r;
    r.precision = c.tp + c.fp == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    r.recall = c.tp + c.fn == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    r.f = f_score(r.precision, r.recall);
    return r;
}

const char* mode_name(EvalMode mode) { return mode == EvalMode::seval ? "SEval" : "CEval"; }

std::vector<double> uniform_thresholds(std::size_t n) {
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
    return t;
}

std::vector<MatchCounts> sweep_image(const EdgeMap& pred, const EdgeMap& gt, const SweepOptions& opts) {
    if (!pred.same_dims(gt)) throw std::invalid_argument("prediction and ground truth differ in size");
    opts.tolerance.validate();
    Matcher matcher(gt, opts.tolerance.max_distance(gt.height, gt.width), opts.eta);
    const EdgeMap base = opts.mode == EvalMode::seval ? suppress_non_maxima(pred) : pred;
    std::vector<MatchCounts> out;
    out.reserve(opts.thresholds.size());
    for (double tau : opts.thresholds) {
        BinaryMap b = binarize(base, tau);
        if (opts.mode == EvalMode::seval) b = thin_zhang_suen(std::move(b));
        out.push_back(matcher.count(b));
    }
    return out;
}

ThresholdSweep sweep(const std::vector<std::string>& ids, const std::vector<EdgeMap>& preds,
                     const std::vector<EdgeMap>& gts, const SweepOptions& opts) {
    if (ids.size() != preds.size() || preds.size() != gts.size())
        throw std::invalid_argument("ids, predictions and ground truths must have equal counts");
    if (opts.thresholds.empty()) throw std::invalid_argument("threshold list is empty");
    ThresholdSweep s;
    s.mode = opts.mode;
    s.thresholds = opts.thresholds;
    s.ids = ids;
    for (std::size_t i = 0; i < preds.size(); ++i) s.counts.push_back(sweep_image(preds[i], gts[i], opts));
    return s;
}

namespace {

// Higher F wins, then fewer errors; earlier (lower) thresholds win remaining ties.
bool better(const PRF& p, const MatchCounts& c, double best_f, const MatchCounts& best_c) {
    if (p.f != best_f) return p.f > best_f;
    return c.fp + c.fn < best_c.fp + best_c.fn;
}

}  // namespace

EvalReport ods_ois(const ThresholdSweep& s) {
    if (s.counts.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");
    const std::size_t nt = s.thresholds.size();
    for (const auto& row : s.counts)
        if (row.size() != nt) throw std::invalid_argument("sweep rows must cover every threshold");

    EvalReport r;
    r.mode = s.mode;
    double best = -1.0;
    for (std::size_t k = 0; k < nt; ++k) {
        MatchCounts total;
        for (const auto& row : s.counts) total += row[k];
        const PRF p = prf(total);
        if (k == 0 || better(p, total, best, r.ods_counts)) {
            best = p.f;
            r.ods_threshold = s.thresholds[k];
            r.ods_counts = total;
            r.ods = p;
        }
    }

    for (std::size_t i = 0; i < s.counts.size(); ++i) {
        ImageScore img;
        img.id = i < s.ids.size() ? s.ids[i] : std::to_string(i);
        double img_best = -1.0;
        for (std::size_t k = 0; k < nt; ++k) {
            const PRF p = prf(s.counts[i][k]);
            if (k == 0 || better(p, s.counts[i][k], img_best, img.counts)) {
                img_best = p.f;
                img.threshold = s.thresholds[k];
                img.counts = s.counts[i][k];
                img.score = p;
            }
        }
        r.ois_counts += img.counts;
        r.images.push_back(std::move(img));
    }
    r.ois = prf(r.ois_counts);
    return r;
}

namespace {

std::string fmt(const char* pattern, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

}  // namespace

std::string report_csv(const EvalReport& r) {
    std::string out = "mode,id,threshold,tp,fp,fn,precision,recall,f\n";
    auto row = [&](const std::string& id, const std::string& tau, const MatchCounts& c, const PRF& p) {
        out += fmt("%s,%s,%s,%zu,%zu,%zu,%.6f,%.6f,%.6f\n", mode_name(r.mode), id.c_str(), tau.c_str(), c.tp, c.fp, c.fn,
                   p.precision, p.recall, p.f);
    };
    for (const ImageScore& img : r.images) row(img.id, fmt("%.2f", img.threshold), img.counts, img.score);
    row("ODS", fmt("%.2f", r.ods_threshold), r.ods_counts, r.ods);
    row("OIS", "", r.ois_counts, r.ois);  // thresholds differ per image
    return out;
}

std::string report_text(const EvalReport& r) {
    std::string out = fmt("%s over %zu images\n", mode_name(r.mode), r.images.size());
    out += fmt("  ODS  F=%.4f  P=%.4f  R=%.4f  (threshold %.2f)\n", r.ods.f, r.ods.precision, r.ods.recall, r.ods_threshold);
    out += fmt("  OIS  F=%.4f  P=%.4f  R=%.4f\n", r.ois.f, r.ois.precision, r.ois.recall);
    return out;
}

BinaryMap region_boundary(const BinaryMap& region) {
    BinaryMap b(region.height, region.width);
    const long h = static_cast<long>(region.height), w = static_cast<long>(region.width);
    auto inside = [&](long y, long x) { return y >= 0 && x >= 0 && y < h && x < w && region.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)); };
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            if (inside(y, x) && !(inside(y - 1, x) && inside(y + 1, x) && inside(y, x - 1) && inside(y, x + 1)))
                b.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1;
    return b;
}

WallMetrics wall_metrics(const EdgeMap& pred, const EdgeMap& gt_mask, const MatchTolerance& tol) {
    if (!pred.same_dims(gt_mask)) throw std::invalid_argument("prediction and wall mask differ in size");
    const BinaryMap p = binarize(pred, 0.5), g = binarize(gt_mask, 0.5);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < p.bits.size(); ++i) {
        inter += p.bits[i] && g.bits[i];
        uni += p.bits[i] || g.bits[i];
    }
    WallMetrics m;
    m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    m.boundary_counts = match_boundaries(region_boundary(p), to_edge_map(region_boundary(g)), tol, 0.5);
    m.boundary = prf(m.boundary_counts);
    return m;
}

std::vector<GammaRow> gamma_sweep(const std::vector<double>& gammas,
                                  const std::function<std::vector<EdgeMap>(double)>& predict) {
    std::vector<GammaRow> rows;
    for (double g : gammas) {
        const std::vector<EdgeMap> preds = predict(g);
        if (preds.empty()) throw std::invalid_argument("gamma sweep needs at least one image");
        double sum = 0.0;
        for (const EdgeMap& p : preds) sum += mean_value(p);
        rows.push_back({g, sum / static_cast<double>(preds.size())});
    }
    return rows;
}

std::string gamma_csv(const std::vector<GammaRow>& rows) {
    std::string out = "gamma,mean_brightness\n";
    for (const GammaRow& r : rows) out += fmt("%.4f,%.8f\n", r.gamma, r.brightness);
    return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman needs two equal-length samples of size >= 2");
    const std::vector<double> ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace flowedge
