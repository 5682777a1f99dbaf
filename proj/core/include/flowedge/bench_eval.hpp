#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flowedge/image.hpp"

namespace flowedge {

struct BinaryMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> bits;

    BinaryMap() = default;
    BinaryMap(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
    std::size_t count() const;

    friend bool operator==(const BinaryMap&, const BinaryMap&) = default;
};

BinaryMap binarize(const EdgeMap& m, double tau);  // m >= tau
EdgeMap to_edge_map(const BinaryMap& b);

struct MatchTolerance {
    double fraction = 0.0075;  // of the image diagonal
    double max_distance(std::size_t height, std::size_t width) const;
    void validate() const;
};

// Non-maximum suppression only: pixels that are not >= both interpolated
// neighbours across the local edge orientation are zeroed. Orientation is taken
// from the second derivatives of the sigma=1 smoothed map.
EdgeMap suppress_non_maxima(const EdgeMap& prob);
BinaryMap thin_zhang_suen(BinaryMap b);
// suppress_non_maxima -> binarize at tau -> thin_zhang_suen.
BinaryMap nms_thin(const EdgeMap& prob, double tau);

struct MatchCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    MatchCounts& operator+=(const MatchCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

// GT positives are gt >= eta, don't-care pixels 0 < gt < eta. Maximum-cardinality
// matching between predicted pixels and GT positives within d_max. Among the
// maximum matchings, one leaving the fewest penalizable predictions unmatched is
// used, so FP is well defined: unmatched predictions farther than d_max from every
// don't-care pixel.
MatchCounts match_boundaries(const BinaryMap& pred, const EdgeMap& gt, const MatchTolerance& tol, double eta);
MatchCounts match_boundaries(const BinaryMap& pred, const EdgeMap& gt, double d_max, double eta);

struct PRF {
    double precision = 1.0;
    double recall = 1.0;
    double f = 1.0;
};

double f_score(double precision, double recall);
// P = 1 when nothing is predicted, R = 1 when there is nothing to find.
PRF prf(const MatchCounts& c);

enum class EvalMode { seval, ceval };
const char* mode_name(EvalMode mode);

std::vector<double> uniform_thresholds(std::size_t n = 99);

struct ThresholdSweep {
    EvalMode mode = EvalMode::ceval;
    std::vector<double> thresholds;
    std::vector<std::string> ids;
    std::vector<std::vector<MatchCounts>> counts;  // [image][threshold]
};

struct SweepOptions {
    EvalMode mode = EvalMode::ceval;
    MatchTolerance tolerance;
    double eta = 0.3;
    std::vector<double> thresholds = uniform_thresholds();
};

std::vector<MatchCounts> sweep_image(const EdgeMap& pred, const EdgeMap& gt, const SweepOptions& opts);
ThresholdSweep sweep(const std::vector<std::string>& ids, const std::vector<EdgeMap>& preds,
                     const std::vector<EdgeMap>& gts, const SweepOptions& opts);

struct ImageScore {
    std::string id;
    double threshold = 0.0;
    MatchCounts counts;
    PRF score;
};

struct EvalReport {
    EvalMode mode = EvalMode::ceval;
    double ods_threshold = 0.0;
    MatchCounts ods_counts;
    PRF ods;
    MatchCounts ois_counts;
    PRF ois;
    std::vector<ImageScore> images;  // each image at its own best threshold
};

// ODS: best F over thresholds of the summed counts. OIS: counts summed at each
// image's best threshold. Ties in F go to fewer errors (FP + FN), then to the
// lowest threshold.
EvalReport ods_ois(const ThresholdSweep& sweep);

std::string report_csv(const EvalReport& r);
std::string report_text(const EvalReport& r);

struct WallMetrics {
    double iou = 0.0;
    MatchCounts boundary_counts;
    PRF boundary;
};

// Region pixels are >= 0.5 in both maps. The boundary of a region is every region
// pixel with a 4-neighbour outside it (the image border counts as outside).
BinaryMap region_boundary(const BinaryMap& region);
WallMetrics wall_metrics(const EdgeMap& pred, const EdgeMap& gt_mask, const MatchTolerance& tol);

struct GammaRow {
    double gamma = 0.0;
    double brightness = 0.0;  // mean raw prediction value over the dataset
};

// `predict` returns the raw predictions of the whole dataset at one guidance scale.
std::vector<GammaRow> gamma_sweep(const std::vector<double>& gammas,
                                  const std::function<std::vector<EdgeMap>(double)>& predict);
std::string gamma_csv(const std::vector<GammaRow>& rows);

// Average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace flowedge
