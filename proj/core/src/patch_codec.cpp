#include "flowedge/patch_codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eigen_views.hpp"
#include "flowedge/errors.hpp"
#include "flowedge/rng.hpp"

namespace flowedge {

namespace {

std::vector<double> centered_shift(const Tensor& mix) {
    const std::size_t c = mix.rows();
    std::vector<double> shift(c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) row_sum += mix.at(i, j);
        shift[i] = -0.5 * row_sum;
    }
    return shift;
}

}  // namespace

PatchCodec::PatchCodec(std::size_t patch, std::uint64_t seed) : patch_(patch), seed_(seed) {
    if (patch == 0) throw std::invalid_argument("patch size must be positive");
    const auto c = static_cast<Eigen::Index>(patch * patch);
    Rng rng(seed);
    detail::RowMat gauss(c, c);
    for (Eigen::Index i = 0; i < c; ++i)
        for (Eigen::Index j = 0; j < c; ++j) gauss(i, j) = rng.normal();
    Eigen::HouseholderQR<detail::RowMat> qr(gauss);
    detail::RowMat q = qr.householderQ();
    const detail::RowMat r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign convention that makes the factorization unique.
    for (Eigen::Index j = 0; j < c; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
    mix_ = Tensor({patch * patch, patch * patch});
    detail::view(mix_) = q;
    shift_ = centered_shift(mix_);
}

PatchCodec::PatchCodec(std::size_t patch, Tensor mix, bool centered) : patch_(patch), mix_(std::move(mix)) {
    const std::size_t c = patch * patch;
    if (patch == 0 || mix_.shape() != Shape{c, c})
        throw std::invalid_argument("mixing matrix must be " + std::to_string(c) + "x" + std::to_string(c));
    auto m = detail::view(mix_);
    const double err = (m.transpose() * m - detail::RowMat::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff();
    if (err > 1e-10) throw std::invalid_argument("mixing matrix is not orthogonal");
    shift_ = centered ? centered_shift(mix_) : std::vector<double>(c, 0.0);
}

PatchCodec PatchCodec::identity(std::size_t patch) {
    const std::size_t c = patch * patch;
    Tensor eye({c, c});
    for (std::size_t i = 0; i < c; ++i) eye.at(i, i) = 1.0;
    return PatchCodec(patch, std::move(eye), false);
}

Shape PatchCodec::latent_shape(std::size_t height, std::size_t width) const {
    if (height % patch_ != 0 || width % patch_ != 0) {
        const std::size_t pad_h = (patch_ - height % patch_) % patch_;
        const std::size_t pad_w = (patch_ - width % patch_) % patch_;
        throw DataError("image " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not divisible by patch size " + std::to_string(patch_) + "; pad by " +
                        std::to_string(pad_h) + " rows and " + std::to_string(pad_w) + " columns");
    }
    return {channels(), height / patch_, width / patch_};
}

Latent PatchCodec::encode(const EdgeMap& y) const {
    if (y.channels != 1) throw DataError("codec expects a single-channel map");
    const Shape shape = latent_shape(y.height, y.width);
    const std::size_t c = channels(), h = shape[1], w = shape[2];
    Latent z(shape);
    std::vector<double> u(c);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            for (std::size_t a = 0; a < patch_; ++a)
                for (std::size_t b = 0; b < patch_; ++b) u[a * patch_ + b] = y.at(i * patch_ + a, j * patch_ + b);
            for (std::size_t k = 0; k < c; ++k) {
                double acc = shift_[k];
                for (std::size_t l = 0; l < c; ++l) acc += mix_.at(k, l) * u[l];
                z[(k * h + i) * w + j] = acc;
            }
        }
    return z;
}

EdgeMap PatchCodec::decode(const Latent& z, bool clamp) const {
    const std::size_t c = channels();
    if (z.rank() != 3 || z.dim(0) != c)
        throw std::invalid_argument("latent shape " + shape_str(z.shape()) + " does not match codec with " +
                                    std::to_string(c) + " channels");
    const std::size_t h = z.dim(1), w = z.dim(2);
    EdgeMap y(h * patch_, w * patch_);
    std::vector<double> zc(c);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            for (std::size_t k = 0; k < c; ++k) zc[k] = z[(k * h + i) * w + j] - shift_[k];
            for (std::size_t l = 0; l < c; ++l) {
                double acc = 0.0;
                for (std::size_t k = 0; k < c; ++k) acc += mix_.at(k, l) * zc[k];
                if (clamp) acc = std::clamp(acc, 0.0, 1.0);
                y.at(i * patch_ + l / patch_, j * patch_ + l % patch_) = acc;
            }
        }
    return y;
}

Tensor PatchCodec::to_tokens(const Latent& z) {
    if (z.rank() != 3) throw std::invalid_argument("latent must be rank 3, got " + shape_str(z.shape()));
    const std::size_t c = z.dim(0), h = z.dim(1), w = z.dim(2);
    Tensor t({h * w, c});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t s = 0; s < h * w; ++s) t[s * c + k] = z[k * h * w + s];
    return t;
}

Latent PatchCodec::from_tokens(const Tensor& tokens, std::size_t h, std::size_t w) {
    if (tokens.rows() != h * w) throw std::invalid_argument("token count does not match latent grid");
    const std::size_t c = tokens.cols();
    Latent z({c, h, w});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t s = 0; s < h * w; ++s) z[k * h * w + s] = tokens[s * c + k];
    return z;
}

EdgeMap clamp_probability(const EdgeMap& y, double eps) {
    EdgeMap out = y;
    for (double& v : out.pixels) v = std::clamp(v, eps, 1.0 - eps);
    return out;
}

}  // namespace flowedge
