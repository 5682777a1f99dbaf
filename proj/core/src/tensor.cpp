#include "flowedge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <new>
#include <stdexcept>
#include <unordered_map>

namespace flowedge {

namespace detail {
namespace {

constexpr std::align_val_t kAlign{64};
constexpr std::size_t kPoolMinBytes = std::size_t{1} << 16;
constexpr std::size_t kPoolMaxCached = std::size_t{512} << 20;

struct BlockCache {
    std::unordered_map<std::size_t, std::vector<void*>> free;
    std::size_t cached = 0;
    ~BlockCache() {
        for (auto& [bytes, blocks] : free)
            for (void* p : blocks) ::operator delete(p, kAlign);
    }
};

BlockCache& cache() {
    thread_local BlockCache c;
    return c;
}

}  // namespace

void* storage_allocate(std::size_t bytes) {
    if (bytes >= kPoolMinBytes) {
        BlockCache& c = cache();
        if (auto it = c.free.find(bytes); it != c.free.end() && !it->second.empty()) {
            void* p = it->second.back();
            it->second.pop_back();
            c.cached -= bytes;
            return p;
        }
    }
    return ::operator new(bytes, kAlign);
}

void storage_release(void* p, std::size_t bytes) noexcept {
    if (bytes >= kPoolMinBytes) {
        BlockCache& c = cache();
        if (c.cached + bytes <= kPoolMaxCached) {
            try {
                c.free[bytes].push_back(p);
                c.cached += bytes;
                return;
            } catch (...) {
            }
        }
    }
    ::operator delete(p, kAlign);
}

}  // namespace detail

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_numel(shape_) != data_.size())
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
}

Tensor Tensor::from_storage(Shape shape, Storage data) {
    if (shape_numel(shape) != data.size())
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
    if (shape_.empty()) return 0;
    if (shape_.size() == 1) return 1;
    return data_.size() / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

double Tensor::item() const {
    if (data_.size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return from_storage(std::move(shape), data_);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace flowedge
