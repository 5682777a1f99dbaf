#pragma once

#include <Eigen/Dense>

#include "flowedge/tensor.hpp"

namespace flowedge::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Tensor storage is 64-byte aligned.
using MatView = Eigen::Map<RowMat, Eigen::Aligned64>;
using ConstMatView = Eigen::Map<const RowMat, Eigen::Aligned64>;
using VecView = Eigen::Map<Eigen::VectorXd, Eigen::Aligned64>;
using ConstVecView = Eigen::Map<const Eigen::VectorXd, Eigen::Aligned64>;

inline ConstMatView view(const Tensor& t) {
    return ConstMatView(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline MatView view(Tensor& t) {
    return MatView(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline ConstVecView flat(const Tensor& t) {
    return ConstVecView(t.data().data(), static_cast<Eigen::Index>(t.size()));
}
inline VecView flat(Tensor& t) { return VecView(t.data().data(), static_cast<Eigen::Index>(t.size())); }

}  // namespace flowedge::detail
