#pragma once

#include <Eigen/Core>

namespace sicnn::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline MatMap mat(double* p, Eigen::Index rows, Eigen::Index cols) { return MatMap(p, rows, cols); }
inline ConstMatMap mat(const double* p, Eigen::Index rows, Eigen::Index cols) {
    return ConstMatMap(p, rows, cols);
}

}  // namespace sicnn::detail
