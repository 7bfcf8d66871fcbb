#pragma once

#include <Eigen/Core>

namespace ltmx {

// Batch-major activations: one sample per row, features contiguous (CHW for
// images).
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using IndexMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace ltmx
