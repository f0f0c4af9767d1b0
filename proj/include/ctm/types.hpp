#pragma once

#include <Eigen/Dense>

namespace ctm {

// Row-major so that one document is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

}  // namespace ctm
