#pragma once

#include <Eigen/Dense>

namespace compile {

// Row-major so that a (steps * batch) x features block is contiguous per step.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace compile
