#pragma once

#include <Eigen/Dense>

namespace sldc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace sldc
