#pragma once

#include <Eigen/Core>

namespace marca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace marca
