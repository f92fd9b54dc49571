#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>

namespace capra {

using Real = double;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Named parameter collection; std::map keeps a stable, sorted iteration
// order which the optimizer and serializers rely on.
using ParamMap = std::map<std::string, Mat>;

}  // namespace capra
