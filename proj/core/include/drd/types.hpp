#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace drd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Training-index timestep in [0, T_train].
using Timestep = int;
using ClassId = int;

// Raised when computation diverges (NaN/Inf loss) during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or incompatible persisted artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace drd
