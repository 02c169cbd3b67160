#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace aniso {

// Small dense vectors and matrices. Ambient dimension is at most 3 (graphs
// over n <= 2), so storage stays on the stack.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a mathematical operation (e.g. F at 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent user configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Linear algebra failure inside the nonlinear solver.
class SolverError : public Error {
 public:
  using Error::Error;
};

inline Vec unit_vector(int dim, int axis) {
  Vec e = Vec::Zero(dim);
  e(axis) = 1.0;
  return e;
}

}  // namespace aniso
