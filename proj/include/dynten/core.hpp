#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace dynten {

using Matrix = Eigen::MatrixXd;

// Base type for every error the library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Raised when an ODE solve produces a non-finite state.
class OdeDivergence : public Error {
 public:
  OdeDivergence(const std::string& what, double time_reached)
      : Error(what), time_reached(time_reached) {}
  double time_reached;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

inline std::string shape_str(const Matrix& m) { return shape_str(m.rows(), m.cols()); }

inline void ensure_same_shape(const char* op, Eigen::Index ar, Eigen::Index ac,
                              Eigen::Index br, Eigen::Index bc) {
  if (ar != br || ac != bc) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(ar, ac) + " vs " +
                     shape_str(br, bc));
  }
}

}  // namespace dynten
