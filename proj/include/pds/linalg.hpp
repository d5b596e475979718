#pragma once

#include "pds/core.hpp"

#include <Eigen/QR>

namespace pds {

/// Minimum-norm least squares through a complete orthogonal decomposition.
struct LeastSquares {
  Vector coefficients;
  Vector residuals;
  Index rank = 0;
  bool rank_deficient = false;
};

inline LeastSquares least_squares(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw DomainError("least_squares: row mismatch");
  LeastSquares out;
  if (X.cols() == 0) {
    out.coefficients = Vector::Zero(0);
    out.residuals = y;
    return out;
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(X);
  out.coefficients = cod.solve(y);
  out.residuals = y - X * out.coefficients;
  out.rank = cod.rank();
  out.rank_deficient = out.rank < X.cols();
  return out;
}

/// Residuals of every column of B after projection onto span(X).
inline Matrix project_out(const Matrix& B, const Matrix& X) {
  if (X.cols() == 0) return B;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(X);
  return B - X * cod.solve(B);
}

}  // namespace pds
