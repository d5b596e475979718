#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pds {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Sorted, duplicate-free list of column indices.
using IndexSet = std::vector<Index>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation (e.g. p outside (0,1)).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Degenerate data: zero-variance columns, vanishing loadings, singular Gram blocks.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

inline IndexSet set_union(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i] < b[j])) {
      out.push_back(a[i++]);
    } else if (i == a.size() || b[j] < a[i]) {
      out.push_back(b[j++]);
    } else {
      out.push_back(a[i]);
      ++i;
      ++j;
    }
  }
  return out;
}

inline Matrix select_columns(const Matrix& X, const IndexSet& cols) {
  Matrix out(X.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = X.col(cols[k]);
  return out;
}

/// Horizontal concatenation [1, blocks...].
inline Matrix with_intercept(std::initializer_list<const Matrix*> blocks, Index n) {
  Index cols = 1;
  for (const Matrix* b : blocks) cols += b->cols();
  Matrix out(n, cols);
  out.col(0).setOnes();
  Index at = 1;
  for (const Matrix* b : blocks) {
    out.middleCols(at, b->cols()) = *b;
    at += b->cols();
  }
  return out;
}

}  // namespace pds
