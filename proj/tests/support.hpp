#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls into the solver it is used to check.

#include "pds/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace pds::oracle {

inline Matrix gaussian_matrix(Index n, Index m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix X(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) X(i, j) = normal(rng);
  return X;
}

inline Vector gaussian_vector(Index n, std::mt19937_64& rng) { return gaussian_matrix(n, 1, rng).col(0); }

/// He_k(x) from the closed-form monomial expansion
/// k! sum_m (-1)^m x^(k-2m) / (m! (k-2m)! 2^m).
inline double hermite_monomial(double x, int k) {
  double total = 0.0;
  for (int m = 0; 2 * m <= k; ++m) {
    const double coef = std::tgamma(k + 1.0) / (std::tgamma(m + 1.0) * std::tgamma(k - 2.0 * m + 1.0) * std::pow(2.0, m));
    total += (m % 2 ? -1.0 : 1.0) * coef * std::pow(x, k - 2 * m);
  }
  return total;
}

/// Exact minimizer of sum (y - Xt)^2 + lambda sum psi_j |t_j| for small M:
/// enumerate the 3^M sign patterns, solve the stationarity system on the
/// implied support and keep the feasible pattern with the lowest objective.
inline Vector lasso_sign_oracle(const Matrix& X, const Vector& y, double lambda, const Vector& psi) {
  const Index M = X.cols();
  Index patterns = 1;
  for (Index j = 0; j < M; ++j) patterns *= 3;
  double best = std::numeric_limits<double>::infinity();
  Vector best_t = Vector::Zero(M);
  for (Index code = 0; code < patterns; ++code) {
    std::vector<int> sign(static_cast<std::size_t>(M));
    std::vector<Index> support;
    Index c = code;
    for (Index j = 0; j < M; ++j, c /= 3) {
      sign[static_cast<std::size_t>(j)] = static_cast<int>(c % 3) - 1;
      if (sign[static_cast<std::size_t>(j)] != 0) support.push_back(j);
    }
    Vector t = Vector::Zero(M);
    if (!support.empty()) {
      const auto a = static_cast<Index>(support.size());
      Matrix XA(X.rows(), a);
      Vector rhs(a);
      for (Index k = 0; k < a; ++k) XA.col(k) = X.col(support[static_cast<std::size_t>(k)]);
      rhs = XA.transpose() * y;
      for (Index k = 0; k < a; ++k) {
        const Index j = support[static_cast<std::size_t>(k)];
        rhs(k) -= 0.5 * lambda * psi(j) * sign[static_cast<std::size_t>(j)];
      }
      const Vector tA = (XA.transpose() * XA).ldlt().solve(rhs);
      bool feasible = true;
      for (Index k = 0; k < a; ++k) {
        const Index j = support[static_cast<std::size_t>(k)];
        if (tA(k) * sign[static_cast<std::size_t>(j)] < 0.0) feasible = false;
        t(j) = tA(k);
      }
      if (!feasible) continue;
    }
    const Vector g = X.transpose() * (y - X * t);
    bool optimal = true;
    for (Index j = 0; j < M; ++j)
      if (sign[static_cast<std::size_t>(j)] == 0 && 2.0 * std::fabs(g(j)) > lambda * psi(j) * (1.0 + 1e-12))
        optimal = false;
    if (!optimal) continue;
    const double obj = (y - X * t).squaredNorm() + lambda * (psi.array() * t.array().abs()).sum();
    if (obj < best) {
      best = obj;
      best_t = t;
    }
  }
  return best_t;
}

/// Sparse linear instance: Gaussian X, `k` unit-size coefficients, unit noise.
struct SparseInstance {
  Matrix X;
  Vector y;
  Vector beta;
  Vector psi;
  double lambda = 0.0;
};

inline SparseInstance sparse_instance(Index n, Index M, Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SparseInstance s;
  s.X = gaussian_matrix(n, M, rng);
  s.beta = Vector::Zero(M);
  for (Index j = 0; j < std::min(k, M); ++j) s.beta(j) = (j % 2 ? -1.0 : 1.0);
  s.y = s.X * s.beta + gaussian_vector(n, rng);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  s.psi.resize(M);
  for (Index j = 0; j < M; ++j) s.psi(j) = u(rng);
  const Vector xty = s.X.transpose() * s.y;
  double lmax = 0.0;
  for (Index j = 0; j < M; ++j) lmax = std::max(lmax, 2.0 * std::fabs(xty(j)) / s.psi(j));
  std::uniform_real_distribution<double> frac(0.05, 0.6);
  s.lambda = frac(rng) * lmax;
  return s;
}

}  // namespace pds::oracle
