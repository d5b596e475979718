#pragma once

// Weighted-penalty Lasso
//
//   minimize  sum_i (y_i - x_i't)^2 + lambda * sum_j psi_j |t_j|
//
// solved by cyclic coordinate descent on the Gram matrix, together with the
// Gaussian-quantile penalty level and the iterated (initial -> refined)
// penalty loadings, and the Post-Lasso refit.

#include "pds/core.hpp"
#include "pds/linalg.hpp"
#include "pds/normal.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace pds {

struct LassoConfig {
  double c = 1.1;
  /// Unset means 0.1 / log(max(K * L, n)), resolved by the caller that knows K, L and n.
  std::optional<double> gamma;
  int n_loadings = 15;
  double cd_tol = 1e-8;
  int cd_max_iter = 10000;
  double kkt_tol = 1e-6;
  bool record_objective = false;
};

inline double default_gamma(Index K, Index L, Index n) {
  const double m = static_cast<double>(std::max(K * L, n));
  return 0.1 / std::log(m);
}

inline double resolve_gamma(const LassoConfig& cfg, Index K, Index L, Index n) {
  return cfg.gamma ? *cfg.gamma : default_gamma(K, L, n);
}

enum class Stage { first_stage, reduced_form };

/// 2 c sqrt(n) Phi^{-1}(1 - gamma / (2 n_targets L)).
inline double penalty_level(Index n, Index n_targets, Index L, double c, double gamma) {
  if (n < 1 || L < 1 || n_targets < 1) throw DomainError("penalty_level: n, L and n_targets must be positive");
  if (!(c > 0.0)) throw DomainError("penalty_level: c must be positive");
  const double tail = gamma / (2.0 * static_cast<double>(n_targets) * static_cast<double>(L));
  if (!(tail > 0.0) || tail >= 1.0) throw DomainError("penalty_level: gamma / (2 n_targets L) must lie in (0, 1)");
  return 2.0 * c * std::sqrt(static_cast<double>(n)) * normal_quantile(1.0 - tail);
}

/// First stage uses n_targets = K (the number of treatment terms); reduced form uses 1.
inline double penalty_level(Index n, Index n_targets, Index L, const LassoConfig& cfg, Stage stage) {
  const Index targets = stage == Stage::reduced_form ? 1 : n_targets;
  const double gamma = cfg.gamma ? *cfg.gamma : default_gamma(targets, L, n);
  return penalty_level(n, targets, L, cfg.c, gamma);
}

namespace detail {

inline Vector loadings_from_weights(const Matrix& X_sq, const Vector& resid, const char* what) {
  const Index n = X_sq.rows();
  if (n == 0) throw DegenerateInput(std::string(what) + ": empty sample");
  const Vector r2 = resid.array().square().matrix();
  Vector psi = ((X_sq.transpose() * r2) / static_cast<double>(n)).array().sqrt().matrix();
  for (Index j = 0; j < psi.size(); ++j) {
    if (!(psi(j) > 0.0) || !std::isfinite(psi(j)))
      throw DegenerateInput(std::string(what) + ": loading " + std::to_string(j) + " is zero");
  }
  return psi;
}

}  // namespace detail

/// psi_j = sqrt(mean_i X_ij^2 (target_i - mean(target))^2).
inline Vector initial_loadings(const Matrix& X, const Vector& target) {
  if (X.rows() != target.size()) throw DomainError("initial_loadings: row mismatch");
  const Vector centred = (target.array() - target.mean()).matrix();
  return detail::loadings_from_weights(X.array().square().matrix(), centred, "initial_loadings");
}

/// psi_j = sqrt(mean_i X_ij^2 residual_i^2).
inline Vector refined_loadings(const Matrix& X, const Vector& residuals) {
  if (X.rows() != residuals.size()) throw DomainError("refined_loadings: row mismatch");
  return detail::loadings_from_weights(X.array().square().matrix(), residuals, "refined_loadings");
}

struct LassoFit {
  Vector coefficients;
  IndexSet active_set;
  double lambda = 0.0;
  Vector loadings;
  int iterations = 0;
  bool converged = false;
  bool perfect_fit = false;
  bool loadings_degenerate = false;
  int loading_rounds = 0;
  std::vector<double> objective_trace;
};

/// Design with its Gram matrix and squared entries precomputed, shared by
/// every Lasso run on the same regressors.
class LassoDesign {
 public:
  explicit LassoDesign(Matrix X) : X_(std::move(X)) {
    gram_.noalias() = X_.transpose() * X_;
    X_sq_ = X_.array().square().matrix();
  }

  const Matrix& X() const { return X_; }
  const Matrix& gram() const { return gram_; }
  const Matrix& squared() const { return X_sq_; }
  Index rows() const { return X_.rows(); }
  Index cols() const { return X_.cols(); }

  Vector initial_loadings(const Vector& target) const {
    const Vector centred = (target.array() - target.mean()).matrix();
    return detail::loadings_from_weights(X_sq_, centred, "initial_loadings");
  }
  Vector refined_loadings(const Vector& residuals) const {
    return detail::loadings_from_weights(X_sq_, residuals, "refined_loadings");
  }

 private:
  Matrix X_;
  Matrix gram_;
  Matrix X_sq_;
};

namespace detail {

inline double soft_threshold(double z, double thr) {
  if (z > thr) return z - thr;
  if (z < -thr) return z + thr;
  return 0.0;
}

inline double lasso_objective(const Matrix& G, const Vector& xty, double yty, const Vector& t, double lambda,
                              const Vector& psi) {
  return yty - 2.0 * t.dot(xty) + t.dot(G * t) + lambda * (psi.array() * t.array().abs()).sum();
}

/// Largest KKT violation given the exact gradient X'(y - Xt).
inline double kkt_violation(const Vector& grad, const Vector& t, double lambda, const Vector& psi) {
  double worst = 0.0;
  for (Index j = 0; j < t.size(); ++j) {
    const double bound = lambda * psi(j);
    double v;
    if (t(j) != 0.0) {
      v = std::fabs(2.0 * grad(j) - bound * (t(j) > 0.0 ? 1.0 : -1.0));
    } else {
      v = std::max(0.0, 2.0 * std::fabs(grad(j)) - bound);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

inline Vector exact_gradient(const Matrix& G, const Vector& xty, const Vector& t) {
  Vector grad = xty;
  for (Index j = 0; j < t.size(); ++j)
    if (t(j) != 0.0) grad.noalias() -= G.col(j) * t(j);
  return grad;
}

/// Cyclic coordinate descent from zero. Alternates full sweeps with sweeps
/// over the current support; stops once a full sweep moves no coefficient
/// by more than cd_tol and the KKT conditions hold to kkt_tol.
inline LassoFit coordinate_descent(const Matrix& G, const Vector& xty, double yty, double lambda, const Vector& psi,
                                   const LassoConfig& cfg) {
  const Index M = G.rows();
  LassoFit fit;
  fit.lambda = lambda;
  fit.loadings = psi;
  Vector t = Vector::Zero(M);
  Vector grad = xty;
  const Vector thr = (0.5 * lambda) * psi;

  auto update = [&](Index j) {
    const double gjj = G(j, j);
    if (gjj <= 0.0) return 0.0;
    const double tnew = soft_threshold(grad(j) + gjj * t(j), thr(j)) / gjj;
    const double d = tnew - t(j);
    if (d != 0.0) {
      grad.noalias() -= G.col(j) * d;
      t(j) = tnew;
    }
    return std::fabs(d);
  };

  if (cfg.record_objective) fit.objective_trace.push_back(lasso_objective(G, xty, yty, t, lambda, psi));

  bool full = true;
  IndexSet support;
  while (fit.iterations < cfg.cd_max_iter) {
    ++fit.iterations;
    double max_change = 0.0;
    if (full) {
      for (Index j = 0; j < M; ++j) max_change = std::max(max_change, update(j));
    } else {
      for (Index j : support) max_change = std::max(max_change, update(j));
    }
    if (cfg.record_objective) fit.objective_trace.push_back(lasso_objective(G, xty, yty, t, lambda, psi));

    if (full) {
      if (max_change < cfg.cd_tol) {
        grad = exact_gradient(G, xty, t);
        if (kkt_violation(grad, t, lambda, psi) <= cfg.kkt_tol) {
          fit.converged = true;
          break;
        }
      } else {
        support.clear();
        for (Index j = 0; j < M; ++j)
          if (t(j) != 0.0) support.push_back(j);
        full = support.empty();
      }
    } else if (max_change < cfg.cd_tol) {
      full = true;
    }
  }

  fit.coefficients = t;
  for (Index j = 0; j < M; ++j)
    if (t(j) != 0.0) fit.active_set.push_back(j);
  return fit;
}

inline void check_solve_inputs(Index M, double lambda, const Vector& loadings) {
  if (!(lambda >= 0.0)) throw DomainError("lasso_solve: lambda must be non-negative");
  if (loadings.size() != M) throw DomainError("lasso_solve: loadings length differs from column count");
  for (Index j = 0; j < M; ++j)
    if (!(loadings(j) > 0.0)) throw DomainError("lasso_solve: loadings must be positive");
}

}  // namespace detail

inline LassoFit lasso_solve(const LassoDesign& design, const Vector& y, double lambda, const Vector& loadings,
                            const LassoConfig& cfg = {}) {
  detail::check_solve_inputs(design.cols(), lambda, loadings);
  if (design.rows() != y.size()) throw DomainError("lasso_solve: row mismatch");
  const Vector xty = design.X().transpose() * y;
  return detail::coordinate_descent(design.gram(), xty, y.squaredNorm(), lambda, loadings, cfg);
}

inline LassoFit lasso_solve(const Matrix& X, const Vector& y, double lambda, const Vector& loadings,
                            const LassoConfig& cfg = {}) {
  return lasso_solve(LassoDesign(X), y, lambda, loadings, cfg);
}

/// Max KKT violation of `fit` for the problem (X, y).
inline double kkt_violation(const Matrix& X, const Vector& y, const LassoFit& fit) {
  const Vector grad = X.transpose() * (y - X * fit.coefficients);
  return detail::kkt_violation(grad, fit.coefficients, fit.lambda, fit.loadings);
}

/// Least squares on the active columns (minimum norm), zero elsewhere.
inline Vector post_lasso(const Matrix& X, const Vector& y, const IndexSet& active_set) {
  Vector out = Vector::Zero(X.cols());
  if (active_set.empty()) return out;
  const LeastSquares ls = least_squares(select_columns(X, active_set), y);
  for (std::size_t k = 0; k < active_set.size(); ++k) out(active_set[k]) = ls.coefficients(static_cast<Index>(k));
  return out;
}

/// Lasso with initial loadings, then n_loadings - 1 rounds of
/// {Post-Lasso residuals -> refined loadings -> re-solve}.
inline LassoFit iterated_lasso(const LassoDesign& design, const Vector& target, double lambda,
                               const LassoConfig& cfg = {}) {
  if (cfg.n_loadings < 1) throw DomainError("iterated_lasso: n_loadings must be at least 1");
  const Vector xty = design.X().transpose() * target;
  const double yty = target.squaredNorm();
  Vector psi = design.initial_loadings(target);
  detail::check_solve_inputs(design.cols(), lambda, psi);
  LassoFit fit = detail::coordinate_descent(design.gram(), xty, yty, lambda, psi, cfg);
  fit.loading_rounds = 1;

  const Index n = target.size();
  const double sd =
      n > 1 ? std::sqrt((target.array() - target.mean()).square().sum() / static_cast<double>(n - 1)) : 0.0;

  for (int round = 1; round < cfg.n_loadings; ++round) {
    const Vector coef = post_lasso(design.X(), target, fit.active_set);
    const Vector resid = target - design.X() * coef;
    if (resid.cwiseAbs().maxCoeff() < 1e-12 * sd) {
      fit.perfect_fit = true;
      break;
    }
    try {
      psi = design.refined_loadings(resid);
    } catch (const DegenerateInput&) {
      fit.loadings_degenerate = true;
      break;
    }
    LassoFit next = detail::coordinate_descent(design.gram(), xty, yty, lambda, psi, cfg);
    next.loading_rounds = fit.loading_rounds + 1;
    fit = std::move(next);
  }
  return fit;
}

inline LassoFit iterated_lasso(const Matrix& Q, const Vector& target, double lambda, const LassoConfig& cfg = {}) {
  return iterated_lasso(LassoDesign(Q), target, lambda, cfg);
}

}  // namespace pds
