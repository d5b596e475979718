#pragma once

// Plug-in linear functionals of g(x) = p(x)'beta and their heteroskedasticity
// robust sandwich variance
//
//   V = A' Omega^{-1} Sigma Omega^{-1} A,
//   Omega = W'W / n,  Sigma = W' diag(e^2) W / n,
//
// where W is P residualized on [1, selected controls] and e are the
// final-regression residuals. se = sqrt(V / n).

#include "pds/core.hpp"
#include "pds/dictionary.hpp"
#include "pds/linalg.hpp"
#include "pds/normal.hpp"
#include "pds/selection.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace pds {

enum class FunctionalKind { average_derivative, quantile_contrast, point_eval };

struct FunctionalSpec {
  FunctionalKind kind = FunctionalKind::average_derivative;
  Vector A;  // gradient of a(p'b) in b; excludes the intercept
  double q_lo = 0.25;
  double q_hi = 0.75;
  double x0 = 0.0;
};

/// Order statistic x_(ceil(q n)), 1-based; q = 0 gives the minimum.
inline double empirical_quantile(const Vector& x, double q) {
  if (x.size() == 0) throw DomainError("empirical_quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("empirical_quantile: q must lie in [0, 1]");
  std::vector<double> v(x.data(), x.data() + x.size());
  const auto n = static_cast<Index>(v.size());
  Index rank = static_cast<Index>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<Index>(rank, 1, n);
  std::nth_element(v.begin(), v.begin() + (rank - 1), v.end());
  return v[static_cast<std::size_t>(rank - 1)];
}

/// A_k = mean_i p_k'(x_i).
inline FunctionalSpec average_derivative(const DictionarySpec& p, const Vector& x) {
  FunctionalSpec f;
  f.kind = FunctionalKind::average_derivative;
  f.A = evaluate_derivative(p, x).colwise().mean().transpose();
  return f;
}

/// A = p(x_(q_hi)) - p(x_(q_lo)).
inline FunctionalSpec quantile_contrast(const DictionarySpec& p, const Vector& x, double q_lo = 0.25,
                                        double q_hi = 0.75) {
  FunctionalSpec f;
  f.kind = FunctionalKind::quantile_contrast;
  f.q_lo = q_lo;
  f.q_hi = q_hi;
  Vector ends(2);
  ends << empirical_quantile(x, q_lo), empirical_quantile(x, q_hi);
  const Matrix Pe = evaluate(p, ends);
  f.A = (Pe.row(1) - Pe.row(0)).transpose();
  return f;
}

/// A = p(x0); reports g(x0) without the intercept.
inline FunctionalSpec point_eval(const DictionarySpec& p, double x0) {
  FunctionalSpec f;
  f.kind = FunctionalKind::point_eval;
  f.x0 = x0;
  Vector at(1);
  at << x0;
  f.A = evaluate(p, at).row(0).transpose();
  return f;
}

/// P minus its projection on span(1, Q_sel).
inline Matrix residualize_p(const Matrix& P, const Matrix& Q_sel) {
  const Index n = P.rows();
  if (Q_sel.cols() > 0 && Q_sel.rows() != n) throw DomainError("residualize_p: row mismatch");
  Matrix X = Q_sel.cols() > 0 ? with_intercept({&Q_sel}, n) : Matrix::Ones(n, 1);
  return project_out(P, X);
}

struct Sandwich {
  double V_hat = 0.0;
  Matrix Omega_hat;
  Matrix Sigma_hat;
};

inline Sandwich sandwich_variance(const Matrix& P_resid, const Vector& residuals, const Vector& A) {
  const Index n = P_resid.rows();
  const Index K = P_resid.cols();
  if (residuals.size() != n || A.size() != K) throw DomainError("sandwich_variance: dimension mismatch");
  const double dn = static_cast<double>(n);

  Sandwich out;
  out.Omega_hat = P_resid.transpose() * P_resid / dn;
  out.Omega_hat = 0.5 * (out.Omega_hat + out.Omega_hat.transpose()).eval();
  const Matrix weighted = P_resid.array().colwise() * residuals.array();
  out.Sigma_hat = weighted.transpose() * weighted / dn;
  out.Sigma_hat = 0.5 * (out.Sigma_hat + out.Sigma_hat.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(out.Omega_hat);
  const Vector& ev = eig.eigenvalues();
  const double largest = ev.size() ? ev(ev.size() - 1) : 0.0;
  const double smallest = ev.size() ? ev(0) : 0.0;
  if (K > 0 && !(smallest > 1e-12 * std::max(largest, 1e-300))) {
    std::ostringstream os;
    os << "sandwich_variance: Omega_hat is singular (smallest eigenvalue " << smallest << ", largest " << largest
       << ")";
    throw DegenerateInput(os.str());
  }
  // b = Omega^{-1} A; V = mean_i ((W b)_i e_i)^2, a sum of squares.
  const Vector b = eig.eigenvectors() * (eig.eigenvectors().transpose() * A).cwiseQuotient(ev);
  const Vector score = (weighted * b);
  out.V_hat = score.squaredNorm() / dn;
  return out;
}

struct InferenceResult {
  double theta_hat = 0.0;
  double V_hat = 0.0;
  double se = 0.0;
  double t_stat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  Index n = 0;
  Matrix Omega_hat;
  Matrix Sigma_hat;
};

inline InferenceResult functional_estimate(const PdsFit& fit, const FunctionalSpec& spec) {
  if (spec.A.size() != fit.beta_hat.size()) throw DomainError("functional_estimate: A and beta sizes differ");
  const Matrix W = residualize_p(fit.P, fit.controls);
  Sandwich s = sandwich_variance(W, fit.residuals, spec.A);
  InferenceResult r;
  r.n = fit.n();
  r.theta_hat = spec.A.dot(fit.beta_hat);
  r.V_hat = s.V_hat;
  r.se = std::sqrt(s.V_hat / static_cast<double>(r.n));
  r.t_stat = r.se > 0.0 ? r.theta_hat / r.se : 0.0;
  r.ci_lo = r.theta_hat - kCritical95 * r.se;
  r.ci_hi = r.theta_hat + kCritical95 * r.se;
  r.Omega_hat = std::move(s.Omega_hat);
  r.Sigma_hat = std::move(s.Sigma_hat);
  return r;
}

/// Two-sided 5% test of theta = theta0.
inline bool rejection_test(const InferenceResult& res, double theta0) {
  if (!(res.se > 0.0)) throw DegenerateInput("rejection_test: standard error is zero");
  return std::fabs(res.theta_hat - theta0) / res.se > kCritical95;
}

}  // namespace pds
