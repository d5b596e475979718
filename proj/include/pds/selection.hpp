#pragma once

// Post-double selection: Lasso of every treatment term on the conditioning
// dictionary (first stage), Lasso of the outcome on it (reduced form), and a
// final least-squares fit of y on [1, P, Q[union]].

#include "pds/core.hpp"
#include "pds/dictionary.hpp"
#include "pds/lasso.hpp"
#include "pds/linalg.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace pds {

/// Conditioning dictionary centred and scaled to unit standard deviation,
/// with its Gram matrix cached. Centring stands in for an unpenalized
/// intercept in every selection Lasso.
class ConditioningDesign {
 public:
  explicit ConditioningDesign(const Matrix& Q) : means_(Q.colwise().mean().transpose()), scales_(column_sd(Q)) {
    for (Index j = 0; j < scales_.size(); ++j)
      if (!(scales_(j) > 0.0))
        throw DegenerateInput("conditioning dictionary: column " + std::to_string(j) + " has zero variance");
    Matrix Z = (Q.rowwise() - means_.transpose()).array().rowwise() / scales_.transpose().array();
    design_ = LassoDesign(std::move(Z));
  }

  const LassoDesign& lasso() const { return design_; }
  const Vector& scales() const { return scales_; }
  Index n() const { return design_.rows(); }
  Index L() const { return design_.cols(); }

 private:
  Vector means_;
  Vector scales_;
  LassoDesign design_{Matrix()};
};

/// Selected set and Post-Lasso coefficients (on the unscaled columns) for one target.
struct TargetSelection {
  IndexSet set;
  Vector coefficients;
  LassoFit fit;
};

inline TargetSelection select_for_target(const ConditioningDesign& cond, const Vector& target, double lambda,
                                         const LassoConfig& cfg) {
  const Vector centred = (target.array() - target.mean()).matrix();
  TargetSelection out;
  out.fit = iterated_lasso(cond.lasso(), centred, lambda, cfg);
  out.set = out.fit.active_set;
  out.coefficients =
      (post_lasso(cond.lasso().X(), centred, out.set).array() / cond.scales().array()).matrix();
  return out;
}

struct FirstStage {
  std::vector<IndexSet> sets;
  Matrix coefficients;  // L x K'
  double lambda = 0.0;
  std::vector<LassoFit> fits;
};

struct ReducedForm {
  IndexSet set;
  Vector coefficients;  // L
  double lambda = 0.0;
  LassoFit fit;
};

struct SelectionResult {
  std::vector<IndexSet> fs_sets;
  Matrix fs_coefficients;
  IndexSet rf_set;
  Vector rf_coefficients;
  IndexSet union_set;
  double lambda_fs = 0.0;
  double lambda_rf = 0.0;
};

/// Iterated Lasso of every column of P_fs on Q with lambda^FS built from
/// K' = P_fs.cols() targets. `gamma` overrides the config (pipelines pass the
/// value resolved from the treatment dictionary size).
inline FirstStage first_stage_select(const Matrix& P_fs, const ConditioningDesign& cond, const LassoConfig& cfg,
                                     std::optional<double> gamma = std::nullopt) {
  const Index Kfs = P_fs.cols();
  if (Kfs < 1) throw DomainError("first_stage_select: no first-stage targets");
  if (P_fs.rows() != cond.n()) throw DomainError("first_stage_select: row mismatch");
  const double g = gamma ? *gamma : resolve_gamma(cfg, Kfs, cond.L(), cond.n());
  FirstStage out;
  out.lambda = penalty_level(cond.n(), Kfs, cond.L(), cfg.c, g);
  out.coefficients = Matrix::Zero(cond.L(), Kfs);
  for (Index k = 0; k < Kfs; ++k) {
    try {
      TargetSelection s = select_for_target(cond, P_fs.col(k), out.lambda, cfg);
      out.sets.push_back(std::move(s.set));
      out.coefficients.col(k) = s.coefficients;
      out.fits.push_back(std::move(s.fit));
    } catch (const Error& e) {
      throw DegenerateInput("first stage target " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

inline FirstStage first_stage_select(const Matrix& P_fs, const Matrix& Q, const LassoConfig& cfg) {
  return first_stage_select(P_fs, ConditioningDesign(Q), cfg);
}

inline ReducedForm reduced_form_select(const ConditioningDesign& cond, const Vector& y, const LassoConfig& cfg,
                                       std::optional<double> gamma = std::nullopt) {
  if (y.size() != cond.n()) throw DomainError("reduced_form_select: row mismatch");
  const double g = gamma ? *gamma : resolve_gamma(cfg, 1, cond.L(), cond.n());
  ReducedForm out;
  out.lambda = penalty_level(cond.n(), 1, cond.L(), cfg.c, g);
  TargetSelection s = select_for_target(cond, y, out.lambda, cfg);
  out.set = std::move(s.set);
  out.coefficients = std::move(s.coefficients);
  out.fit = std::move(s.fit);
  return out;
}

inline ReducedForm reduced_form_select(const Matrix& Q, const Vector& y, const LassoConfig& cfg) {
  return reduced_form_select(ConditioningDesign(Q), y, cfg);
}

inline SelectionResult combine(const FirstStage& fs, const ReducedForm& rf) {
  SelectionResult out;
  out.fs_sets = fs.sets;
  out.fs_coefficients = fs.coefficients;
  out.rf_set = rf.set;
  out.rf_coefficients = rf.coefficients;
  out.lambda_fs = fs.lambda;
  out.lambda_rf = rf.lambda;
  IndexSet u = rf.set;
  for (const auto& s : fs.sets) u = set_union(u, s);
  out.union_set = std::move(u);
  return out;
}

/// Both selection steps. gamma defaults to 0.1 / log(max(K L, n)) with K the
/// size of the treatment dictionary (not of an extended first-stage one).
inline SelectionResult double_selection(const Matrix& P_fs, Index K, const ConditioningDesign& cond, const Vector& y,
                                        const LassoConfig& cfg) {
  const double gamma = resolve_gamma(cfg, K, cond.L(), cond.n());
  const FirstStage fs = first_stage_select(P_fs, cond, cfg, gamma);
  const ReducedForm rf = reduced_form_select(cond, y, cfg, gamma);
  return combine(fs, rf);
}

/// Final least squares of y on [1, P, controls].
struct PdsFit {
  Vector beta_hat;
  double intercept = 0.0;
  Vector eta_hat;  // intercept, then one coefficient per control column
  IndexSet selected;
  Vector residuals;
  Matrix P;
  Matrix controls;
  DictionarySpec p_spec;
  bool rank_deficient = false;

  Index n() const { return residuals.size(); }
  Index n_regressors() const { return 1 + P.cols() + controls.cols(); }
  double rss() const { return residuals.squaredNorm(); }
};

inline PdsFit ols_fit(const Matrix& P, const Matrix& controls, const Vector& y, const DictionarySpec& p_spec = {}) {
  const Index n = y.size();
  if (P.rows() != n || (controls.cols() > 0 && controls.rows() != n)) throw DomainError("ols_fit: row mismatch");
  const Matrix X = controls.cols() > 0 ? with_intercept({&P, &controls}, n) : with_intercept({&P}, n);
  const LeastSquares ls = least_squares(X, y);
  PdsFit fit;
  fit.intercept = ls.coefficients(0);
  fit.beta_hat = ls.coefficients.segment(1, P.cols());
  fit.eta_hat.resize(1 + controls.cols());
  fit.eta_hat(0) = fit.intercept;
  fit.eta_hat.tail(controls.cols()) = ls.coefficients.tail(controls.cols());
  fit.residuals = ls.residuals;
  fit.P = P;
  fit.controls = controls.cols() > 0 ? controls : Matrix(n, 0);
  fit.p_spec = p_spec;
  fit.rank_deficient = ls.rank_deficient;
  return fit;
}

inline PdsFit pds_fit(const Matrix& P, const Matrix& Q, const Vector& y, const SelectionResult& sel,
                      const DictionarySpec& p_spec = {}) {
  PdsFit fit = ols_fit(P, select_columns(Q, sel.union_set), y, p_spec);
  fit.selected = sel.union_set;
  return fit;
}

/// Gaussian BIC of the final regression: n log(RSS/n) + (#columns) log n.
inline double bic(const PdsFit& fit) {
  const double n = static_cast<double>(fit.n());
  return n * std::log(fit.rss() / n) + static_cast<double>(fit.n_regressors()) * std::log(n);
}

namespace detail {

/// Largest k with (k * den)^power <= num^power * n.
inline int floor_scaled_root(Index n, int num, int den, int power) {
  auto ipow = [](long double b, int e) {
    long double r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
  };
  const long double rhs = ipow(num, power) * static_cast<long double>(n);
  int k = 0;
  while (ipow(static_cast<long double>(k + 1) * den, power) <= rhs) ++k;
  return k;
}

}  // namespace detail

/// floor(n^(1/3)), exact for perfect cubes.
inline int k_cube_root(Index n) { return detail::floor_scaled_root(n, 1, 1, 3); }
/// floor(n^(1/4)).
inline int k_fourth_root(Index n) { return detail::floor_scaled_root(n, 1, 1, 4); }

/// Candidate range floor(n^(1/3) / 2) .. floor(2 n^(1/3)), lower end at least 1.
inline std::vector<int> k_grid(Index n) {
  const int lo = std::max(1, detail::floor_scaled_root(n, 1, 2, 3));
  const int hi = std::max(lo, detail::floor_scaled_root(n, 2, 1, 3));
  std::vector<int> grid;
  for (int k = lo; k <= hi; ++k) grid.push_back(k);
  return grid;
}

/// K_BIC + 1, clamped to the top of the grid.
inline int k_hat_from_bic(int k_bic, const std::vector<int>& grid) { return std::min(k_bic + 1, grid.back()); }

struct KChoice {
  std::vector<int> grid;
  std::vector<double> bic;  // NaN where the pipeline failed for that K
  int k_bic = 0;
  int k_hat = 0;
  PdsFit fit;  // fit at k_hat
  SelectionResult selection;
};

/// Runs the full pipeline for every K in the grid and keeps K_BIC + 1.
inline KChoice choose_k_bic(const Vector& x, const ConditioningDesign& cond, const Matrix& Q, const Vector& y,
                            const std::vector<int>& grid, const LassoConfig& cfg, bool extended_fs = false) {
  if (grid.empty()) throw DomainError("choose_k_bic: empty K grid");
  KChoice out;
  out.grid = grid;
  std::vector<PdsFit> fits(grid.size());
  std::vector<SelectionResult> sels(grid.size());
  std::vector<bool> ok(grid.size(), false);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const int K = grid[g];
    const DictionarySpec spec = DictionarySpec::hermite(K);
    double value = std::numeric_limits<double>::quiet_NaN();
    try {
      const Matrix P = evaluate(spec, x);
      const Matrix P_fs = extended_fs ? build_extended_fs(P) : P;
      sels[g] = double_selection(P_fs, K, cond, y, cfg);
      fits[g] = pds_fit(P, Q, y, sels[g], spec);
      value = bic(fits[g]);
      ok[g] = std::isfinite(value);
    } catch (const Error&) {
      ok[g] = false;
    }
    out.bic.push_back(value);
    if (ok[g] && value < best) {
      best = value;
      out.k_bic = K;
    }
  }
  if (!std::isfinite(best)) throw DegenerateInput("choose_k_bic: every K in the grid failed");
  out.k_hat = k_hat_from_bic(out.k_bic, grid);
  // k_hat may itself have failed; step down to the nearest usable K.
  for (std::size_t g = grid.size(); g-- > 0;) {
    if (grid[g] <= out.k_hat && ok[g]) {
      out.k_hat = grid[g];
      out.fit = fits[g];
      out.selection = sels[g];
      break;
    }
  }
  return out;
}

}  // namespace pds
