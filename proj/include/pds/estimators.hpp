#pragma once

// The nine estimators compared in the simulation tables. Every estimator
// returns a PdsFit so the same inference code applies to all of them.

#include "pds/core.hpp"
#include "pds/dictionary.hpp"
#include "pds/selection.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pds {

enum class Estimator {
  post_double,
  post_double_set,
  post_double_ext,
  post_double_set_ext,
  post_single_1,
  post_single_2,
  series_1,
  series_2,
  oracle,
};

inline constexpr std::array<Estimator, 9> kAllEstimators = {
    Estimator::post_double,   Estimator::post_double_set, Estimator::post_double_ext,
    Estimator::post_double_set_ext, Estimator::post_single_1, Estimator::post_single_2,
    Estimator::series_1,      Estimator::series_2,        Estimator::oracle,
};

inline std::string_view estimator_id(Estimator e) {
  switch (e) {
    case Estimator::post_double: return "post_double";
    case Estimator::post_double_set: return "post_double_set";
    case Estimator::post_double_ext: return "post_double_ext";
    case Estimator::post_double_set_ext: return "post_double_set_ext";
    case Estimator::post_single_1: return "post_single_1";
    case Estimator::post_single_2: return "post_single_2";
    case Estimator::series_1: return "series_1";
    case Estimator::series_2: return "series_2";
    case Estimator::oracle: return "oracle";
  }
  return "";
}

inline std::string_view estimator_label(Estimator e) {
  switch (e) {
    case Estimator::post_double: return "Post-Double";
    case Estimator::post_double_set: return "Post-Double Set";
    case Estimator::post_double_ext: return "Post-Double Ext";
    case Estimator::post_double_set_ext: return "Post-Double Set+Ext";
    case Estimator::post_single_1: return "Post-Single I";
    case Estimator::post_single_2: return "Post-Single II";
    case Estimator::series_1: return "Series I";
    case Estimator::series_2: return "Series II";
    case Estimator::oracle: return "Oracle";
  }
  return "";
}

inline std::optional<Estimator> parse_estimator(std::string_view s) {
  for (Estimator e : kAllEstimators)
    if (s == estimator_id(e)) return e;
  return std::nullopt;
}

/// Everything the estimators need for one sample.
struct EstimationProblem {
  Vector y;
  Vector x;
  Matrix Q;                 // conditioning dictionary q(z)
  int K = 1;                // treatment dictionary degree
  std::vector<int> k_grid;  // Set variants; empty means k_grid(n)
  std::optional<Matrix> series_1_controls;
  std::optional<Matrix> series_2_controls;
  std::optional<Vector> h_true;  // only the infeasible Oracle uses this
};

struct EstimatorResult {
  PdsFit fit;
  std::optional<SelectionResult> selection;
  std::optional<KChoice> k_choice;
};

/// Lasso of y on [P, Q] jointly, then least squares on the full P block plus
/// the selected Q columns.
inline EstimatorResult post_single_2(const EstimationProblem& pr, const Matrix& P, const DictionarySpec& spec,
                                     const LassoConfig& cfg) {
  const Index K = P.cols();
  const Index L = pr.Q.cols();
  Matrix joint(P.rows(), K + L);
  joint << P, pr.Q;
  const ConditioningDesign cond(joint);
  const double gamma = resolve_gamma(cfg, K, L, pr.y.size());
  const ReducedForm rf = reduced_form_select(cond, pr.y, cfg, gamma);
  SelectionResult sel;
  sel.lambda_rf = rf.lambda;
  sel.rf_coefficients = rf.coefficients.tail(L);
  for (Index j : rf.set)
    if (j >= K) sel.union_set.push_back(j - K);
  sel.rf_set = sel.union_set;
  EstimatorResult out;
  out.fit = pds_fit(P, pr.Q, pr.y, sel, spec);
  out.selection = std::move(sel);
  return out;
}

class EstimatorRunner {
 public:
  EstimatorRunner(const EstimationProblem& problem, LassoConfig cfg)
      : pr_(problem), cfg_(cfg), spec_(DictionarySpec::hermite(problem.K)) {
    P_ = evaluate(spec_, pr_.x);
    for (Index j = 0; j < P_.cols(); ++j)
      if (!(column_sd(P_.col(j))(0) > 0.0))
        throw DegenerateInput("treatment dictionary column " + std::to_string(j) + " has zero variance");
  }

  const Matrix& P() const { return P_; }

  EstimatorResult run(Estimator e) {
    switch (e) {
      case Estimator::post_double:
        return post_double(false);
      case Estimator::post_double_ext:
        return post_double(true);
      case Estimator::post_double_set:
        return post_double_set(false);
      case Estimator::post_double_set_ext:
        return post_double_set(true);
      case Estimator::post_single_1: {
        const ReducedForm rf = reduced_form_select(cond(), pr_.y, cfg_, gamma());
        SelectionResult sel;
        sel.rf_set = rf.set;
        sel.rf_coefficients = rf.coefficients;
        sel.union_set = rf.set;
        sel.lambda_rf = rf.lambda;
        EstimatorResult out;
        out.fit = pds_fit(P_, pr_.Q, pr_.y, sel, spec_);
        out.selection = std::move(sel);
        return out;
      }
      case Estimator::post_single_2:
        return post_single_2(pr_, P_, spec_, cfg_);
      case Estimator::series_1:
        if (!pr_.series_1_controls) throw DomainError("Series I: no control block supplied");
        return {ols_fit(P_, *pr_.series_1_controls, pr_.y, spec_), std::nullopt, std::nullopt};
      case Estimator::series_2:
        if (!pr_.series_2_controls) throw DomainError("Series II: no control block supplied");
        return {ols_fit(P_, *pr_.series_2_controls, pr_.y, spec_), std::nullopt, std::nullopt};
      case Estimator::oracle: {
        if (!pr_.h_true) throw DomainError("Oracle: true h(z) not supplied");
        const Vector target = pr_.y - *pr_.h_true;
        return {ols_fit(P_, Matrix(pr_.y.size(), 0), target, spec_), std::nullopt, std::nullopt};
      }
    }
    throw DomainError("unknown estimator");
  }

 private:
  const ConditioningDesign& cond() {
    if (!cond_) cond_.emplace(pr_.Q);
    return *cond_;
  }
  double gamma() const { return resolve_gamma(cfg_, pr_.K, pr_.Q.cols(), pr_.y.size()); }

  EstimatorResult post_double(bool extended) {
    const Matrix P_fs = extended ? build_extended_fs(P_) : P_;
    SelectionResult sel = double_selection(P_fs, P_.cols(), cond(), pr_.y, cfg_);
    EstimatorResult out;
    out.fit = pds_fit(P_, pr_.Q, pr_.y, sel, spec_);
    out.selection = std::move(sel);
    return out;
  }

  EstimatorResult post_double_set(bool extended) {
    const std::vector<int> grid = pr_.k_grid.empty() ? k_grid(pr_.y.size()) : pr_.k_grid;
    KChoice choice = choose_k_bic(pr_.x, cond(), pr_.Q, pr_.y, grid, cfg_, extended);
    EstimatorResult out;
    out.fit = choice.fit;
    out.selection = choice.selection;
    out.k_choice = std::move(choice);
    return out;
  }

  const EstimationProblem& pr_;
  LassoConfig cfg_;
  DictionarySpec spec_;
  Matrix P_;
  std::optional<ConditioningDesign> cond_;
};

struct EstimatorOutcome {
  std::optional<EstimatorResult> result;
  std::string error;
};

/// Runs each requested estimator; a failure is recorded, not propagated.
inline std::map<Estimator, EstimatorOutcome> comparison_estimators(const EstimationProblem& problem,
                                                                   const std::vector<Estimator>& which,
                                                                   const LassoConfig& cfg) {
  std::map<Estimator, EstimatorOutcome> out;
  EstimatorRunner runner(problem, cfg);
  for (Estimator e : which) {
    try {
      out[e].result = runner.run(e);
    } catch (const Error& err) {
      out[e].error = err.what();
    }
  }
  return out;
}

}  // namespace pds
