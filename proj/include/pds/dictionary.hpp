#pragma once

// Approximating dictionaries: probabilists' Hermite polynomials in one
// variable, total-degree tensor products of them, raw coordinates, and the
// pairwise sums/differences extension used for first-stage selection.
// No dictionary contains the constant term; the final regressions add a
// single explicit intercept instead.

#include "pds/core.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace pds {

enum class DictionaryKind { hermite_univariate, hermite_tensor, raw_coordinates, extended_sums_diffs };

struct DictionarySpec {
  DictionaryKind kind = DictionaryKind::hermite_univariate;
  int degree = 1;     // K: polynomial degree (total-degree cap for tensors)
  int input_dim = 1;  // d

  static DictionarySpec hermite(int degree) { return {DictionaryKind::hermite_univariate, degree, 1}; }
  static DictionarySpec tensor(int input_dim, int degree) {
    return {DictionaryKind::hermite_tensor, degree, input_dim};
  }
  static DictionarySpec raw(int input_dim) { return {DictionaryKind::raw_coordinates, 1, input_dim}; }
  static DictionarySpec extended(int degree) { return {DictionaryKind::extended_sums_diffs, degree, 1}; }
};

using MultiIndex = std::vector<int>;

/// He_k(x) by the recurrence He_{k+1} = x He_k - k He_{k-1}.
inline double hermite_eval(double x, int k) {
  if (k <= 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int j = 1; j < k; ++j) {
    const double next = x * cur - j * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// He_k'(x) = k He_{k-1}(x).
inline double hermite_deriv(double x, int k) {
  if (k <= 0) return 0.0;
  return k * hermite_eval(x, k - 1);
}

/// Fills out[0..k] with He_0(x)..He_k(x).
inline void hermite_table(double x, int k, double* out) {
  out[0] = 1.0;
  if (k >= 1) out[1] = x;
  for (int j = 1; j < k; ++j) out[j + 1] = x * out[j] - j * out[j - 1];
}

namespace detail {

inline void compositions(int remaining, int pos, MultiIndex& cur, std::vector<MultiIndex>& out) {
  const int d = static_cast<int>(cur.size());
  if (pos == d - 1) {
    cur[pos] = remaining;
    out.push_back(cur);
    return;
  }
  for (int m = remaining; m >= 0; --m) {
    cur[pos] = m;
    compositions(remaining - m, pos + 1, cur, out);
  }
}

}  // namespace detail

/// Multi-indices with 1 <= |m| <= K in graded lexicographic order:
/// by total degree, then descending in the leading coordinate.
inline std::vector<MultiIndex> tensor_index_set(int d, int K) {
  if (d < 1 || K < 0) throw DomainError("tensor_index_set: need d >= 1 and K >= 0");
  std::vector<MultiIndex> out;
  MultiIndex cur(static_cast<std::size_t>(d), 0);
  for (int deg = 1; deg <= K; ++deg) detail::compositions(deg, 0, cur, out);
  return out;
}

inline Index binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0;
  Index r = 1;
  for (Index i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline Index dictionary_size(const DictionarySpec& spec) {
  switch (spec.kind) {
    case DictionaryKind::hermite_univariate:
      return spec.degree;
    case DictionaryKind::hermite_tensor:
      return binomial(spec.degree + spec.input_dim, spec.input_dim) - 1;
    case DictionaryKind::raw_coordinates:
      return spec.input_dim;
    case DictionaryKind::extended_sums_diffs:
      return spec.degree + 2 * binomial(spec.degree, 2);
  }
  return 0;
}

/// [p1..pK, (pj + pj') for j<j', (pj - pj') for j<j'].
inline Matrix build_extended_fs(const Matrix& P) {
  const Index K = P.cols();
  if (K < 1) throw DomainError("build_extended_fs: need at least one column");
  const Index pairs = binomial(K, 2);
  Matrix out(P.rows(), K + 2 * pairs);
  out.leftCols(K) = P;
  Index at = K;
  for (Index j = 0; j < K; ++j)
    for (Index jj = j + 1; jj < K; ++jj) out.col(at++) = P.col(j) + P.col(jj);
  for (Index j = 0; j < K; ++j)
    for (Index jj = j + 1; jj < K; ++jj) out.col(at++) = P.col(j) - P.col(jj);
  return out;
}

/// Evaluates the dictionary row by row; `inputs` is n x input_dim.
inline Matrix evaluate(const DictionarySpec& spec, const Matrix& inputs) {
  const Index n = inputs.rows();
  if (inputs.cols() != spec.input_dim)
    throw DomainError("evaluate: input has " + std::to_string(inputs.cols()) + " columns, dictionary expects " +
                      std::to_string(spec.input_dim));
  if (spec.degree < 0) throw DomainError("evaluate: negative degree");

  switch (spec.kind) {
    case DictionaryKind::raw_coordinates:
      return inputs;

    case DictionaryKind::hermite_univariate: {
      Matrix out(n, spec.degree);
      std::vector<double> h(static_cast<std::size_t>(spec.degree) + 1);
      for (Index i = 0; i < n; ++i) {
        hermite_table(inputs(i, 0), spec.degree, h.data());
        for (int k = 1; k <= spec.degree; ++k) out(i, k - 1) = h[static_cast<std::size_t>(k)];
      }
      return out;
    }

    case DictionaryKind::extended_sums_diffs:
      return build_extended_fs(evaluate(DictionarySpec::hermite(spec.degree), inputs));

    case DictionaryKind::hermite_tensor: {
      const auto terms = tensor_index_set(spec.input_dim, spec.degree);
      const int d = spec.input_dim;
      const int stride = spec.degree + 1;
      Matrix out(n, static_cast<Index>(terms.size()));
      std::vector<double> h(static_cast<std::size_t>(d * stride));
      for (Index i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) hermite_table(inputs(i, j), spec.degree, h.data() + j * stride);
        for (std::size_t t = 0; t < terms.size(); ++t) {
          double v = 1.0;
          for (int j = 0; j < d; ++j) {
            const int m = terms[t][static_cast<std::size_t>(j)];
            if (m != 0) v *= h[static_cast<std::size_t>(j * stride + m)];
          }
          out(i, static_cast<Index>(t)) = v;
        }
      }
      return out;
    }
  }
  return {};
}

inline Matrix evaluate(const DictionarySpec& spec, const Vector& x) {
  return evaluate(spec, Matrix(x));
}

/// Derivatives d/dx of each univariate Hermite term, n x K.
inline Matrix evaluate_derivative(const DictionarySpec& spec, const Vector& x) {
  if (spec.kind != DictionaryKind::hermite_univariate)
    throw DomainError("evaluate_derivative: only defined for univariate Hermite dictionaries");
  Matrix out(x.size(), spec.degree);
  std::vector<double> h(static_cast<std::size_t>(spec.degree) + 1);
  for (Index i = 0; i < x.size(); ++i) {
    hermite_table(x(i), spec.degree, h.data());
    for (int k = 1; k <= spec.degree; ++k) out(i, k - 1) = k * h[static_cast<std::size_t>(k - 1)];
  }
  return out;
}

/// Human-readable term names, e.g. "q[2,0,1,0]" for tensors or the raw input names.
inline std::vector<std::string> term_names(const DictionarySpec& spec, const std::vector<std::string>& input_names = {},
                                           const std::string& prefix = "q") {
  std::vector<std::string> names;
  switch (spec.kind) {
    case DictionaryKind::raw_coordinates:
      for (int j = 0; j < spec.input_dim; ++j)
        names.push_back(static_cast<std::size_t>(j) < input_names.size() ? input_names[static_cast<std::size_t>(j)]
                                                                          : prefix + std::to_string(j + 1));
      break;
    case DictionaryKind::hermite_univariate:
      for (int k = 1; k <= spec.degree; ++k) names.push_back("He" + std::to_string(k));
      break;
    case DictionaryKind::extended_sums_diffs: {
      for (int k = 1; k <= spec.degree; ++k) names.push_back("He" + std::to_string(k));
      for (int j = 1; j <= spec.degree; ++j)
        for (int jj = j + 1; jj <= spec.degree; ++jj)
          names.push_back("He" + std::to_string(j) + "+He" + std::to_string(jj));
      for (int j = 1; j <= spec.degree; ++j)
        for (int jj = j + 1; jj <= spec.degree; ++jj)
          names.push_back("He" + std::to_string(j) + "-He" + std::to_string(jj));
      break;
    }
    case DictionaryKind::hermite_tensor:
      for (const auto& m : tensor_index_set(spec.input_dim, spec.degree)) {
        std::ostringstream os;
        os << prefix << '[';
        for (std::size_t j = 0; j < m.size(); ++j) os << (j ? "," : "") << m[j];
        os << ']';
        names.push_back(os.str());
      }
      break;
  }
  return names;
}

/// Sample standard deviation (n - 1 denominator) of every column.
inline Vector column_sd(const Matrix& X) {
  const Index n = X.rows();
  Vector sd(X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    if (n < 2) {
      sd(j) = 0.0;
      continue;
    }
    const double mean = X.col(j).mean();
    sd(j) = std::sqrt((X.col(j).array() - mean).square().sum() / static_cast<double>(n - 1));
  }
  return sd;
}

/// Treatment dictionary P = p(x) and conditioning dictionary Q = q(z), unscaled.
/// column_scales holds the standard deviations of [P Q]; Lasso stages divide by them.
struct DesignMatrices {
  Matrix P;
  Matrix Q;
  Vector column_scales;

  Vector p_scales() const { return column_scales.head(P.cols()); }
  Vector q_scales() const { return column_scales.tail(Q.cols()); }
};

namespace detail {

inline void require_nondegenerate(const Vector& sd, const char* which) {
  for (Index j = 0; j < sd.size(); ++j) {
    if (!(sd(j) > 0.0) || !std::isfinite(sd(j)))
      throw DegenerateInput(std::string("build_design: column ") + std::to_string(j) + " of " + which +
                            " has zero variance");
  }
}

}  // namespace detail

inline DesignMatrices build_design(const DictionarySpec& spec_p, const DictionarySpec& spec_q, const Vector& x,
                                   const Matrix& Z) {
  if (x.size() < 1) throw DomainError("build_design: empty sample");
  if (Z.rows() != x.size()) throw DomainError("build_design: x and Z row counts differ");
  DesignMatrices out;
  out.P = evaluate(spec_p, x);
  out.Q = evaluate(spec_q, Z);
  const Vector sp = column_sd(out.P);
  const Vector sq = column_sd(out.Q);
  detail::require_nondegenerate(sp, "P");
  detail::require_nondegenerate(sq, "Q");
  out.column_scales.resize(sp.size() + sq.size());
  out.column_scales << sp, sq;
  return out;
}

}  // namespace pds
