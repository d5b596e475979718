#pragma once

// Simulation designs and the replication harness.
//
//   g(x) = logistic(x) - 1/2
//   low_dim:       h(z) = logistic(sum_j z_j) - 1/2,  dim z = 4, q(z) = Hermite tensor of degree K
//   high_dim:      h(z) = sum_j (1/2)^(j-1) z_j,      dim z = 2n, q(z) = z
//   unconfounded:  h = 0 and x independent of z (low_dim dictionaries)
//
// z ~ N(0, T) with T_jk = rho^|j-k|, x = h(z) + sigma_v v, y = g(x) + h(z) + sigma_eps e.

#include "pds/core.hpp"
#include "pds/dictionary.hpp"
#include "pds/estimators.hpp"
#include "pds/inference.hpp"
#include "pds/selection.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace pds {

enum class Design { low_dim, high_dim, unconfounded };

inline std::string_view design_id(Design d) {
  switch (d) {
    case Design::low_dim: return "low";
    case Design::high_dim: return "high";
    case Design::unconfounded: return "unconfounded";
  }
  return "";
}

inline std::optional<Design> parse_design(std::string_view s) {
  if (s == "low" || s == "low_dim") return Design::low_dim;
  if (s == "high" || s == "high_dim") return Design::high_dim;
  if (s == "unconfounded") return Design::unconfounded;
  return std::nullopt;
}

enum class Target { theta1, theta2 };

inline std::string_view target_id(Target t) { return t == Target::theta1 ? "theta1" : "theta2"; }

struct DgpConfig {
  Design design = Design::low_dim;
  Index n = 500;
  double sigma_v = 1.0;
  double sigma_eps = 1.0;
  Index dim_z = 0;  // 0: 4 for low_dim/unconfounded, floor(2n) for high_dim
  double rho = 0.5;

  Index resolved_dim_z() const {
    if (dim_z > 0) return dim_z;
    return design == Design::high_dim ? 2 * n : 4;
  }
};

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double g_true(double x) { return logistic(x) - 0.5; }
inline double g_true_deriv(double x) {
  const double l = logistic(x);
  return l * (1.0 - l);
}

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of replication r, independent of execution order.
inline std::uint64_t replication_seed(std::uint64_t base_seed, std::uint64_t r) {
  return mix64(mix64(base_seed) ^ mix64(r + 0x632BE59BD9B4E019ULL));
}

using Rng = std::mt19937_64;

/// Rows i.i.d. N(0, T), T_jk = rho^|j-k|, via the stationary AR(1) recursion.
inline Matrix draw_toeplitz_gaussian(Index n, Index d, double rho, Rng& rng) {
  if (!(std::fabs(rho) < 1.0)) throw DomainError("draw_toeplitz_gaussian: |rho| must be < 1");
  std::normal_distribution<double> normal;
  const double innov = std::sqrt(1.0 - rho * rho);
  Matrix Z(n, d);
  for (Index i = 0; i < n; ++i) {
    double prev = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double e = normal(rng);
      prev = j == 0 ? e : rho * prev + innov * e;
      Z(i, j) = prev;
    }
  }
  return Z;
}

struct Sample {
  Vector y;
  Vector x;
  Matrix Z;
  Vector h_true;
};

inline double h_of_row(Design design, const Matrix& Z, Index i) {
  switch (design) {
    case Design::low_dim:
      return logistic(Z.row(i).sum()) - 0.5;
    case Design::high_dim: {
      double h = 0.0;
      double w = 1.0;
      for (Index j = 0; j < Z.cols(); ++j, w *= 0.5) h += w * Z(i, j);
      return h;
    }
    case Design::unconfounded:
      return 0.0;
  }
  return 0.0;
}

inline Sample generate_sample(const DgpConfig& cfg, Rng& rng) {
  if (cfg.n < 2) throw DomainError("generate_sample: n must be at least 2");
  Sample s;
  s.Z = draw_toeplitz_gaussian(cfg.n, cfg.resolved_dim_z(), cfg.rho, rng);
  s.h_true.resize(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) s.h_true(i) = h_of_row(cfg.design, s.Z, i);
  std::normal_distribution<double> normal;
  s.x.resize(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) s.x(i) = s.h_true(i) + cfg.sigma_v * normal(rng);
  s.y.resize(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) s.y(i) = g_true(s.x(i)) + s.h_true(i) + cfg.sigma_eps * normal(rng);
  return s;
}

/// Variance of the linear index that h depends on: 1'T1 (low_dim) or w'Tw with w_j = 2^-(j-1) (high_dim).
inline double index_variance(const DgpConfig& cfg) {
  const Index d = cfg.resolved_dim_z();
  if (cfg.design == Design::unconfounded) return 0.0;
  Vector w(d);
  for (Index j = 0; j < d; ++j) w(j) = cfg.design == Design::low_dim ? 1.0 : std::pow(0.5, static_cast<double>(j));
  double v = 0.0;
  for (Index j = 0; j < d; ++j)
    for (Index k = 0; k < d; ++k) {
      const double wjk = w(j) * w(k);
      if (wjk == 0.0) continue;
      v += wjk * std::pow(cfg.rho, static_cast<double>(std::abs(j - k)));
    }
  return v;
}

/// Population theta from 10^7 draws of x. h(z) depends on z only through a
/// Gaussian linear index s ~ N(0, index_variance), so x is drawn from s directly.
inline double true_theta(const DgpConfig& cfg, Target target, std::size_t draws = 10'000'000) {
  using Key = std::tuple<int, double, Index, double, int, std::size_t>;
  static std::mutex mu;
  static std::map<Key, double> cache;
  const Key key{static_cast<int>(cfg.design), cfg.sigma_v, cfg.resolved_dim_z(), cfg.rho, static_cast<int>(target),
                draws};
  {
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }

  Rng rng(0x7E57AB1EULL);
  std::normal_distribution<double> normal;
  const double s_sd = std::sqrt(index_variance(cfg));
  std::vector<double> xs(draws);
  for (auto& x : xs) {
    const double s = s_sd * normal(rng);
    double h = 0.0;
    if (cfg.design == Design::low_dim) h = logistic(s) - 0.5;
    if (cfg.design == Design::high_dim) h = s;
    x = h + cfg.sigma_v * normal(rng);
  }

  double value;
  if (target == Target::theta1) {
    double acc = 0.0;
    for (double x : xs) acc += g_true_deriv(x);
    value = acc / static_cast<double>(draws);
  } else {
    auto order_stat = [&](double q) {
      const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(draws)));
      auto it = xs.begin() + static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(rank, 1, draws) - 1);
      std::nth_element(xs.begin(), it, xs.end());
      return *it;
    };
    const double hi = order_stat(0.75);
    const double lo = order_stat(0.25);
    value = g_true(hi) - g_true(lo);
  }

  std::lock_guard<std::mutex> lock(mu);
  cache[key] = value;
  return value;
}

/// Dictionaries and comparison control blocks for one simulated sample.
/// K = floor(n^(1/3)).
inline EstimationProblem build_problem(const DgpConfig& cfg, const Sample& s, Rng& rng,
                                       const std::vector<Estimator>& estimators) {
  auto wants = [&](Estimator e) { return std::find(estimators.begin(), estimators.end(), e) != estimators.end(); };
  EstimationProblem pr;
  pr.y = s.y;
  pr.x = s.x;
  pr.K = k_cube_root(cfg.n);
  pr.h_true = s.h_true;
  const Index d = s.Z.cols();
  if (cfg.design == Design::high_dim) {
    pr.Q = s.Z;
    const Index keep = std::min<Index>(d, (4 * cfg.n) / 5);
    if (wants(Estimator::series_1)) pr.series_1_controls = s.Z.leftCols(keep);
    if (wants(Estimator::series_2)) {
      std::vector<Index> idx(static_cast<std::size_t>(d));
      for (Index j = 0; j < d; ++j) idx[static_cast<std::size_t>(j)] = j;
      for (Index j = 0; j < keep; ++j) {
        std::uniform_int_distribution<Index> pick(j, d - 1);
        std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick(rng))]);
      }
      IndexSet chosen(idx.begin(), idx.begin() + keep);
      std::sort(chosen.begin(), chosen.end());
      pr.series_2_controls = select_columns(s.Z, chosen);
    }
  } else {
    pr.Q = evaluate(DictionarySpec::tensor(static_cast<int>(d), pr.K), s.Z);
    if (wants(Estimator::series_1)) {
      Matrix additive(cfg.n, d * pr.K);
      for (Index j = 0; j < d; ++j)
        additive.middleCols(j * pr.K, pr.K) = evaluate(DictionarySpec::hermite(pr.K), Vector(s.Z.col(j)));
      pr.series_1_controls = std::move(additive);
    }
    if (wants(Estimator::series_2)) pr.series_2_controls = pr.Q;
  }
  return pr;
}

struct Metrics {
  double median_bias = 0.0;
  double mad = 0.0;
  double rp5 = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median: empty input");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double upper = v[m];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lower + upper);
}

inline Metrics aggregate_metrics(const std::vector<double>& theta_hats, const std::vector<bool>& rejections,
                                 double theta_true) {
  if (theta_hats.empty()) throw DomainError("aggregate_metrics: no replications");
  Metrics m;
  m.median_bias = median(theta_hats) - theta_true;
  std::vector<double> dev(theta_hats.size());
  for (std::size_t r = 0; r < theta_hats.size(); ++r) dev[r] = std::fabs(theta_hats[r] - theta_true);
  m.mad = median(dev);
  std::size_t hits = 0;
  for (bool b : rejections) hits += b ? 1 : 0;
  m.rp5 = rejections.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(rejections.size());
  return m;
}

struct McRow {
  Target target = Target::theta1;
  Estimator estimator = Estimator::post_double;
  Metrics metrics;
  int n_reps = 0;
  int failures = 0;
  double theta_true = 0.0;
  std::vector<double> theta_hats;  // successful replications, in replication order
  std::vector<bool> covered;
};

struct McReport {
  DgpConfig dgp;
  std::uint64_t base_seed = 0;
  int n_reps = 0;
  std::vector<McRow> rows;  // functional-major, estimators in request order

  const McRow& row(Target t, Estimator e) const {
    for (const auto& r : rows)
      if (r.target == t && r.estimator == e) return r;
    throw DomainError("McReport: no such row");
  }
};

struct ReplicationOutcome {
  // [target][estimator] -> (theta_hat, rejected, covered) when the fit succeeded
  std::vector<std::vector<std::optional<std::tuple<double, bool, bool>>>> cells;
};

inline ReplicationOutcome run_replication(const DgpConfig& cfg, const std::vector<Estimator>& estimators,
                                          const std::vector<Target>& targets, const std::vector<double>& truths,
                                          std::uint64_t seed, const LassoConfig& lasso) {
  ReplicationOutcome out;
  out.cells.assign(targets.size(), std::vector<std::optional<std::tuple<double, bool, bool>>>(estimators.size()));
  Rng rng(seed);
  const Sample s = generate_sample(cfg, rng);
  EstimationProblem pr;
  try {
    pr = build_problem(cfg, s, rng, estimators);
  } catch (const Error&) {
    return out;
  }
  std::optional<EstimatorRunner> runner;
  try {
    runner.emplace(pr, lasso);
  } catch (const Error&) {
    return out;
  }
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    std::optional<EstimatorResult> res;
    try {
      res = runner->run(estimators[e]);
    } catch (const Error&) {
      continue;
    }
    for (std::size_t t = 0; t < targets.size(); ++t) {
      try {
        const FunctionalSpec f = targets[t] == Target::theta1 ? average_derivative(res->fit.p_spec, pr.x)
                                                              : quantile_contrast(res->fit.p_spec, pr.x);
        const InferenceResult inf = functional_estimate(res->fit, f);
        const bool reject = rejection_test(inf, truths[t]);
        const bool covered = inf.ci_lo <= truths[t] && truths[t] <= inf.ci_hi;
        out.cells[t][e] = std::make_tuple(inf.theta_hat, reject, covered);
      } catch (const Error&) {
      }
    }
  }
  return out;
}

struct MonteCarloOptions {
  int threads = 1;
  LassoConfig lasso;
  std::vector<Target> targets = {Target::theta1, Target::theta2};
  std::function<void(int done, int total)> progress;
};

inline McReport run_monte_carlo(const DgpConfig& cfg, const std::vector<Estimator>& estimators, int n_reps,
                                std::uint64_t base_seed, const MonteCarloOptions& opt = {}) {
  if (n_reps < 1) throw DomainError("run_monte_carlo: n_reps must be at least 1");
  if (estimators.empty()) throw DomainError("run_monte_carlo: no estimators requested");
  std::vector<double> truths;
  for (Target t : opt.targets) truths.push_back(true_theta(cfg, t));

  std::vector<ReplicationOutcome> outcomes(static_cast<std::size_t>(n_reps));
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mu;
  auto worker = [&] {
    for (int r = next++; r < n_reps; r = next++) {
      outcomes[static_cast<std::size_t>(r)] = run_replication(
          cfg, estimators, opt.targets, truths, replication_seed(base_seed, static_cast<std::uint64_t>(r)), opt.lasso);
      const int d = ++done;
      if (opt.progress) {
        std::lock_guard<std::mutex> lock(progress_mu);
        opt.progress(d, n_reps);
      }
    }
  };
  const int threads = std::max(1, std::min(opt.threads, n_reps));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  McReport report;
  report.dgp = cfg;
  report.base_seed = base_seed;
  report.n_reps = n_reps;
  for (std::size_t t = 0; t < opt.targets.size(); ++t) {
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      McRow row;
      row.target = opt.targets[t];
      row.estimator = estimators[e];
      row.n_reps = n_reps;
      row.theta_true = truths[t];
      std::vector<bool> rejections;
      for (const auto& o : outcomes) {
        const auto& cell = o.cells[t][e];
        if (!cell) {
          ++row.failures;
          continue;
        }
        row.theta_hats.push_back(std::get<0>(*cell));
        rejections.push_back(std::get<1>(*cell));
        row.covered.push_back(std::get<2>(*cell));
      }
      if (!row.theta_hats.empty()) row.metrics = aggregate_metrics(row.theta_hats, rejections, truths[t]);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

namespace detail {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string compact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

inline void write_mc_csv(const McReport& rep, std::ostream& os) {
  os << "design,n,sigma_v,sigma_eps,functional,estimator,med_bias,mad,rp5,n_reps,failures\n";
  for (const auto& r : rep.rows) {
    os << design_id(rep.dgp.design) << ',' << rep.dgp.n << ',' << detail::compact(rep.dgp.sigma_v) << ','
       << detail::compact(rep.dgp.sigma_eps) << ',' << target_id(r.target) << ',' << estimator_id(r.estimator) << ','
       << detail::fixed6(r.metrics.median_bias) << ',' << detail::fixed6(r.metrics.mad) << ','
       << detail::fixed6(r.metrics.rp5) << ',' << r.n_reps << ',' << r.failures << '\n';
  }
}

/// Aligned text table, one panel per functional.
inline void write_mc_table(const McReport& rep, std::ostream& os) {
  std::vector<Target> seen;
  for (const auto& r : rep.rows)
    if (std::find(seen.begin(), seen.end(), r.target) == seen.end()) seen.push_back(r.target);
  for (Target t : seen) {
    char head[256];
    std::snprintf(head, sizeof head, "%s design, %s, n=%ld, sigma_v=%g, sigma_eps=%g, %d replications\n",
                  std::string(design_id(rep.dgp.design)).c_str(),
                  t == Target::theta1 ? "average derivative" : "quantile contrast g(q75)-g(q25)",
                  static_cast<long>(rep.dgp.n), rep.dgp.sigma_v, rep.dgp.sigma_eps, rep.n_reps);
    os << head;
    char line[256];
    std::snprintf(line, sizeof line, "%-22s %10s %10s %10s %9s\n", "", "Med. Bias", "MAD", "RP 5%", "Failures");
    os << line;
    for (const auto& r : rep.rows) {
      if (r.target != t) continue;
      std::snprintf(line, sizeof line, "%-22s %10.3f %10.3f %10.3f %9d\n",
                    std::string(estimator_label(r.estimator)).c_str(), r.metrics.median_bias, r.metrics.mad,
                    r.metrics.rp5, r.failures);
      os << line;
    }
    std::snprintf(line, sizeof line, "true value: %.6f\n\n", rep.rows.empty() ? 0.0 : [&] {
      for (const auto& r : rep.rows)
        if (r.target == t) return r.theta_true;
      return 0.0;
    }());
    os << line;
  }
}

}  // namespace pds
