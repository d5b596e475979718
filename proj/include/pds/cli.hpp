#pragma once

// Front-end plumbing for the pds-series tool: CSV ingestion, run
// configuration, and the `fit` / `simulate` commands. Argument parsing lives
// in tools/pds_series.cpp.

#include "pds/core.hpp"
#include "pds/dictionary.hpp"
#include "pds/estimators.hpp"
#include "pds/inference.hpp"
#include "pds/montecarlo.hpp"
#include "pds/selection.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace pds::cli {

// ---------------------------------------------------------------------------
// CSV

struct ColumnSelection {
  std::string y;
  std::string x;
  std::vector<std::string> z;  // names or glob patterns, matched in header order
};

struct Dataset {
  Vector y;
  Vector x;
  Matrix Z;
  std::string y_name;
  std::string x_name;
  std::vector<std::string> z_names;
  Index dropped_rows = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
      cur += ch;
    } else if (ch == ',' && !quoted) {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "." || cell == "null";
}

inline std::optional<double> parse_number(const std::string& cell) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Reads the named columns; rows with a missing value in any of them are dropped and counted.
inline Dataset load_csv(const std::string& path, const ColumnSelection& cols, std::ostream* warn = &std::cerr) {
  std::ifstream in(path);
  if (!in) throw Error("load_csv: cannot open '" + path + "'");
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty() || line.rfind('#', 0) == 0) continue;
    header = detail::split_csv_line(line);
    break;
  }
  if (header.empty()) throw Error("load_csv: '" + path + "' is empty");

  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  };

  std::vector<std::string> problems;
  const auto y_at = find(cols.y);
  const auto x_at = find(cols.x);
  if (!y_at) problems.push_back("column '" + cols.y + "' (y) not found");
  if (!x_at) problems.push_back("column '" + cols.x + "' (x) not found");

  std::vector<std::size_t> z_at;
  for (const auto& pat : cols.z) {
    bool matched = false;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if ((y_at && j == *y_at) || (x_at && j == *x_at)) continue;
      if (fnmatch(pat.c_str(), header[j].c_str(), 0) == 0) {
        matched = true;
        if (std::find(z_at.begin(), z_at.end(), j) == z_at.end()) z_at.push_back(j);
      }
    }
    if (!matched) problems.push_back("column '" + pat + "' (z) not found");
  }
  if (cols.z.empty()) problems.push_back("no z columns requested");
  if (!problems.empty()) {
    std::string msg = "load_csv: ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw Error(msg);
  }

  Dataset ds;
  ds.y_name = cols.y;
  ds.x_name = cols.x;
  for (std::size_t j : z_at) ds.z_names.push_back(header[j]);

  std::vector<double> ys, xs, zs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty() || line.rfind('#', 0) == 0) continue;
    const auto cells = detail::split_csv_line(line);
    std::vector<std::size_t> wanted = {*y_at, *x_at};
    wanted.insert(wanted.end(), z_at.begin(), z_at.end());
    std::vector<double> vals;
    bool missing = false;
    for (std::size_t j : wanted) {
      const std::string cell = j < cells.size() ? cells[j] : std::string();
      if (detail::is_missing(cell)) {
        missing = true;
        continue;
      }
      const auto v = detail::parse_number(cell);
      if (!v)
        throw Error("load_csv: non-numeric value '" + cell + "' at line " + std::to_string(line_no) + ", column '" +
                    header[j] + "'");
      vals.push_back(*v);
    }
    if (missing) {
      ++ds.dropped_rows;
      continue;
    }
    ys.push_back(vals[0]);
    xs.push_back(vals[1]);
    zs.insert(zs.end(), vals.begin() + 2, vals.end());
  }
  const auto n = static_cast<Index>(ys.size());
  if (n == 0) throw Error("load_csv: '" + path + "' has no complete data rows");
  ds.y = Eigen::Map<Vector>(ys.data(), n);
  ds.x = Eigen::Map<Vector>(xs.data(), n);
  const auto d = static_cast<Index>(z_at.size());
  ds.Z = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(zs.data(), n, d);
  if (ds.dropped_rows > 0 && warn)
    *warn << "warning: dropped " << ds.dropped_rows << " row(s) with missing values\n";
  return ds;
}

/// y, x, z1..zd with round-trip precision.
inline void write_sample_csv(const Sample& s, std::ostream& os) {
  os << "y,x";
  for (Index j = 0; j < s.Z.cols(); ++j) os << ",z" << (j + 1);
  os << '\n';
  for (Index i = 0; i < s.y.size(); ++i) {
    os << detail::format_exact(s.y(i)) << ',' << detail::format_exact(s.x(i));
    for (Index j = 0; j < s.Z.cols(); ++j) os << ',' << detail::format_exact(s.Z(i, j));
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Configuration

enum class Command { fit, simulate };
enum class KMode { fixed, auto_n13, auto_n14, bic_set };

struct RunConfig {
  Command command = Command::fit;
  std::string output_path;

  // fit
  std::string input_path;
  std::string y_col = "y";
  std::string x_col = "x";
  std::vector<std::string> z_cols;
  std::string k = "auto13";  // auto13 | auto14 | bic | integer
  bool extended_fs = false;
  std::string q_basis = "raw";  // raw | hermite
  int q_degree = 0;             // 0: same as K

  // simulate
  std::string design = "low";
  long n = 500;
  double sigma_v = 1.0;
  double sigma_eps = 1.0;
  long dim_z = 0;
  int reps = 500;
  std::uint64_t seed = 1;
  std::vector<std::string> estimators;  // empty: all nine
  std::string dump_sample_path;

  // Lasso
  double c = 1.1;
  double gamma = 0.0;  // 0: 0.1 / log(max(K L, n))
  int n_loadings = 15;

  int threads = 1;

  KMode k_mode() const {
    if (k == "auto13") return KMode::auto_n13;
    if (k == "auto14") return KMode::auto_n14;
    if (k == "bic") return KMode::bic_set;
    return KMode::fixed;
  }

  LassoConfig lasso() const {
    LassoConfig cfg;
    cfg.c = c;
    if (gamma > 0.0) cfg.gamma = gamma;
    cfg.n_loadings = n_loadings;
    return cfg;
  }

  std::vector<Estimator> estimator_list() const {
    if (estimators.empty()) return {kAllEstimators.begin(), kAllEstimators.end()};
    std::vector<Estimator> out;
    for (const auto& s : estimators)
      if (auto e = parse_estimator(s)) out.push_back(*e);
    return out;
  }
};

/// Every problem with the configuration, not just the first.
inline std::vector<std::string> validate(const RunConfig& cfg) {
  std::vector<std::string> errs;
  if (cfg.output_path.empty()) errs.push_back("--out is required");
  if (!(cfg.c > 1.0)) errs.push_back("--c must exceed 1");
  if (cfg.gamma < 0.0 || cfg.gamma >= 1.0) errs.push_back("--gamma must lie in (0, 1) (or 0 for the default)");
  if (cfg.n_loadings < 1) errs.push_back("--n-loadings must be at least 1");
  if (cfg.threads < 1) errs.push_back("thread count must be at least 1");

  if (cfg.command == Command::fit) {
    if (cfg.input_path.empty()) errs.push_back("--input is required");
    if (cfg.y_col.empty()) errs.push_back("--y is required");
    if (cfg.x_col.empty()) errs.push_back("--x is required");
    if (cfg.z_cols.empty()) errs.push_back("--z needs at least one column");
    if (cfg.k_mode() == KMode::fixed) {
      const auto v = detail::parse_number(cfg.k);
      if (!v || *v < 1 || *v != std::floor(*v)) errs.push_back("--k must be auto13, auto14, bic or a positive integer");
    }
    if (cfg.q_basis != "raw" && cfg.q_basis != "hermite") errs.push_back("--q-basis must be raw or hermite");
    if (cfg.q_degree < 0) errs.push_back("--q-degree must be non-negative");
  } else {
    if (!parse_design(cfg.design)) errs.push_back("--design must be low, high or unconfounded");
    if (cfg.n < 2) errs.push_back("--n must be at least 2");
    if (!(cfg.sigma_v > 0.0)) errs.push_back("--sigma-v must be positive");
    if (!(cfg.sigma_eps > 0.0)) errs.push_back("--sigma-eps must be positive");
    if (cfg.reps < 1) errs.push_back("--reps must be at least 1");
    if (cfg.dim_z < 0) errs.push_back("--dim-z must be non-negative");
    for (const auto& s : cfg.estimators)
      if (!parse_estimator(s)) errs.push_back("unknown estimator '" + s + "'");
  }
  return errs;
}

inline void echo_config(const RunConfig& cfg, std::ostream& os) {
  os << "# command = " << (cfg.command == Command::fit ? "fit" : "simulate") << '\n';
  if (cfg.command == Command::fit) {
    os << "# input = " << cfg.input_path << '\n'
       << "# y = " << cfg.y_col << '\n'
       << "# x = " << cfg.x_col << '\n'
       << "# z = ";
    for (std::size_t i = 0; i < cfg.z_cols.size(); ++i) os << (i ? "," : "") << cfg.z_cols[i];
    os << '\n'
       << "# k = " << cfg.k << '\n'
       << "# extended_fs = " << (cfg.extended_fs ? "true" : "false") << '\n'
       << "# q_basis = " << cfg.q_basis << '\n'
       << "# q_degree = " << cfg.q_degree << '\n';
  } else {
    os << "# design = " << cfg.design << '\n'
       << "# n = " << cfg.n << '\n'
       << "# sigma_v = " << cfg.sigma_v << '\n'
       << "# sigma_eps = " << cfg.sigma_eps << '\n'
       << "# dim_z = " << DgpConfig{*parse_design(cfg.design), cfg.n, 1, 1, cfg.dim_z, 0.5}.resolved_dim_z() << '\n'
       << "# rho = 0.5\n"
       << "# reps = " << cfg.reps << '\n'
       << "# seed = " << cfg.seed << '\n'
       << "# estimators = ";
    const auto list = cfg.estimator_list();
    for (std::size_t i = 0; i < list.size(); ++i) os << (i ? "," : "") << estimator_id(list[i]);
    os << '\n';
  }
  os << "# c = " << cfg.c << '\n'
     << "# gamma = " << (cfg.gamma > 0.0 ? detail::format_exact(cfg.gamma) : std::string("0.1/log(max(K*L,n))"))
     << '\n'
     << "# n_loadings = " << cfg.n_loadings << '\n'
     << "# cd_tol = 1e-08\n"
     << "# cd_max_iter = 10000\n";
}

// ---------------------------------------------------------------------------
// fit

struct FunctionalRow {
  std::string name;
  InferenceResult result;
};

struct FitReport {
  Index n = 0;
  Index dropped_rows = 0;
  int K = 0;
  Index L = 0;
  std::optional<KChoice> k_choice;
  SelectionResult selection;
  std::vector<std::string> selected_names;
  std::vector<FunctionalRow> functionals;
  bool rank_deficient = false;
};

inline int resolve_k(const RunConfig& cfg, Index n) {
  switch (cfg.k_mode()) {
    case KMode::auto_n13: return std::max(1, k_cube_root(n));
    case KMode::auto_n14: return std::max(1, k_fourth_root(n));
    case KMode::bic_set: return std::max(1, k_cube_root(n));
    case KMode::fixed: return std::atoi(cfg.k.c_str());
  }
  return 1;
}

/// Post-double fit on a loaded dataset (Set variant when k = bic, Ext with extended_fs).
inline FitReport fit_dataset(const RunConfig& cfg, const Dataset& ds) {
  FitReport rep;
  rep.n = ds.y.size();
  rep.dropped_rows = ds.dropped_rows;
  rep.K = resolve_k(cfg, rep.n);

  const int d = static_cast<int>(ds.Z.cols());
  const DictionarySpec q_spec =
      cfg.q_basis == "hermite" ? DictionarySpec::tensor(d, cfg.q_degree > 0 ? cfg.q_degree : rep.K)
                               : DictionarySpec::raw(d);
  EstimationProblem pr;
  pr.y = ds.y;
  pr.x = ds.x;
  pr.K = rep.K;
  pr.Q = evaluate(q_spec, ds.Z);
  rep.L = pr.Q.cols();

  const Estimator which = cfg.k_mode() == KMode::bic_set
                              ? (cfg.extended_fs ? Estimator::post_double_set_ext : Estimator::post_double_set)
                              : (cfg.extended_fs ? Estimator::post_double_ext : Estimator::post_double);
  EstimatorRunner runner(pr, cfg.lasso());
  EstimatorResult res = runner.run(which);
  rep.k_choice = res.k_choice;
  if (rep.k_choice) rep.K = rep.k_choice->k_hat;
  rep.selection = res.selection ? *res.selection : SelectionResult{};
  rep.rank_deficient = res.fit.rank_deficient;

  const auto names = term_names(q_spec, ds.z_names);
  for (Index j : res.fit.selected) rep.selected_names.push_back(names[static_cast<std::size_t>(j)]);

  rep.functionals.push_back({"average_derivative", functional_estimate(res.fit, average_derivative(res.fit.p_spec, pr.x))});
  rep.functionals.push_back(
      {"quantile_contrast_25_75", functional_estimate(res.fit, quantile_contrast(res.fit.p_spec, pr.x, 0.25, 0.75))});
  return rep;
}

inline void write_fit_report(const RunConfig& cfg, const FitReport& rep, std::ostream& os) {
  echo_config(cfg, os);
  os << "[fit]\n"
     << "n = " << rep.n << '\n'
     << "dropped_rows = " << rep.dropped_rows << '\n'
     << "K = " << rep.K << '\n'
     << "L = " << rep.L << '\n';
  if (rep.k_choice) {
    const auto& kc = *rep.k_choice;
    os << "k_grid = " << kc.grid.front() << ".." << kc.grid.back() << '\n' << "bic =";
    for (std::size_t g = 0; g < kc.grid.size(); ++g) os << ' ' << kc.grid[g] << ':' << detail::format_exact(kc.bic[g]);
    os << '\n' << "k_bic = " << kc.k_bic << '\n' << "k_hat = " << kc.k_hat << '\n';
  }
  os << "lambda_fs = " << detail::format_exact(rep.selection.lambda_fs) << '\n'
     << "lambda_rf = " << detail::format_exact(rep.selection.lambda_rf) << '\n'
     << "rank_deficient = " << (rep.rank_deficient ? "true" : "false") << '\n'
     << "n_selected = " << rep.selected_names.size() << '\n'
     << "[selected]\n";
  for (const auto& s : rep.selected_names) os << s << '\n';
  os << "[estimates]\n"
     << "functional,theta_hat,se,ci95_lo,ci95_hi,t_stat\n";
  for (const auto& f : rep.functionals) {
    os << f.name << ',' << detail::format_exact(f.result.theta_hat) << ',' << detail::format_exact(f.result.se) << ','
       << detail::format_exact(f.result.ci_lo) << ',' << detail::format_exact(f.result.ci_hi) << ','
       << detail::format_exact(f.result.t_stat) << '\n';
  }
}

// ---------------------------------------------------------------------------
// simulate

inline DgpConfig dgp_from(const RunConfig& cfg) {
  DgpConfig d;
  d.design = *parse_design(cfg.design);
  d.n = cfg.n;
  d.sigma_v = cfg.sigma_v;
  d.sigma_eps = cfg.sigma_eps;
  d.dim_z = cfg.dim_z;
  return d;
}

/// Thread count: hardware concurrency, capped by PDS_THREADS when set.
inline int threads_from_env(int fallback = 0) {
  int n = fallback > 0 ? fallback : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("PDS_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return std::max(1, n);
}

inline McReport simulate(const RunConfig& cfg, std::ostream* progress = nullptr) {
  const DgpConfig dgp = dgp_from(cfg);
  if (!cfg.dump_sample_path.empty()) {
    Rng rng(replication_seed(cfg.seed, 0));
    const Sample s = generate_sample(dgp, rng);
    std::ofstream out(cfg.dump_sample_path);
    if (!out) throw Error("cannot write '" + cfg.dump_sample_path + "'");
    write_sample_csv(s, out);
  }
  MonteCarloOptions opt;
  opt.threads = cfg.threads;
  opt.lasso = cfg.lasso();
  if (progress) {
    opt.progress = [progress](int done, int total) {
      if (done == total || done % 10 == 0) *progress << "\r" << done << "/" << total << " replications" << std::flush;
      if (done == total) *progress << '\n';
    };
  }
  return run_monte_carlo(dgp, cfg.estimator_list(), cfg.reps, cfg.seed, opt);
}

/// Runs the configured command; returns the process exit status.
inline int run(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const auto problems = validate(cfg);
  if (!problems.empty()) {
    err << "invalid configuration:\n";
    for (const auto& p : problems) err << "  - " << p << '\n';
    return 2;
  }
  try {
    if (cfg.command == Command::fit) {
      const Dataset ds = load_csv(cfg.input_path, {cfg.y_col, cfg.x_col, cfg.z_cols}, &err);
      const FitReport rep = fit_dataset(cfg, ds);
      std::ofstream os(cfg.output_path);
      if (!os) throw Error("cannot write '" + cfg.output_path + "'");
      write_fit_report(cfg, rep, os);
      write_fit_report(cfg, rep, out);
    } else {
      const McReport rep = simulate(cfg, &err);
      std::ofstream os(cfg.output_path);
      if (!os) throw Error("cannot write '" + cfg.output_path + "'");
      echo_config(cfg, os);
      write_mc_csv(rep, os);
      write_mc_table(rep, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace pds::cli
