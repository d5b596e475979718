// pds-series: post-double-selection series estimation from the command line.
//
//   pds-series fit --input data.csv --y y --x x --z 'z*' --k auto13 --out report.txt
//   pds-series simulate --design low --n 500 --reps 500 --seed 1 --out mc.csv
//
// Options may also come from an INI file (--config); command-line flags win.

#include "pds/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  pds::cli::RunConfig cfg;
  CLI::App app{"Post-double-selection series estimation and simulation"};
  app.set_config("--config", "", "INI file with default option values");
  app.require_subcommand(1);
  app.fallthrough();

  auto add_lasso = [&](CLI::App* sub) {
    sub->add_option("--c", cfg.c, "Penalty constant c")->capture_default_str();
    sub->add_option("--gamma", cfg.gamma, "Penalty significance level (0: 0.1/log(max(K L, n)))")
        ->capture_default_str();
    sub->add_option("--n-loadings", cfg.n_loadings, "Penalty-loading iterations")->capture_default_str();
    sub->add_option("--out", cfg.output_path, "Output file")->required();
  };

  CLI::App* fit = app.add_subcommand("fit", "Estimate on a CSV data set");
  std::string z_list;
  fit->add_option("--input", cfg.input_path, "CSV file with a header row")->required();
  fit->add_option("--y", cfg.y_col, "Outcome column")->capture_default_str();
  fit->add_option("--x", cfg.x_col, "Treatment column")->capture_default_str();
  fit->add_option("--z", z_list, "Control columns: comma-separated names or glob patterns")->required();
  fit->add_option("--k", cfg.k, "Series degree: auto13, auto14, bic, or an integer")->capture_default_str();
  fit->add_flag("--extended-fs", cfg.extended_fs, "Add pairwise sums and differences to the first stage");
  fit->add_option("--q-basis", cfg.q_basis, "Conditioning dictionary: raw or hermite")->capture_default_str();
  fit->add_option("--q-degree", cfg.q_degree, "Hermite tensor degree (0: same as K)")->capture_default_str();
  add_lasso(fit);

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo study");
  std::string estimator_list;
  int threads = 0;
  sim->add_option("--design", cfg.design, "low, high or unconfounded")->capture_default_str();
  sim->add_option("--n", cfg.n, "Sample size")->capture_default_str();
  sim->add_option("--sigma-v", cfg.sigma_v, "First-stage noise scale")->capture_default_str();
  sim->add_option("--sigma-eps", cfg.sigma_eps, "Outcome noise scale")->capture_default_str();
  sim->add_option("--dim-z", cfg.dim_z, "Control dimension (0: design default)")->capture_default_str();
  sim->add_option("--reps", cfg.reps, "Replications")->capture_default_str();
  sim->add_option("--seed", cfg.seed, "Base seed")->capture_default_str();
  sim->add_option("--estimators", estimator_list, "Comma-separated estimator ids (default: all)");
  sim->add_option("--dump-sample", cfg.dump_sample_path, "Write replication 0's data to this CSV");
  sim->add_option("--threads", threads, "Worker threads (default: all cores, capped by PDS_THREADS)");
  add_lasso(sim);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (fit->parsed()) {
    cfg.command = pds::cli::Command::fit;
    cfg.z_cols = pds::cli::detail::split_list(z_list);
  } else {
    cfg.command = pds::cli::Command::simulate;
    cfg.estimators = pds::cli::detail::split_list(estimator_list);
    cfg.threads = pds::cli::threads_from_env(threads);
  }
  return pds::cli::run(cfg);
}
