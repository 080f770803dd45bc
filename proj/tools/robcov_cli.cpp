#include "robcov/robcov.h"

#include "CLI11.hpp"

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace {

struct Globals {
  int dim = 128;
  double epsilon = 0.1;
  double frob_target = 0.5;
  double entry_scale = 0.0;  // 0: derived from frob_target
  double spec_cap = 0.0;
  int max_rejects = 0;
  int trials = 0;
  std::vector<std::int64_t> samples;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
  int workers = 1;
};

int exit_code(robcov_status st) { return st == ROBCOV_E_INVALID_ARGUMENT ? 2 : 1; }

int report_error(robcov_status st) {
  std::fprintf(stderr, "robcov: error (%s): %s\n", robcov_status_name(st), robcov_last_error());
  return exit_code(st);
}

// Writes or prints the report, then frees it.
int finish(robcov_report* rep, const Globals& g, bool summary_is_result) {
  int code = 0;
  if (!g.out.empty()) {
    const robcov_status st = robcov_report_write(rep, g.out.c_str(), g.format.c_str());
    if (st != ROBCOV_OK) code = report_error(st);
    else std::fputs(robcov_report_summary(rep), stdout);
  } else if (summary_is_result) {
    std::fputs(robcov_report_summary(rep), stdout);
  } else {
    const char* text = nullptr;
    const robcov_status st = robcov_report_render(rep, g.format.c_str(), &text);
    if (st != ROBCOV_OK) {
      code = report_error(st);
    } else {
      std::fputs(text, stdout);
      std::fputs(robcov_report_summary(rep), stderr);
    }
  }
  if (code == 0 && robcov_report_failures(rep) > 0) code = 1;
  robcov_report_free(rep);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for robust Gaussian covariance testing lower-bound instances", "robcov"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", robcov_version());

  Globals g;
  {
    std::uint64_t env_seed = 0;
    const robcov_status st = robcov_default_seed(0, &env_seed);
    if (st != ROBCOV_OK) return report_error(st);
    g.seed = env_seed;
  }
  app.add_option("--dim", g.dim, "Dimension d")->check(CLI::PositiveNumber);
  app.add_option("--epsilon", g.epsilon, "Contamination weight in (0, 1/2)");
  app.add_option("--frob-target", g.frob_target, "Soundness gap C; sets the entry scale 1.2C and window [C, 2C]");
  app.add_option("--entry-scale", g.entry_scale, "Per-entry standard deviation is entry_scale / d");
  app.add_option("--spec-cap", g.spec_cap, "Reject A when ||A||_2 > spec_cap / sqrt(d)");
  app.add_option("--max-rejects", g.max_rejects, "Rejection budget per accepted draw");
  app.add_option("--trials", g.trials, "Trials or Monte Carlo pairs (0: subcommand default)");
  app.add_option("--samples", g.samples, "Sample sizes N or n (comma separated)")->delimiter(',');
  app.add_option("--seed", g.seed, "Master seed (default: $ROBCOV_SEED, else 0)");
  app.add_option("--out", g.out, "Output file; a manifest is written next to it");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--workers", g.workers, "Worker threads (results do not depend on this)")->check(CLI::PositiveNumber);

  auto* chi2 = app.add_subcommand("chi2", "Chi-squared inner products for matrices read from files");
  std::string file_a, file_b, mode = "exact";
  chi2->add_option("matrix_a", file_a, "First matrix file")->required();
  chi2->add_option("matrix_b", file_b, "Second matrix file")->required();
  chi2->add_option("--mode", mode,
                   "exact: files are covariances; taylor / mixture: files are perturbations A and B")
      ->check(CLI::IsMember({"exact", "taylor", "mixture"}));

  auto* gen = app.add_subcommand("gen-ensemble", "Draw accepted perturbation matrices and report acceptance stats");
  std::string matrix_dir;
  gen->add_option("--matrix-dir", matrix_dir, "Directory for the accepted matrices");

  auto* conc = app.add_subcommand("concentration", "Tail of tr(AB)^2 + tr((AB)^2) over ensemble pairs");
  std::vector<double> thresholds_d2;
  conc->add_option("--thresholds", thresholds_d2, "Thresholds in units of 1/d^2 (default 1,2,4,8,16)")
      ->delimiter(',');

  auto* indist = app.add_subcommand("indist", "E[chi2^N] over ensemble pairs and the implied TV bound");
  bool identical = false;
  indist->add_flag("--identical-pairs", identical, "Use B = A for every pair");

  auto* power = app.add_subcommand("power", "Reject rates of the testers on null and alternative datasets");
  std::string datasets = "null,noiseless-alt,ensemble-alt", testers = "frob,kurtosis";
  double gamma = 0.5, delta = 1.0 / 3.0, threshold_scale = 0.0;
  power->add_option("--datasets", datasets, "Comma list of null, noiseless-alt, ensemble-alt");
  power->add_option("--testers", testers, "Comma list of frob, kurtosis");
  power->add_option("--gamma", gamma, "Frobenius gap of the frob tester");
  power->add_option("--delta", delta, "Per-arm error target of the frob tester");
  power->add_option("--threshold-scale", threshold_scale, "Kurtosis cutoff (default: frozen value)");

  auto* self = app.add_subcommand("selfcheck", "Run the oracle-backed invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  robcov_ensemble_params params{};
  robcov_status st = ROBCOV_OK;
  if (!chi2->parsed() && !self->parsed()) {
    st = robcov_ensemble_params_init(g.dim, g.epsilon, g.frob_target, &params);
    if (st != ROBCOV_OK) return report_error(st);
    if (g.entry_scale > 0.0) params.entry_scale = g.entry_scale;
    if (g.spec_cap > 0.0) params.spec_cap = g.spec_cap;
    if (g.max_rejects > 0) params.max_rejects = g.max_rejects;
  }

  std::vector<double> thresholds;
  for (double t : thresholds_d2) thresholds.push_back(t / (static_cast<double>(g.dim) * g.dim));

  robcov_run_options opts;
  robcov_run_options_init(&opts);
  opts.master_seed = g.seed;
  opts.trials = g.trials;
  opts.workers = g.workers;
  opts.samples = g.samples.data();
  opts.samples_count = g.samples.size();
  opts.thresholds = thresholds.data();
  opts.thresholds_count = thresholds.size();
  opts.datasets = datasets.c_str();
  opts.testers = testers.c_str();
  opts.gamma = gamma;
  opts.delta = delta;
  if (threshold_scale > 0.0) opts.threshold_scale = threshold_scale;
  opts.matrix_dir = matrix_dir.empty() ? nullptr : matrix_dir.c_str();
  opts.identical_pairs = identical ? 1 : 0;

  robcov_report* rep = nullptr;
  bool summary_is_result = false;
  if (chi2->parsed()) {
    st = robcov_run_chi2(file_a.c_str(), file_b.c_str(), mode.c_str(), g.epsilon, &rep);
    summary_is_result = true;
  } else if (gen->parsed()) {
    st = robcov_run_gen_ensemble(&params, &opts, &rep);
  } else if (conc->parsed()) {
    st = robcov_run_concentration(&params, &opts, &rep);
  } else if (indist->parsed()) {
    st = robcov_run_indist(&params, &opts, &rep);
  } else if (power->parsed()) {
    st = robcov_run_power(&params, &opts, &rep);
  } else if (self->parsed()) {
    st = robcov_run_selfcheck(&opts, &rep);
    summary_is_result = true;
  }
  if (st != ROBCOV_OK) return report_error(st);
  return finish(rep, g, summary_is_result);
}
