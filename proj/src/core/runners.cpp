#include "robcov/harness.hpp"

#include "robcov/error.hpp"
#include "robcov/experiments.hpp"
#include "robcov/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

namespace robcov {

namespace {

constexpr int kDefaultGenTrials = 100;
constexpr int kDefaultPairs = 2000;
constexpr int kDefaultPowerTrials = 400;

std::string real17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ' ';
    if constexpr (std::is_floating_point_v<T>) s += real17(xs[i]);
    else s += std::to_string(xs[i]);
  }
  return s;
}

RunManifest base_manifest(const std::string& sub, const RunSettings& s, const std::optional<EnsembleConfig>& cfg) {
  RunManifest m;
  m.subcommand = sub;
  m.master_seed = s.master_seed;
  m.config = cfg;
  return m;
}

int trials_or(const RunSettings& s, int fallback) {
  require(s.trials >= 0, "trials must be >= 0 (0 picks the default)");
  return s.trials == 0 ? fallback : s.trials;
}

TrialRecord record(const std::string& experiment, const EnsembleConfig& cfg, std::int64_t n, std::int64_t index,
                   std::uint64_t seed) {
  TrialRecord r;
  r.experiment = experiment;
  r.dim = cfg.dim;
  r.epsilon = cfg.epsilon;
  r.n_samples = n;
  r.trial_index = index;
  r.seed = seed;
  return r;
}

std::string line(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

}  // namespace

Chi2Mode parse_chi2_mode(const std::string& tag) {
  if (tag == "exact") return Chi2Mode::Exact;
  if (tag == "taylor") return Chi2Mode::Taylor;
  if (tag == "mixture") return Chi2Mode::Mixture;
  fail(ErrorCode::InvalidArgument, "unknown chi2 mode '" + tag + "' (exact | taylor | mixture)");
}

RunResult run_chi2(const std::string& path_a, const std::string& path_b, Chi2Mode mode, double epsilon) {
  const SymmetricMatrix a = load_matrix(path_a);
  const SymmetricMatrix b = load_matrix(path_b);
  if (a.dim() != b.dim()) fail(ErrorCode::DimensionMismatch, "chi2: the two matrices have different dimensions");

  RunResult run;
  run.manifest.subcommand = "chi2";
  run.manifest.parameters = {{"matrix_a", path_a}, {"matrix_b", path_b}};
  TrialRecord r;
  r.dim = a.dim();
  switch (mode) {
    case Chi2Mode::Exact: {
      const Chi2Value v = chi2_inner_exact(a, b);
      r.experiment = "chi2_exact";
      r.metrics = {{"value", v.value}, {"log_value", v.log_value}};
      run.summary.push_back(format_value(v.value));
      run.manifest.parameters["mode"] = "exact";
      break;
    }
    case Chi2Mode::Taylor: {
      const TaylorChi2 t = chi2_inner_taylor(a, b);
      const Chi2Value exact = chi2_inner_exact(a.shifted(1.0, 1.0), b.shifted(1.0, 1.0));
      r.experiment = "chi2_taylor";
      r.metrics = {{"first_order", t.first_order}, {"correction_bound", t.correction_bound}, {"exact", exact.value}};
      run.summary.push_back(format_value(t.first_order));
      run.summary.push_back("correction_bound " + format_value(t.correction_bound));
      run.summary.push_back("exact " + format_value(exact.value));
      run.manifest.parameters["mode"] = "taylor";
      break;
    }
    case Chi2Mode::Mixture: {
      const ContaminatedModel m1(a, epsilon, GapCheck::Skip);
      const ContaminatedModel m2(b, epsilon, GapCheck::Skip);
      const Chi2Value v = chi2_mixture_exact(m1, m2);
      r.experiment = "chi2_mixture";
      r.epsilon = epsilon;
      r.metrics = {{"value", v.value}, {"log_value", v.log_value}};
      run.summary.push_back(format_value(v.value));
      run.manifest.parameters["mode"] = "mixture";
      run.manifest.parameters["epsilon"] = real17(epsilon);
      break;
    }
  }
  run.records.push_back(std::move(r));
  return run;
}

RunResult run_gen_ensemble(const EnsembleConfig& cfg, const RunSettings& s,
                           const std::optional<std::string>& matrix_dir) {
  cfg.validate();
  const int trials = trials_or(s, kDefaultGenTrials);
  const SeedPlan plan{s.master_seed, "gen-ensemble"};
  if (matrix_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*matrix_dir, ec);
    if (ec) fail(ErrorCode::Io, "gen-ensemble: cannot create " + *matrix_dir + ": " + ec.message());
  }

  RunResult run;
  run.manifest = base_manifest("gen-ensemble", s, cfg);
  run.manifest.parameters["trials"] = std::to_string(trials);
  if (matrix_dir) run.manifest.parameters["matrix_dir"] = *matrix_dir;

  run.records.resize(static_cast<std::size_t>(trials));
  parallel_for(run.records.size(), s.workers, [&](std::size_t i) {
    Stream rng = plan.stream(i);
    const PerturbationDraw draw = sample_perturbation(cfg, rng);
    TrialRecord r = record("gen-ensemble", cfg, 0, static_cast<std::int64_t>(i), rng.seed());
    r.metrics = {{"rejects", static_cast<double>(draw.rejects)},
                 {"frobenius", draw.frobenius},
                 {"spectral", draw.spectral},
                 {"spectral_scaled", draw.spectral * std::sqrt(static_cast<double>(cfg.dim))}};
    if (matrix_dir) {
      char name[32];
      std::snprintf(name, sizeof name, "A_%06zu.txt", i);
      save_matrix((std::filesystem::path(*matrix_dir) / name).string(), draw.matrix);
    }
    run.records[i] = std::move(r);
  });

  double rejects = 0, frob = 0, spec = 0;
  for (const auto& r : run.records) {
    rejects += r.metrics.at("rejects");
    frob += r.metrics.at("frobenius");
    spec += r.metrics.at("spectral");
  }
  TrialRecord sum = record("gen-ensemble-summary", cfg, 0, trials, s.master_seed);
  const double rate = trials / (trials + rejects);
  sum.metrics = {{"acceptance_rate", rate},
                 {"total_rejects", rejects},
                 {"mean_frobenius", frob / trials},
                 {"mean_spectral", spec / trials}};
  run.records.push_back(sum);
  run.summary.push_back(line("accepted %d draws, acceptance rate %.4f, mean ||A||_F %.4f, mean ||A||_2 %.4f", trials,
                             rate, frob / trials, spec / trials));
  return run;
}

RunResult run_concentration(const EnsembleConfig& cfg, const RunSettings& s) {
  cfg.validate();
  const int pairs = trials_or(s, kDefaultPairs);
  const std::vector<double> thresholds = s.thresholds.empty() ? default_thresholds(cfg.dim) : s.thresholds;
  const SeedPlan plan{s.master_seed, "concentration"};
  const auto stats = sample_pairs(cfg, pairs, plan, false, PairMode::Independent, s.workers);
  const TailCurve tc = tail_curve(stats, thresholds);

  RunResult run;
  run.manifest = base_manifest("concentration", s, cfg);
  run.manifest.parameters["pairs"] = std::to_string(pairs);
  run.manifest.parameters["thresholds"] = join(thresholds);
  std::vector<double> in_d2;
  for (double t : thresholds) in_d2.push_back(t * cfg.dim * cfg.dim);
  run.manifest.parameters["thresholds_d2"] = join(in_d2);

  for (const auto& p : stats) {
    TrialRecord r = record("concentration_pair", cfg, 0, p.index, p.seed);
    r.metrics = {{"tr_ab", p.tr_ab},
                 {"tr_abab", p.tr_abab},
                 {"trace_stat", p.tr_ab * p.tr_ab + p.tr_abab},
                 {"rejects", static_cast<double>(p.rejects)}};
    run.records.push_back(std::move(r));
  }
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    TrialRecord r = record("concentration_tail", cfg, 0, static_cast<std::int64_t>(k), s.master_seed);
    r.metrics = {{"threshold", tc.thresholds[k]},
                 {"threshold_d2", tc.thresholds[k] * cfg.dim * cfg.dim},
                 {"exceed_prob", tc.exceed_prob[k]},
                 {"exceed_count", static_cast<double>(tc.exceed_count[k])},
                 {"usable", tc.usable[k] ? 1.0 : 0.0}};
    run.records.push_back(std::move(r));
    run.summary.push_back(line("t = %.6g (%.3g/d^2): P = %.6g (%lld pairs)%s", tc.thresholds[k],
                               tc.thresholds[k] * cfg.dim * cfg.dim, tc.exceed_prob[k],
                               static_cast<long long>(tc.exceed_count[k]), tc.usable[k] ? "" : "  [unusable]"));
  }
  TrialRecord fit = record("concentration_fit", cfg, 0, 0, s.master_seed);
  fit.metrics = {{"pairs", static_cast<double>(pairs)}};
  if (!std::isnan(tc.fitted_rate)) {
    fit.metrics["fitted_rate"] = tc.fitted_rate;
    fit.metrics["fitted_intercept"] = tc.fitted_intercept;
    fit.metrics["fitted_rate_per_d2"] = tc.fitted_rate / (static_cast<double>(cfg.dim) * cfg.dim);
    run.summary.push_back(line("fitted rate %.6g (%.6g per d^2)", tc.fitted_rate,
                               tc.fitted_rate / (static_cast<double>(cfg.dim) * cfg.dim)));
  } else {
    run.summary.push_back("fitted rate unavailable: fewer than 2 usable thresholds");
  }
  run.records.push_back(std::move(fit));
  return run;
}

RunResult run_indist(const EnsembleConfig& cfg, const RunSettings& s, PairMode mode) {
  cfg.validate();
  const int pairs = trials_or(s, kDefaultPairs);
  const std::int64_t d = cfg.dim;
  const std::vector<std::int64_t> ns = s.samples.empty() ? std::vector<std::int64_t>{d, d * d / 100, d * d / 10, d * d}
                                                        : s.samples;
  for (auto n : ns) require(n >= 0, "indist: sample sizes must be >= 0");
  const SeedPlan plan{s.master_seed, "indist"};
  const auto stats = sample_pairs(cfg, pairs, plan, true, mode, s.workers);
  std::vector<double> logs;
  logs.reserve(stats.size());
  for (const auto& p : stats) logs.push_back(p.log_chi2);
  const auto curve = tv_curve_from_logs(logs, cfg.dim, ns);

  RunResult run;
  run.manifest = base_manifest("indist", s, cfg);
  run.manifest.parameters["pairs"] = std::to_string(pairs);
  run.manifest.parameters["samples"] = join(ns);
  if (mode == PairMode::Identical) run.manifest.parameters["pair_mode"] = "identical";

  for (const auto& p : stats) {
    TrialRecord r = record("indist_pair", cfg, 0, p.index, p.seed);
    r.metrics = {{"tr_ab", p.tr_ab},
                 {"tr_abab", p.tr_abab},
                 {"log_chi2", p.log_chi2},
                 {"rejects", static_cast<double>(p.rejects)}};
    run.records.push_back(std::move(r));
  }
  for (std::size_t k = 0; k < ns.size(); ++k) {
    const ProductChi2Estimate est = estimate_product_chi2(logs, cfg.dim, ns[k]);
    const TvPoint& tv = curve[k];
    TrialRecord r = record("indist", cfg, ns[k], static_cast<std::int64_t>(k), s.master_seed);
    r.metrics = {{"pairs", static_cast<double>(est.pairs)},
                 {"mean_estimate", est.mean_estimate},
                 {"mean_minus_one", est.mean_estimate - 1.0},
                 {"std_error", est.std_error},
                 {"trimmed_mean", est.trimmed_mean},
                 {"max_log_contribution", est.max_log_contribution},
                 {"min_log_contribution", est.min_log_contribution},
                 {"mean_log_contribution", est.mean_log_contribution},
                 {"heavy_pairs", static_cast<double>(est.heavy_pairs)},
                 {"audited", static_cast<double>(est.audited)},
                 {"audit_max_rel_error", est.audit_max_rel_error},
                 {"tv_raw_bound", tv.raw_bound},
                 {"tv_bound", tv.bound},
                 {"noise_flag", tv.noise_flag ? 1.0 : 0.0}};
    run.records.push_back(std::move(r));
    run.summary.push_back(line("N = %lld: E[chi2^N] = %.6g +- %.3g (trimmed %.6g, max N*log %.4g), TV bound %.4g%s",
                               static_cast<long long>(ns[k]), est.mean_estimate, est.std_error, est.trimmed_mean,
                               est.max_log_contribution, tv.bound, tv.noise_flag ? "  [noise]" : ""));
  }
  return run;
}

RunResult run_power(const EnsembleConfig& cfg, const RunSettings& s, const PowerGrid& grid) {
  cfg.validate();
  require(!grid.datasets.empty() && !grid.testers.empty(), "power: need at least one dataset and one tester");
  const int trials = trials_or(s, kDefaultPowerTrials);
  const std::int64_t d = cfg.dim;

  RunResult run;
  run.manifest = base_manifest("power", s, cfg);
  run.manifest.parameters["trials"] = std::to_string(trials);
  run.manifest.parameters["gamma"] = real17(grid.params.gamma);
  run.manifest.parameters["delta"] = real17(grid.params.delta);
  run.manifest.parameters["threshold_scale"] = real17(grid.params.threshold_scale);
  run.manifest.parameters["block_rows"] = std::to_string(grid.params.block_rows);
  {
    std::string ds, ts;
    for (auto x : grid.datasets) ds += std::string(ds.empty() ? "" : " ") + to_string(x);
    for (auto x : grid.testers) ts += std::string(ts.empty() ? "" : " ") + to_string(x);
    run.manifest.parameters["datasets"] = ds;
    run.manifest.parameters["testers"] = ts;
  }
  if (!s.samples.empty()) run.manifest.parameters["samples"] = join(s.samples);

  for (Dataset data : grid.datasets) {
    // Every tester and sample size sees the same per-trial perturbation and data prefix.
    const SeedPlan plan{s.master_seed, std::string("power/") + to_string(data)};
    for (Tester tester : grid.testers) {
      std::vector<std::int64_t> ns = s.samples;
      if (ns.empty()) {
        if (tester == Tester::Frob) ns = {frob_sample_size(cfg.dim, grid.params.gamma, grid.params.delta)};
        else ns = {d, static_cast<std::int64_t>(kKurtosisSampleConstant) * d * d};
      }
      const std::string tag = std::string("power/") + to_string(data) + "/" + to_string(tester);
      for (std::int64_t n : ns) {
        const PowerResult pr = tester_power(data, tester, cfg, n, trials, plan, grid.params, s.workers);
        for (const auto& t : pr.per_trial) {
          TrialRecord r = record(tag, cfg, n, t.index, t.seed);
          r.metrics = {{"statistic", t.verdict.statistic},
                       {"threshold", t.verdict.threshold},
                       {"reject", t.verdict.reject ? 1.0 : 0.0}};
          run.records.push_back(std::move(r));
        }
        TrialRecord sum = record(tag + "/summary", cfg, n, 0, s.master_seed);
        sum.metrics = {{"trials", static_cast<double>(pr.trials)},
                       {"rejects", static_cast<double>(pr.rejects)},
                       {"reject_rate", pr.reject_rate},
                       {"wilson_lo", pr.wilson_lo},
                       {"wilson_hi", pr.wilson_hi}};
        run.records.push_back(std::move(sum));
        run.summary.push_back(line("%s n = %lld: reject rate %.4f [%.4f, %.4f] over %d trials", tag.c_str(),
                                   static_cast<long long>(n), pr.reject_rate, pr.wilson_lo, pr.wilson_hi,
                                   pr.trials));
      }
    }
  }
  return run;
}

}  // namespace robcov
