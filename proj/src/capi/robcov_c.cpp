#include "robcov/robcov.h"

#include "robcov/error.hpp"
#include "robcov/harness.hpp"

#include <cstring>
#include <exception>
#include <new>
#include <sstream>
#include <string>

struct robcov_matrix {
  robcov::SymmetricMatrix m;
};

struct robcov_model {
  robcov::ContaminatedModel m;
};

struct robcov_report {
  robcov::RunResult run;
  std::string summary;
  std::string rendered;
  std::string manifest;
};

namespace {

thread_local std::string g_last_error;

robcov_status to_status(robcov::ErrorCode code) {
  using robcov::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return ROBCOV_E_INVALID_ARGUMENT;
    case ErrorCode::DimensionMismatch: return ROBCOV_E_DIMENSION_MISMATCH;
    case ErrorCode::NotPositiveDefinite: return ROBCOV_E_NOT_POSITIVE_DEFINITE;
    case ErrorCode::DivergentIntegral: return ROBCOV_E_DIVERGENT_INTEGRAL;
    case ErrorCode::NoConvergence: return ROBCOV_E_NO_CONVERGENCE;
    case ErrorCode::RejectionLimit: return ROBCOV_E_REJECTION_LIMIT;
    case ErrorCode::SoundnessGap: return ROBCOV_E_SOUNDNESS_GAP;
    case ErrorCode::Io: return ROBCOV_E_IO;
    case ErrorCode::Numeric: return ROBCOV_E_NUMERIC;
  }
  return ROBCOV_E_INTERNAL;
}

template <class F>
robcov_status guard(F&& f) {
  try {
    f();
    return ROBCOV_OK;
  } catch (const robcov::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ROBCOV_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ROBCOV_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return ROBCOV_E_INTERNAL;
  }
}

template <class T>
T& deref(T* p, const char* what) {
  if (!p) robcov::fail(robcov::ErrorCode::InvalidArgument, std::string(what) + " is null");
  return *p;
}

std::string text(const char* p, const char* what) {
  if (!p) robcov::fail(robcov::ErrorCode::InvalidArgument, std::string(what) + " is null");
  return p;
}

robcov::EnsembleConfig to_config(const robcov_ensemble_params* p) {
  const auto& q = deref(p, "ensemble params");
  robcov::EnsembleConfig cfg;
  cfg.dim = q.dim;
  cfg.epsilon = q.epsilon;
  cfg.frob_target = q.frob_target;
  cfg.entry_scale = q.entry_scale;
  cfg.spec_cap = q.spec_cap;
  cfg.frob_lo = q.frob_lo;
  cfg.frob_hi = q.frob_hi;
  cfg.max_rejects = q.max_rejects;
  cfg.validate();
  return cfg;
}

robcov::RunSettings to_settings(const robcov_run_options* o) {
  const auto& q = deref(o, "run options");
  robcov::require(q.trials >= 0, "trials must be >= 1");
  robcov::require(q.workers >= 1, "workers must be >= 1");
  robcov::require(q.samples_count == 0 || q.samples, "samples pointer is null");
  robcov::require(q.thresholds_count == 0 || q.thresholds, "thresholds pointer is null");
  robcov::RunSettings s;
  s.master_seed = q.master_seed;
  s.trials = q.trials;
  s.workers = q.workers;
  s.samples.assign(q.samples, q.samples + q.samples_count);
  s.thresholds.assign(q.thresholds, q.thresholds + q.thresholds_count);
  return s;
}

std::vector<std::string> split_list(const char* text) {
  std::vector<std::string> out;
  if (!text) return out;
  std::string cur;
  for (const char* c = text; *c; ++c) {
    if (*c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (*c != ' ') {
      cur += *c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

robcov::SampleMatrix to_samples(const double* data, std::int64_t n, int dim) {
  robcov::require(data != nullptr, "samples pointer is null");
  robcov::require(n >= 1 && dim >= 1, "sample matrix must be at least 1 x 1");
  return Eigen::Map<const robcov::SampleMatrix>(data, n, dim);
}

void emit_report(robcov::RunResult run, robcov_report** out) {
  robcov::require(out != nullptr, "output pointer is null");
  auto* r = new robcov_report{std::move(run), {}, {}, {}};
  for (const auto& l : r->run.summary) r->summary += l + "\n";
  *out = r;
}

}  // namespace

extern "C" {

const char* robcov_version(void) { return robcov::kToolVersion; }

const char* robcov_last_error(void) { return g_last_error.c_str(); }

const char* robcov_status_name(robcov_status status) {
  switch (status) {
    case ROBCOV_OK: return "ok";
    case ROBCOV_E_INVALID_ARGUMENT: return "invalid argument";
    case ROBCOV_E_DIMENSION_MISMATCH: return "dimension mismatch";
    case ROBCOV_E_NOT_POSITIVE_DEFINITE: return "not positive definite";
    case ROBCOV_E_DIVERGENT_INTEGRAL: return "divergent integral";
    case ROBCOV_E_NO_CONVERGENCE: return "no convergence";
    case ROBCOV_E_REJECTION_LIMIT: return "rejection limit";
    case ROBCOV_E_SOUNDNESS_GAP: return "soundness gap";
    case ROBCOV_E_IO: return "i/o error";
    case ROBCOV_E_NUMERIC: return "numerical error";
    case ROBCOV_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

robcov_status robcov_default_seed(uint64_t fallback, uint64_t* seed) {
  return guard([&] { deref(seed, "seed") = robcov::default_master_seed(fallback); });
}

uint64_t robcov_derive_seed(uint64_t master_seed, const char* experiment, uint64_t trial_index) {
  return robcov::derive_seed(master_seed, experiment ? experiment : "", trial_index);
}

robcov_status robcov_matrix_create(int dim, const double* row_major, robcov_matrix** out) {
  return guard([&] {
    robcov::require(dim >= 1, "dim must be >= 1");
    robcov::require(row_major != nullptr, "entries pointer is null");
    deref(out, "output pointer") = new robcov_matrix{
        robcov::SymmetricMatrix(dim, std::span<const double>(row_major, static_cast<std::size_t>(dim) * dim))};
  });
}

robcov_status robcov_matrix_identity(int dim, robcov_matrix** out) {
  return guard([&] {
    robcov::require(dim >= 1, "dim must be >= 1");
    deref(out, "output pointer") = new robcov_matrix{robcov::SymmetricMatrix::identity(dim)};
  });
}

robcov_status robcov_matrix_load(const char* path, robcov_matrix** out) {
  return guard([&] { deref(out, "output pointer") = new robcov_matrix{robcov::load_matrix(text(path, "path"))}; });
}

robcov_status robcov_matrix_save(const robcov_matrix* m, const char* path) {
  return guard([&] { robcov::save_matrix(text(path, "path"), deref(m, "matrix").m); });
}

int robcov_matrix_dim(const robcov_matrix* m) { return m ? m->m.dim() : 0; }

robcov_status robcov_matrix_copy_to(const robcov_matrix* m, double* row_major) {
  return guard([&] {
    const auto v = deref(m, "matrix").m.row_major();
    std::memcpy(&deref(row_major, "output buffer"), v.data(), v.size() * sizeof(double));
  });
}

void robcov_matrix_free(robcov_matrix* m) { delete m; }

robcov_status robcov_frobenius_norm(const robcov_matrix* m, double* out) {
  return guard([&] { deref(out, "output") = robcov::frobenius_norm(deref(m, "matrix").m); });
}

robcov_status robcov_spectral_norm(const robcov_matrix* m, double tol, double* out) {
  return guard([&] { deref(out, "output") = robcov::spectral_norm(deref(m, "matrix").m, tol); });
}

robcov_status robcov_trace_product_pow(const robcov_matrix* a, const robcov_matrix* b, int power, double* out) {
  return guard([&] { deref(out, "output") = robcov::trace_product_pow(deref(a, "A").m, deref(b, "B").m, power); });
}

robcov_status robcov_logdet_pd(const robcov_matrix* m, double* out) {
  return guard([&] { deref(out, "output") = robcov::logdet_pd(deref(m, "matrix").m); });
}

robcov_status robcov_is_pd(const robcov_matrix* m, int* out) {
  return guard([&] { deref(out, "output") = robcov::is_pd(deref(m, "matrix").m) ? 1 : 0; });
}

robcov_status robcov_chi2_exact(const robcov_matrix* sigma1, const robcov_matrix* sigma2, double* value,
                                double* log_value) {
  return guard([&] {
    const auto v = robcov::chi2_inner_exact(deref(sigma1, "sigma1").m, deref(sigma2, "sigma2").m);
    if (value) *value = v.value;
    if (log_value) *log_value = v.log_value;
  });
}

robcov_status robcov_chi2_taylor(const robcov_matrix* a, const robcov_matrix* b, double* first_order,
                                 double* correction_bound) {
  return guard([&] {
    const auto t = robcov::chi2_inner_taylor(deref(a, "A").m, deref(b, "B").m);
    if (first_order) *first_order = t.first_order;
    if (correction_bound) *correction_bound = t.correction_bound;
  });
}

robcov_status robcov_det_series(const robcov_matrix* a, const robcov_matrix* b, int terms, double* lhs, double* rhs) {
  return guard([&] {
    const auto ds = robcov::det_series_check(deref(a, "A").m, deref(b, "B").m, terms);
    if (lhs) *lhs = ds.lhs;
    if (rhs) *rhs = ds.rhs;
  });
}

robcov_status robcov_tv_bound(double chi2_self, double* out) {
  return guard([&] { deref(out, "output") = robcov::tv_lower_bound(chi2_self); });
}

robcov_status robcov_ensemble_params_init(int dim, double epsilon, double frob_target, robcov_ensemble_params* out) {
  return guard([&] {
    const auto cfg = robcov::EnsembleConfig::with_gap(dim, epsilon, frob_target);
    cfg.validate();
    deref(out, "output") = {cfg.dim,      cfg.epsilon, cfg.frob_target, cfg.entry_scale,
                            cfg.spec_cap, cfg.frob_lo, cfg.frob_hi,     cfg.max_rejects};
  });
}

robcov_status robcov_sample_perturbation(const robcov_ensemble_params* params, uint64_t master_seed,
                                         const char* experiment, uint64_t trial_index, robcov_matrix** out,
                                         int* rejects) {
  return guard([&] {
    auto& slot = deref(out, "output pointer");
    robcov::Stream rng = robcov::derive_stream(master_seed, text(experiment, "experiment tag"), trial_index);
    auto draw = robcov::sample_perturbation(to_config(params), rng);
    if (rejects) *rejects = draw.rejects;
    slot = new robcov_matrix{std::move(draw.matrix)};
  });
}

robcov_status robcov_model_create(const robcov_matrix* perturbation, double epsilon, int check_gap,
                                  robcov_model** out) {
  return guard([&] {
    auto& slot = deref(out, "output pointer");
    slot = new robcov_model{robcov::ContaminatedModel(deref(perturbation, "perturbation").m, epsilon,
                                                      check_gap ? robcov::GapCheck::Enforce : robcov::GapCheck::Skip)};
  });
}

void robcov_model_free(robcov_model* m) { delete m; }

int robcov_model_dim(const robcov_model* m) { return m ? m->m.dim() : 0; }

robcov_status robcov_model_covariance(const robcov_model* m, double* row_major) {
  return guard([&] {
    const robcov::Matrix c = deref(m, "model").m.mixture_covariance();
    double* dst = &deref(row_major, "output buffer");
    const int d = static_cast<int>(c.rows());
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) dst[static_cast<std::size_t>(i) * d + j] = c(i, j);
  });
}

robcov_status robcov_model_sample(const robcov_model* m, uint64_t master_seed, const char* experiment,
                                  uint64_t trial_index, int64_t n, double* out) {
  return guard([&] {
    const auto& model = deref(m, "model").m;
    double* dst = &deref(out, "output buffer");
    robcov::Stream rng = robcov::derive_stream(master_seed, text(experiment, "experiment tag"), trial_index);
    const robcov::SampleMatrix x = model.sample(rng, n);
    std::memcpy(dst, x.data(), static_cast<std::size_t>(x.size()) * sizeof(double));
  });
}

robcov_status robcov_chi2_mixture(const robcov_model* m1, const robcov_model* m2, double* value, double* log_value) {
  return guard([&] {
    const auto v = robcov::chi2_mixture_exact(deref(m1, "model 1").m, deref(m2, "model 2").m);
    if (value) *value = v.value;
    if (log_value) *log_value = v.log_value;
  });
}

robcov_status robcov_first_order_cancellation(double epsilon, double* out) {
  return guard([&] { deref(out, "output") = robcov::first_order_cancellation(epsilon); });
}

robcov_status robcov_frob_tester(const double* samples, int64_t n, int dim, double gamma, double delta,
                                 robcov_verdict* out) {
  return guard([&] {
    auto& slot = deref(out, "output");
    const auto v = robcov::frob_tester(to_samples(samples, n, dim), gamma, delta);
    slot = {v.statistic, v.threshold, v.reject ? 1 : 0};
  });
}

robcov_status robcov_pair_kurtosis_tester(const double* samples, int64_t n, int dim, double threshold_scale,
                                          robcov_verdict* out) {
  return guard([&] {
    auto& slot = deref(out, "output");
    const auto v = robcov::pair_kurtosis_tester(to_samples(samples, n, dim), threshold_scale);
    slot = {v.statistic, v.threshold, v.reject ? 1 : 0};
  });
}

void robcov_run_options_init(robcov_run_options* opts) {
  if (!opts) return;
  *opts = robcov_run_options{};
  opts->workers = 1;
  opts->gamma = 0.5;
  opts->delta = 1.0 / 3.0;
  opts->threshold_scale = robcov::kKurtosisThreshold;
}

robcov_status robcov_run_chi2(const char* path_a, const char* path_b, const char* mode, double epsilon,
                              robcov_report** out) {
  return guard([&] {
    emit_report(robcov::run_chi2(text(path_a, "path A"), text(path_b, "path B"),
                                 robcov::parse_chi2_mode(mode ? mode : "exact"), epsilon),
                out);
  });
}

robcov_status robcov_run_gen_ensemble(const robcov_ensemble_params* params, const robcov_run_options* opts,
                                      robcov_report** out) {
  return guard([&] {
    const auto s = to_settings(opts);
    std::optional<std::string> dir;
    if (opts->matrix_dir && *opts->matrix_dir) dir = opts->matrix_dir;
    emit_report(robcov::run_gen_ensemble(to_config(params), s, dir), out);
  });
}

robcov_status robcov_run_concentration(const robcov_ensemble_params* params, const robcov_run_options* opts,
                                       robcov_report** out) {
  return guard([&] { emit_report(robcov::run_concentration(to_config(params), to_settings(opts)), out); });
}

robcov_status robcov_run_indist(const robcov_ensemble_params* params, const robcov_run_options* opts,
                                robcov_report** out) {
  return guard([&] {
    const auto s = to_settings(opts);
    const auto mode = opts->identical_pairs ? robcov::PairMode::Identical : robcov::PairMode::Independent;
    emit_report(robcov::run_indist(to_config(params), s, mode), out);
  });
}

robcov_status robcov_run_power(const robcov_ensemble_params* params, const robcov_run_options* opts,
                               robcov_report** out) {
  return guard([&] {
    const auto s = to_settings(opts);
    robcov::PowerGrid grid;
    auto datasets = split_list(opts->datasets);
    auto testers = split_list(opts->testers);
    if (datasets.empty()) datasets = {"null", "noiseless-alt", "ensemble-alt"};
    if (testers.empty()) testers = {"frob", "kurtosis"};
    for (const auto& d : datasets) grid.datasets.push_back(robcov::parse_dataset(d));
    for (const auto& t : testers) grid.testers.push_back(robcov::parse_tester(t));
    grid.params.gamma = opts->gamma;
    grid.params.delta = opts->delta;
    grid.params.threshold_scale = opts->threshold_scale;
    emit_report(robcov::run_power(to_config(params), s, grid), out);
  });
}

robcov_status robcov_run_selfcheck(const robcov_run_options* opts, robcov_report** out) {
  return guard([&] { emit_report(robcov::run_selfcheck(to_settings(opts)), out); });
}

size_t robcov_report_record_count(const robcov_report* r) { return r ? r->run.records.size() : 0; }

int robcov_report_failures(const robcov_report* r) { return r ? r->run.failures : 0; }

const char* robcov_report_summary(const robcov_report* r) { return r ? r->summary.c_str() : ""; }

robcov_status robcov_report_render(robcov_report* r, const char* format, const char** text) {
  return guard([&] {
    auto& rep = deref(r, "report");
    const auto f = robcov::parse_format(format ? format : "csv");
    std::ostringstream buf;
    robcov::emit(buf, rep.run.records, f);
    rep.rendered = buf.str();
    deref(text, "output") = rep.rendered.c_str();
  });
}

robcov_status robcov_report_write(const robcov_report* r, const char* path, const char* format) {
  return guard([&] {
    robcov::write_run(deref(r, "report").run, text(path, "path"), robcov::parse_format(format ? format : "csv"));
  });
}

const char* robcov_report_manifest(robcov_report* r) {
  if (!r) return "";
  r->manifest = robcov::to_json(r->run.manifest);
  return r->manifest.c_str();
}

void robcov_report_free(robcov_report* r) { delete r; }

}  // extern "C"
