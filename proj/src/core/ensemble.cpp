#include "robcov/ensemble.hpp"

#include "robcov/error.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace robcov {

namespace {

// Loose residual tolerance: the value is only compared against spec_cap,
// which sits far from the typical norm, and recorded for diagnostics.
constexpr double kSpectralTol = 1e-3;

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

EnsembleConfig EnsembleConfig::defaults(int dim) {
  EnsembleConfig cfg;
  cfg.dim = dim;
  return cfg;
}

EnsembleConfig EnsembleConfig::with_gap(int dim, double epsilon, double frob_target) {
  EnsembleConfig cfg;
  cfg.dim = dim;
  cfg.epsilon = epsilon;
  cfg.frob_target = frob_target;
  cfg.entry_scale = 1.2 * frob_target;
  cfg.frob_lo = frob_target;
  cfg.frob_hi = 2.0 * frob_target;
  return cfg;
}

void EnsembleConfig::validate() const {
  require(dim >= 2, "EnsembleConfig: dim must be >= 2");
  require(epsilon > 0.0 && epsilon < 0.5, "EnsembleConfig: epsilon must lie in (0, 1/2)");
  require(frob_target > 0.0, "EnsembleConfig: frob_target must be positive");
  require(entry_scale > 0.0, "EnsembleConfig: entry_scale must be positive");
  require(spec_cap > 0.0, "EnsembleConfig: spec_cap must be positive");
  require(frob_lo > 0.0 && frob_lo < frob_hi, "EnsembleConfig: frob window must satisfy 0 < lo < hi");
  require(frob_lo >= frob_target, "EnsembleConfig: frob window must start at or above the gap");
  require(max_rejects >= 1, "EnsembleConfig: max_rejects must be >= 1");
}

bool EnsembleConfig::asymptotically_valid() const {
  return spec_cap / std::sqrt(static_cast<double>(dim)) * outlier_scale() < 1.0;
}

bool operator==(const EnsembleConfig& a, const EnsembleConfig& b) {
  return a.dim == b.dim && a.epsilon == b.epsilon && a.frob_target == b.frob_target &&
         a.entry_scale == b.entry_scale && a.spec_cap == b.spec_cap && a.frob_lo == b.frob_lo &&
         a.frob_hi == b.frob_hi && a.max_rejects == b.max_rejects;
}

std::string to_json(const EnsembleConfig& cfg) {
  const nlohmann::ordered_json j = {
      {"dim", cfg.dim},           {"epsilon", cfg.epsilon},
      {"frob_target", cfg.frob_target}, {"entry_scale", cfg.entry_scale},
      {"spec_cap", cfg.spec_cap}, {"frob_window", {cfg.frob_lo, cfg.frob_hi}},
      {"max_rejects", cfg.max_rejects}};
  return j.dump();
}

EnsembleConfig config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EnsembleConfig cfg;
    cfg.dim = j.at("dim").get<int>();
    cfg.epsilon = j.at("epsilon").get<double>();
    cfg.frob_target = j.at("frob_target").get<double>();
    cfg.entry_scale = j.at("entry_scale").get<double>();
    cfg.spec_cap = j.at("spec_cap").get<double>();
    cfg.frob_lo = j.at("frob_window").at(0).get<double>();
    cfg.frob_hi = j.at("frob_window").at(1).get<double>();
    cfg.max_rejects = j.at("max_rejects").get<int>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("config_from_json: ") + e.what());
  }
}

SymmetricMatrix draw_unconditioned(const EnsembleConfig& cfg, Stream& rng) {
  const int d = cfg.dim;
  const double sd = cfg.entry_scale / d;
  Matrix a = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double x = sd * rng.normal();
      a(i, j) = x;
      a(j, i) = x;
    }
  }
  return SymmetricMatrix(a);
}

PerturbationDraw sample_perturbation(const EnsembleConfig& cfg, Stream& rng) {
  cfg.validate();
  const double cap = cfg.spec_cap / std::sqrt(static_cast<double>(cfg.dim));
  const double k = cfg.outlier_scale();
  for (int rejects = 0; rejects <= cfg.max_rejects; ++rejects) {
    SymmetricMatrix a = draw_unconditioned(cfg, rng);
    const double frob = frobenius_norm(a);
    if (frob < cfg.frob_lo || frob > cfg.frob_hi) continue;
    if (!is_pd(a.shifted(1.0, -k)) || !is_pd(a.shifted(1.0, k))) continue;
    const double spec = spectral_norm(a, kSpectralTol, 50 * cfg.dim + 500);
    if (spec > cap) continue;
    return {std::move(a), rejects, frob, spec};
  }
  const double rate = 1.0 / (cfg.max_rejects + 1);
  fail(ErrorCode::RejectionLimit,
       "sample_perturbation: exceeded " + std::to_string(cfg.max_rejects) +
           " rejections (acceptance rate < " + std::to_string(rate) +
           "); conditioning thresholds are likely misconfigured for dim " + std::to_string(cfg.dim) +
           " and epsilon " + fmt17(cfg.epsilon));
}

namespace {

ZeroMeanGaussian component(const SymmetricMatrix& a, double slope, const char* name) {
  const SymmetricMatrix cov = a.shifted(1.0, slope);
  if (!is_pd(cov)) {
    fail(ErrorCode::NotPositiveDefinite,
         std::string("build_model: ") + name + " covariance is not positive definite (min eigenvalue " +
             fmt17(min_eigenvalue(cov)) + ")");
  }
  return ZeroMeanGaussian(cov);
}

double checked_epsilon(double epsilon) {
  require(epsilon > 0.0 && epsilon < 0.5, "build_model: epsilon must lie in (0, 1/2)");
  return epsilon;
}

const SymmetricMatrix& checked_gap(const SymmetricMatrix& a, GapCheck gap, double gap_value) {
  if (gap == GapCheck::Enforce && !(frobenius_norm(a) > gap_value)) {
    fail(ErrorCode::SoundnessGap, "build_model: ||A||_F = " + fmt17(frobenius_norm(a)) +
                                      " does not exceed the gap " + fmt17(gap_value));
  }
  return a;
}

}  // namespace

ContaminatedModel::ContaminatedModel(const SymmetricMatrix& perturbation, double epsilon, GapCheck gap,
                                     double gap_value)
    : a_(checked_gap(perturbation, gap, gap_value)),
      epsilon_(checked_epsilon(epsilon)),
      inlier_(component(a_, 1.0, "inlier")),
      outlier_(component(a_, -(1.0 - epsilon) / epsilon, "outlier")) {}

Matrix mixture_covariance(const SymmetricMatrix& a, double epsilon) {
  require(epsilon > 0.0 && epsilon < 0.5, "mixture_covariance: epsilon must lie in (0, 1/2)");
  const double k = (1.0 - epsilon) / epsilon;
  return (1.0 - epsilon) * a.shifted(1.0, 1.0).dense() + epsilon * a.shifted(1.0, -k).dense();
}

Matrix ContaminatedModel::mixture_covariance() const {
  return (1.0 - epsilon_) * inlier_.covariance().dense() + epsilon_ * outlier_.covariance().dense();
}

SampleMatrix ContaminatedModel::sample(Stream& rng, std::int64_t n, std::vector<bool>* outlier_rows) const {
  require(n >= 1, "sample_model: n must be >= 1");
  const int d = dim();
  SampleMatrix z(n, d);
  std::vector<bool> flags(static_cast<std::size_t>(n));
  std::int64_t n_out = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    const bool out = rng.uniform() < epsilon_;
    flags[static_cast<std::size_t>(r)] = out;
    n_out += out ? 1 : 0;
    for (int c = 0; c < d; ++c) z(r, c) = rng.normal();
  }

  SampleMatrix zin(n - n_out, d), zout(n_out, d);
  for (std::int64_t r = 0, i = 0, o = 0; r < n; ++r) {
    if (flags[static_cast<std::size_t>(r)]) zout.row(o++) = z.row(r);
    else zin.row(i++) = z.row(r);
  }
  const SampleMatrix xin = zin * inlier_.factor().transpose();
  const SampleMatrix xout = zout * outlier_.factor().transpose();

  SampleMatrix x(n, d);
  for (std::int64_t r = 0, i = 0, o = 0; r < n; ++r) {
    if (flags[static_cast<std::size_t>(r)]) x.row(r) = xout.row(o++);
    else x.row(r) = xin.row(i++);
  }
  if (outlier_rows) *outlier_rows = std::move(flags);
  return x;
}

Chi2Value chi2_mixture_exact(const ContaminatedModel& m1, const ContaminatedModel& m2) {
  if (m1.dim() != m2.dim()) fail(ErrorCode::DimensionMismatch, "chi2_mixture_exact: dimension mismatch");
  const ZeroMeanGaussian* c1[2] = {&m1.inlier(), &m1.outlier()};
  const ZeroMeanGaussian* c2[2] = {&m2.inlier(), &m2.outlier()};
  const double w1[2] = {1.0 - m1.epsilon(), m1.epsilon()};
  const double w2[2] = {1.0 - m2.epsilon(), m2.epsilon()};

  // The weights sum to 1, so the value is 1 + sum w (chi2 - 1). Summing the
  // deviations through expm1 keeps the part that matters, which is tiny next
  // to 1, and gives exactly 1 when every term does.
  double logs[4], weights[4];
  double top = -INFINITY;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      weights[2 * i + j] = w1[i] * w2[j];
      logs[2 * i + j] = chi2_inner_exact(*c1[i], *c2[j]).log_value;
      top = std::max(top, logs[2 * i + j]);
    }
  }
  if (top < 300.0) {
    double dev = 0.0;
    for (int t = 0; t < 4; ++t) dev += weights[t] * std::expm1(logs[t]);
    const double log_value = std::log1p(dev);
    return {1.0 + dev, log_value};
  }
  double s = 0.0;
  for (int t = 0; t < 4; ++t) s += weights[t] * std::exp(logs[t] - top);
  const double log_value = top + std::log(s);
  return {std::exp(log_value), log_value};
}

double first_order_cancellation(double epsilon) {
  require(epsilon > 0.0 && epsilon < 0.5, "first_order_cancellation: epsilon must lie in (0, 1/2)");
  const double k = (1.0 - epsilon) / epsilon;
  const double w_in = 1.0 - epsilon;
  return w_in * w_in * 1.0 + 2.0 * epsilon * w_in * (-k) + epsilon * epsilon * (k * k);
}

void write_matrix(std::ostream& out, const SymmetricMatrix& m) {
  const int d = m.dim();
  out << d << '\n';
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (j) out << ' ';
      out << fmt17(m(i, j));
    }
    out << '\n';
  }
}

SymmetricMatrix read_matrix(std::istream& in) {
  int d = 0;
  if (!(in >> d) || d < 1) fail(ErrorCode::Io, "read_matrix: missing or invalid dimension line");
  std::vector<double> entries(static_cast<std::size_t>(d) * d);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    std::string tok;
    if (!(in >> tok)) {
      fail(ErrorCode::Io, "read_matrix: expected " + std::to_string(entries.size()) + " entries, got " +
                              std::to_string(k));
    }
    char* end = nullptr;
    entries[k] = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') fail(ErrorCode::Io, "read_matrix: bad number '" + tok + "'");
  }
  std::string extra;
  if (in >> extra) fail(ErrorCode::Io, "read_matrix: trailing data after " + std::to_string(d) + " rows");
  return SymmetricMatrix(d, entries);
}

void save_matrix(const std::string& path, const SymmetricMatrix& m) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "save_matrix: cannot open " + path);
  write_matrix(out, m);
  if (!out) fail(ErrorCode::Io, "save_matrix: write failed for " + path);
}

SymmetricMatrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "load_matrix: cannot open " + path);
  return read_matrix(in);
}

}  // namespace robcov
