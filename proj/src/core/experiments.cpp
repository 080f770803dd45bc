#include "robcov/experiments.hpp"

#include "robcov/error.hpp"
#include "robcov/parallel.hpp"

#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

namespace robcov {

namespace {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(xs.begin(), xs.end());
  CompensatedSum s;
  for (double x : xs) s.add(std::exp(x - top));
  return top + std::log(s.value());
}

// Mean of exp(c_i): light terms are summed in linear space in ascending order,
// heavy terms (c > kHeavyLog) only ever enter through log-sum-exp.
double mean_of_exp(std::vector<double> contributions) {
  std::sort(contributions.begin(), contributions.end());
  const auto split = std::upper_bound(contributions.begin(), contributions.end(),
                                      ProductChi2Estimate::kHeavyLog);
  CompensatedSum light;
  for (auto it = contributions.begin(); it != split; ++it) light.add(std::exp(*it));
  const double n = static_cast<double>(contributions.size());
  if (split == contributions.end()) return light.value() / n;
  std::vector<double> logs(split, contributions.end());
  if (light.value() > 0.0) logs.push_back(std::log(light.value()));
  return std::exp(log_sum_exp(logs) - std::log(n));
}

// Pool-adjacent-violators for a non-decreasing fit with unit weights.
std::vector<double> isotonic_increasing(const std::vector<double>& y) {
  std::vector<double> level;
  std::vector<std::size_t> width;
  for (double v : y) {
    level.push_back(v);
    width.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const std::size_t w = width[width.size() - 2] + width.back();
      const double merged =
          (level[level.size() - 2] * width[width.size() - 2] + level.back() * width.back()) / w;
      level.pop_back();
      width.pop_back();
      level.back() = merged;
      width.back() = w;
    }
  }
  std::vector<double> out;
  for (std::size_t b = 0; b < level.size(); ++b) out.insert(out.end(), width[b], level[b]);
  return out;
}

}  // namespace

std::vector<PairStats> sample_pairs(const EnsembleConfig& cfg, int pairs, const SeedPlan& seeds,
                                    bool with_chi2, PairMode mode, int workers) {
  require(pairs >= 1, "sample_pairs: pairs must be >= 1");
  cfg.validate();
  std::vector<PairStats> out(static_cast<std::size_t>(pairs));
  parallel_for(out.size(), workers, [&](std::size_t i) {
    Stream rng = seeds.stream(i);
    const PerturbationDraw a = sample_perturbation(cfg, rng);
    const std::optional<PerturbationDraw> b =
        mode == PairMode::Identical ? std::optional<PerturbationDraw>{}
                                    : std::optional<PerturbationDraw>{sample_perturbation(cfg, rng)};
    const SymmetricMatrix& mb = b ? b->matrix : a.matrix;
    PairStats s;
    s.index = static_cast<std::int64_t>(i);
    s.seed = rng.seed();
    s.tr_ab = trace_product_pow(a.matrix, mb, 1);
    s.tr_abab = trace_product_pow(a.matrix, mb, 2);
    s.rejects = a.rejects + (b ? b->rejects : 0);
    if (with_chi2) {
      const ContaminatedModel ma(a.matrix, cfg.epsilon, GapCheck::Enforce, cfg.frob_target);
      if (b) {
        const ContaminatedModel mb_model(b->matrix, cfg.epsilon, GapCheck::Enforce, cfg.frob_target);
        s.log_chi2 = chi2_mixture_exact(ma, mb_model).log_value;
      } else {
        s.log_chi2 = chi2_mixture_exact(ma, ma).log_value;
      }
    }
    out[i] = s;
  });
  return out;
}

std::vector<double> default_thresholds(int dim) {
  const double unit = 1.0 / (static_cast<double>(dim) * dim);
  return {unit, 2 * unit, 4 * unit, 8 * unit, 16 * unit};
}

TailCurve tail_curve(std::span<const PairStats> stats, std::span<const double> thresholds) {
  require(!stats.empty(), "tail_curve: no pairs");
  require(!thresholds.empty(), "tail_curve: no thresholds");
  require(std::is_sorted(thresholds.begin(), thresholds.end()), "tail_curve: thresholds must be ascending");
  TailCurve tc;
  tc.pairs = static_cast<int>(stats.size());
  tc.thresholds.assign(thresholds.begin(), thresholds.end());
  std::vector<double> s;
  s.reserve(stats.size());
  for (const auto& p : stats) s.push_back(p.tr_ab * p.tr_ab + p.tr_abab);
  std::sort(s.begin(), s.end());

  std::vector<double> fit_t, fit_y;
  for (double t : thresholds) {
    const auto count = static_cast<std::int64_t>(s.end() - std::upper_bound(s.begin(), s.end(), t));
    const double p = static_cast<double>(count) / static_cast<double>(s.size());
    const bool usable = count >= TailCurve::kMinTailCount;
    tc.exceed_count.push_back(count);
    tc.exceed_prob.push_back(p);
    tc.usable.push_back(usable);
    if (usable) {
      fit_t.push_back(t);
      fit_y.push_back(-std::log(p));
    }
  }

  if (fit_t.size() < 2) {
    tc.fitted_rate = std::numeric_limits<double>::quiet_NaN();
    tc.fitted_intercept = std::numeric_limits<double>::quiet_NaN();
    return tc;
  }
  const double n = static_cast<double>(fit_t.size());
  const double mt = std::accumulate(fit_t.begin(), fit_t.end(), 0.0) / n;
  const double my = std::accumulate(fit_y.begin(), fit_y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < fit_t.size(); ++i) {
    sxy += (fit_t[i] - mt) * (fit_y[i] - my);
    sxx += (fit_t[i] - mt) * (fit_t[i] - mt);
  }
  tc.fitted_rate = sxy / sxx;
  tc.fitted_intercept = my - tc.fitted_rate * mt;
  return tc;
}

TailCurve trace_stat_tail(const EnsembleConfig& cfg, int pairs, std::span<const double> thresholds,
                          const SeedPlan& seeds, int workers) {
  const auto stats = sample_pairs(cfg, pairs, seeds, false, PairMode::Independent, workers);
  return tail_curve(stats, thresholds);
}

ProductChi2Estimate estimate_product_chi2(std::span<const double> log_chi2, int dim, std::int64_t n) {
  require(!log_chi2.empty(), "chi2_product_estimate: pairs must be >= 1");
  require(n >= 0, "chi2_product_estimate: N must be >= 0");
  ProductChi2Estimate est;
  est.dim = dim;
  est.n_samples = n;
  est.pairs = static_cast<int>(log_chi2.size());

  std::vector<double> contrib;
  contrib.reserve(log_chi2.size());
  for (double l : log_chi2) {
    if (!std::isfinite(l)) fail(ErrorCode::Numeric, "chi2_product_estimate: non-finite log chi2");
    contrib.push_back(n == 0 ? 0.0 : static_cast<double>(n) * l);
  }
  est.max_log_contribution = *std::max_element(contrib.begin(), contrib.end());
  est.min_log_contribution = *std::min_element(contrib.begin(), contrib.end());
  {
    std::vector<double> sorted = contrib;
    std::sort(sorted.begin(), sorted.end());
    CompensatedSum s;
    for (double c : sorted) s.add(c);
    est.mean_log_contribution = s.value() / static_cast<double>(sorted.size());
  }
  est.heavy_pairs = static_cast<int>(
      std::count_if(contrib.begin(), contrib.end(), [](double c) { return c > ProductChi2Estimate::kHeavyLog; }));

  est.mean_estimate = mean_of_exp(contrib);

  const double p = static_cast<double>(contrib.size());
  if (est.heavy_pairs > 0) {
    est.std_error = std::numeric_limits<double>::infinity();
  } else if (contrib.size() > 1) {
    std::vector<double> dev2;
    dev2.reserve(contrib.size());
    for (double c : contrib) {
      const double e = std::exp(c) - est.mean_estimate;
      dev2.push_back(e * e);
    }
    std::sort(dev2.begin(), dev2.end());
    CompensatedSum s;
    for (double v : dev2) s.add(v);
    est.std_error = std::sqrt(s.value() / (p - 1.0)) / std::sqrt(p);
  }

  {
    std::vector<double> sorted = contrib;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t drop = sorted.size() / 100;
    sorted.resize(sorted.size() - drop);
    est.trimmed_mean = mean_of_exp(std::move(sorted));
  }

  for (std::size_t i = 0; i < contrib.size(); i += 100) {
    if (contrib[i] > ProductChi2Estimate::kHeavyLog) continue;
    const __float128 exact = expq(static_cast<__float128>(n) * static_cast<__float128>(log_chi2[i]));
    const double fast = std::exp(contrib[i]);
    const double rel = static_cast<double>(fabsq((static_cast<__float128>(fast) - exact) / exact));
    est.audit_max_rel_error = std::max(est.audit_max_rel_error, rel);
    ++est.audited;
  }
  return est;
}

ProductChi2Estimate chi2_product_estimate(const EnsembleConfig& cfg, std::int64_t n, int pairs,
                                          const SeedPlan& seeds, int workers, PairMode mode) {
  require(n >= 0, "chi2_product_estimate: N must be >= 0");
  const auto stats = sample_pairs(cfg, pairs, seeds, true, mode, workers);
  std::vector<double> logs;
  logs.reserve(stats.size());
  for (const auto& s : stats) logs.push_back(s.log_chi2);
  return estimate_product_chi2(logs, cfg.dim, n);
}

std::vector<TvPoint> tv_curve_from_logs(std::span<const double> log_chi2, int dim,
                                        std::span<const std::int64_t> ns) {
  require(!ns.empty(), "tv_curve: no sample sizes");
  std::vector<TvPoint> pts;
  for (std::int64_t n : ns) {
    const ProductChi2Estimate est = estimate_product_chi2(log_chi2, dim, n);
    TvPoint p;
    p.n_samples = n;
    p.chi2_estimate = est.mean_estimate;
    p.std_error = est.std_error;
    if (est.mean_estimate >= 1.0) {
      p.raw_bound = tv_lower_bound(est.mean_estimate);
    } else {
      p.noise_flag = (1.0 - est.mean_estimate) > 3.0 * est.std_error;
      p.raw_bound = 0.0;
    }
    pts.push_back(p);
  }

  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pts[a].n_samples < pts[b].n_samples; });
  std::vector<double> raw;
  for (std::size_t i : order) raw.push_back(pts[i].raw_bound);
  const std::vector<double> fitted = isotonic_increasing(raw);
  for (std::size_t k = 0; k < order.size(); ++k) pts[order[k]].bound = fitted[k];
  return pts;
}

std::vector<TvPoint> tv_curve(const EnsembleConfig& cfg, std::span<const std::int64_t> ns, int pairs,
                              const SeedPlan& seeds, int workers) {
  require(!ns.empty(), "tv_curve: no sample sizes");
  const auto stats = sample_pairs(cfg, pairs, seeds, true, PairMode::Independent, workers);
  std::vector<double> logs;
  logs.reserve(stats.size());
  for (const auto& s : stats) logs.push_back(s.log_chi2);
  return tv_curve_from_logs(logs, cfg.dim, ns);
}

}  // namespace robcov
