#pragma once

#include "robcov/ensemble.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace robcov {

// Where an experiment's randomness comes from: item i of the experiment uses
// derive_stream(master_seed, tag, i).
struct SeedPlan {
  std::uint64_t master_seed = 0;
  std::string tag;

  std::uint64_t seed(std::uint64_t index) const { return derive_seed(master_seed, tag, index); }
  Stream stream(std::uint64_t index) const { return derive_stream(master_seed, tag, index); }
};

enum class PairMode { Independent, Identical };

// One ensemble pair (A, B), both drawn from the pair's own stream (A first).
struct PairStats {
  std::int64_t index = 0;
  std::uint64_t seed = 0;
  double tr_ab = 0.0;      // tr(AB)
  double tr_abab = 0.0;    // tr((AB)^2)
  double log_chi2 = 0.0;   // log chi2_G(D_A, D_B); only when requested
  int rejects = 0;         // rejections spent drawing A and B
};

std::vector<PairStats> sample_pairs(const EnsembleConfig& cfg, int pairs, const SeedPlan& seeds,
                                    bool with_chi2, PairMode mode = PairMode::Independent,
                                    int workers = 1);

struct TailCurve {
  std::vector<double> thresholds;
  std::vector<double> exceed_prob;
  std::vector<std::int64_t> exceed_count;
  std::vector<bool> usable;   // count >= kMinTailCount
  double fitted_rate = 0.0;   // slope of -log P against t over usable points; NaN if < 2
  double fitted_intercept = 0.0;
  int pairs = 0;

  static constexpr std::int64_t kMinTailCount = 20;
};

// {1, 2, 4, 8, 16} / d^2
std::vector<double> default_thresholds(int dim);

// Exceedance of s = tr(AB)^2 + tr((AB)^2). Thresholds must be ascending.
TailCurve tail_curve(std::span<const PairStats> stats, std::span<const double> thresholds);
TailCurve trace_stat_tail(const EnsembleConfig& cfg, int pairs, std::span<const double> thresholds,
                          const SeedPlan& seeds, int workers = 1);

struct ProductChi2Estimate {
  int dim = 0;
  std::int64_t n_samples = 0;      // N
  int pairs = 0;
  double mean_estimate = 1.0;      // mean over pairs of chi2^N
  double std_error = 0.0;
  double trimmed_mean = 1.0;       // top 1% of contributions removed
  double max_log_contribution = 0.0;   // max N * log chi2
  double min_log_contribution = 0.0;
  double mean_log_contribution = 0.0;
  int heavy_pairs = 0;             // N * log chi2 > kHeavyLog, aggregated in log space
  int audited = 0;
  double audit_max_rel_error = 0.0;    // float128 recomputation of exp(N log chi2)

  static constexpr double kHeavyLog = 700.0;
};

ProductChi2Estimate estimate_product_chi2(std::span<const double> log_chi2, int dim, std::int64_t n);
ProductChi2Estimate chi2_product_estimate(const EnsembleConfig& cfg, std::int64_t n, int pairs,
                                          const SeedPlan& seeds, int workers = 1,
                                          PairMode mode = PairMode::Independent);

struct TvPoint {
  std::int64_t n_samples = 0;
  double chi2_estimate = 1.0;
  double std_error = 0.0;
  double raw_bound = 0.0;  // tv_lower_bound of the estimate, 0 when the estimate is below 1
  double bound = 0.0;      // after isotonic cleanup (non-decreasing in N)
  bool noise_flag = false; // estimate below 1 by more than 3 standard errors
};

std::vector<TvPoint> tv_curve_from_logs(std::span<const double> log_chi2, int dim,
                                        std::span<const std::int64_t> ns);
std::vector<TvPoint> tv_curve(const EnsembleConfig& cfg, std::span<const std::int64_t> ns, int pairs,
                              const SeedPlan& seeds, int workers = 1);

}  // namespace robcov
