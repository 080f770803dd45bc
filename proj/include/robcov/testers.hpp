#pragma once

#include "robcov/ensemble.hpp"
#include "robcov/experiments.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace robcov {

struct TestVerdict {
  double statistic = 0.0;
  double threshold = 0.0;
  bool reject = false;  // "covariance far from I"; always statistic > threshold
};

// Frozen calibration constants; see README for the runs that produced them.
inline constexpr double kFrobSampleConstant = 200.0;      // n = K d / gamma^2
inline constexpr double kKurtosisSampleConstant = 1200.0;  // n = K' d^2
inline constexpr double kKurtosisThreshold = 2.0;         // standardized-statistic cutoff

// Streaming form of the Frobenius tester. The statistic is the unbiased
// U-statistic estimate of ||Sigma - I||_F^2:
//   mean_{i != j} (x_i . x_j)^2 - 2 mean_i |x_i|^2 + d.
class FrobAccumulator {
 public:
  explicit FrobAccumulator(int dim);
  void add(const SampleMatrix& rows);
  std::int64_t count() const noexcept { return n_; }
  double statistic() const;

 private:
  int dim_;
  std::int64_t n_ = 0;
  Matrix scatter_;     // sum x x^T
  double sum_sq_ = 0;  // sum |x|^2
  double sum_q4_ = 0;  // sum |x|^4
};

// Rejects when the estimate exceeds gamma^2 / 2. Rows are put in lexicographic
// order first, so the statistic is bit-identical under any permutation of the
// input. delta only has to lie in (0, 1/2); it sets frob_sample_size.
TestVerdict frob_tester(const SampleMatrix& samples, double gamma, double delta);

// Samples at which the frozen calibration targets per-arm error <= delta:
// K d / gamma^2 at delta = 1/3, scaled by log(1/delta) / log 3 for other levels.
std::int64_t frob_sample_size(int dim, double gamma, double delta);

// Streaming pairwise fourth-moment probe. For every i < j it estimates
// E[((x_i + x_j)/sqrt 2)^4] - 3 and sums the squares; the sum is standardized
// by its exact mean and variance under N(0, I).
class PairKurtosisAccumulator {
 public:
  explicit PairKurtosisAccumulator(int dim);
  void add(const SampleMatrix& rows);
  std::int64_t count() const noexcept { return n_; }
  double raw_statistic() const;
  double standardized() const;

  static double null_mean(int dim, std::int64_t n);
  static double null_variance(int dim, std::int64_t n);

 private:
  int dim_;
  std::int64_t n_ = 0;
  Vector sum4_;   // sum x_i^4
  Matrix sum31_;  // sum x_i^3 x_j
  Matrix sum22_;  // sum x_i^2 x_j^2
};

TestVerdict pair_kurtosis_tester(const SampleMatrix& samples, double threshold_scale);

// Population fourth moment of u.x along u = (e_i + e_j)/sqrt 2 under the
// contaminated model: 3[(1-eps)(1+a)^2 + eps(1-k a)^2] with a = A_ij.
double mixture_pair_fourth_moment(const ContaminatedModel& model, int i, int j);

enum class Dataset { Null, NoiselessAlt, EnsembleAlt };
enum class Tester { Frob, PairKurtosis };

Dataset parse_dataset(const std::string& tag);
Tester parse_tester(const std::string& tag);
const char* to_string(Dataset d);
const char* to_string(Tester t);

struct PowerParams {
  double gamma = 0.5;
  double delta = 1.0 / 3.0;
  double threshold_scale = kKurtosisThreshold;
  // Streaming block size. The data stream is the same for any value, but the
  // accumulation order (and so the last bits of the statistic) is not.
  std::int64_t block_rows = 128;
};

struct PowerTrial {
  std::int64_t index = 0;
  std::uint64_t seed = 0;
  TestVerdict verdict;
};

struct PowerResult {
  int trials = 0;
  int rejects = 0;
  double reject_rate = 0.0;
  double wilson_lo = 0.0;  // 95% score interval
  double wilson_hi = 0.0;
  std::vector<PowerTrial> per_trial;
};

std::pair<double, double> wilson_interval(int successes, int trials, double z = 1.959963984540054);

// Fresh dataset per trial: null is N(0, I); noiseless-alt is N(0, I + A) and
// ensemble-alt is the contaminated model D_A, with A drawn per trial from cfg.
PowerResult tester_power(Dataset data, Tester tester, const EnsembleConfig& cfg, std::int64_t n,
                         int trials, const SeedPlan& seeds, const PowerParams& params = {},
                         int workers = 1);

}  // namespace robcov
