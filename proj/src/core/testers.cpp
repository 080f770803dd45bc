#include "robcov/testers.hpp"

#include "robcov/error.hpp"
#include "robcov/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace robcov {

namespace {

// Moments of y ~ N(0,1) used by the pair-kurtosis null law.
// u = y^4 - 3 has variance 96. For a second standard normal with correlation
// rho, Mehler's expansion gives
//   Cov(y^4, y'^4)       = 72 rho^2 + 24 rho^4
//   E[u^2 u'^2]          = sum_k rho^k / k! * E[g^(k)]^2,  g(y) = (y^4 - 3)^2
// with E[g^(k)] = 96, 768, 4896, 20160, 40320 for k = 0, 2, 4, 6, 8.
constexpr double kVarU = 96.0;

double cov_fourth_powers(double rho) {
  const double r2 = rho * rho;
  return 72.0 * r2 + 24.0 * r2 * r2;
}

double mixed_u_squares(double rho) {
  constexpr double g[5] = {96.0, 768.0, 4896.0, 20160.0, 40320.0};
  constexpr double fact[5] = {1.0, 2.0, 24.0, 720.0, 40320.0};
  double total = 0.0;
  for (int m = 0; m < 5; ++m) total += std::pow(rho, 2 * m) / fact[m] * g[m] * g[m];
  return total;
}

// Cov(D_p^2, D_q^2) for sample means D of n i.i.d. copies of (u_p, u_q).
double cov_mean_squares(double rho, double n) {
  const double c = cov_fourth_powers(rho);
  return (mixed_u_squares(rho) - kVarU * kVarU - 2.0 * c * c) / (n * n * n) + 2.0 * c * c / (n * n);
}

SampleMatrix sorted_rows(const SampleMatrix& x) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const Eigen::Index d = x.cols();
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double* ra = x.data() + a * d;
    const double* rb = x.data() + b * d;
    return std::lexicographical_compare(ra, ra + d, rb, rb + d);
  });
  SampleMatrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
  return out;
}

}  // namespace

FrobAccumulator::FrobAccumulator(int dim) : dim_(dim), scatter_(Matrix::Zero(dim, dim)) {
  require(dim >= 1, "FrobAccumulator: dim must be >= 1");
}

void FrobAccumulator::add(const SampleMatrix& rows) {
  if (rows.cols() != dim_) fail(ErrorCode::DimensionMismatch, "frob_tester: sample dimension mismatch");
  if (rows.rows() == 0) return;
  scatter_.selfadjointView<Eigen::Lower>().rankUpdate(rows.transpose());
  const Vector q = rows.rowwise().squaredNorm();
  sum_sq_ += q.sum();
  sum_q4_ += q.squaredNorm();
  n_ += rows.rows();
}

double FrobAccumulator::statistic() const {
  if (n_ < 2) fail(ErrorCode::InvalidArgument, "frob_tester: need at least 2 samples");
  const Matrix lower = scatter_.triangularView<Eigen::Lower>();
  const double diag2 = scatter_.diagonal().squaredNorm();
  const double frob2 = 2.0 * lower.squaredNorm() - diag2;
  const double n = static_cast<double>(n_);
  const double tr_sigma2 = (frob2 - sum_q4_) / (n * (n - 1.0));
  const double tr_sigma = sum_sq_ / n;
  return tr_sigma2 - 2.0 * tr_sigma + dim_;
}

TestVerdict frob_tester(const SampleMatrix& samples, double gamma, double delta) {
  require(samples.rows() >= 2, "frob_tester: need at least 2 samples");
  require(gamma > 0.0, "frob_tester: gamma must be positive");
  require(delta > 0.0 && delta < 0.5, "frob_tester: delta must lie in (0, 1/2)");
  FrobAccumulator acc(static_cast<int>(samples.cols()));
  acc.add(sorted_rows(samples));
  const double stat = acc.statistic();
  const double threshold = 0.5 * gamma * gamma;
  return {stat, threshold, stat > threshold};
}

std::int64_t frob_sample_size(int dim, double gamma, double delta) {
  require(dim >= 1 && gamma > 0.0 && delta > 0.0 && delta < 0.5, "frob_sample_size: bad arguments");
  const double scale = std::log(1.0 / delta) / std::log(3.0);
  return static_cast<std::int64_t>(std::ceil(kFrobSampleConstant * dim / (gamma * gamma) * scale));
}

PairKurtosisAccumulator::PairKurtosisAccumulator(int dim)
    : dim_(dim), sum4_(Vector::Zero(dim)), sum31_(Matrix::Zero(dim, dim)), sum22_(Matrix::Zero(dim, dim)) {
  require(dim >= 2, "pair_kurtosis_tester: need at least 2 coordinates");
}

void PairKurtosisAccumulator::add(const SampleMatrix& rows) {
  if (rows.cols() != dim_) fail(ErrorCode::DimensionMismatch, "pair_kurtosis_tester: sample dimension mismatch");
  if (rows.rows() == 0) return;
  const SampleMatrix sq = rows.array().square().matrix();
  const SampleMatrix cube = (sq.array() * rows.array()).matrix();
  sum4_ += sq.array().square().matrix().colwise().sum().transpose();
  sum31_.noalias() += cube.transpose() * rows;
  sum22_.selfadjointView<Eigen::Lower>().rankUpdate(sq.transpose());
  n_ += rows.rows();
}

double PairKurtosisAccumulator::raw_statistic() const {
  const double n = static_cast<double>(n_);
  double total = 0.0;
  for (int j = 0; j < dim_; ++j) {
    for (int i = j + 1; i < dim_; ++i) {
      // sum_s (x_i + x_j)^4 / 4, with sum22_ stored in its lower triangle (i > j)
      const double fourth =
          (sum4_(i) + sum4_(j) + 4.0 * (sum31_(i, j) + sum31_(j, i)) + 6.0 * sum22_(i, j)) / 4.0;
      const double dev = fourth / n - 3.0;
      total += dev * dev;
    }
  }
  return total;
}

double PairKurtosisAccumulator::null_mean(int dim, std::int64_t n) {
  const double pairs = 0.5 * dim * (dim - 1.0);
  return pairs * kVarU / static_cast<double>(n);
}

double PairKurtosisAccumulator::null_variance(int dim, std::int64_t n) {
  const double pairs = 0.5 * dim * (dim - 1.0);
  const double nn = static_cast<double>(n);
  return pairs * (cov_mean_squares(1.0, nn) + 2.0 * (dim - 2.0) * cov_mean_squares(0.5, nn));
}

double PairKurtosisAccumulator::standardized() const {
  if (n_ < 8) fail(ErrorCode::InvalidArgument, "pair_kurtosis_tester: need at least 8 samples");
  return (raw_statistic() - null_mean(dim_, n_)) / std::sqrt(null_variance(dim_, n_));
}

TestVerdict pair_kurtosis_tester(const SampleMatrix& samples, double threshold_scale) {
  require(samples.rows() >= 8, "pair_kurtosis_tester: need at least 8 samples");
  PairKurtosisAccumulator acc(static_cast<int>(samples.cols()));
  acc.add(samples);
  const double z = acc.standardized();
  return {z, threshold_scale, z > threshold_scale};
}

double mixture_pair_fourth_moment(const ContaminatedModel& model, int i, int j) {
  require(i != j && i >= 0 && j >= 0 && i < model.dim() && j < model.dim(),
          "mixture_pair_fourth_moment: need two distinct coordinates");
  const auto& a = model.perturbation();
  const double quad = 0.5 * (a(i, i) + a(j, j)) + a(i, j);
  const double eps = model.epsilon();
  const double k = model.outlier_scale();
  const double in = 1.0 + quad;
  const double out = 1.0 - k * quad;
  return 3.0 * ((1.0 - eps) * in * in + eps * out * out);
}

Dataset parse_dataset(const std::string& tag) {
  if (tag == "null") return Dataset::Null;
  if (tag == "noiseless-alt") return Dataset::NoiselessAlt;
  if (tag == "ensemble-alt") return Dataset::EnsembleAlt;
  fail(ErrorCode::InvalidArgument, "unknown dataset tag '" + tag + "' (null | noiseless-alt | ensemble-alt)");
}

Tester parse_tester(const std::string& tag) {
  if (tag == "frob") return Tester::Frob;
  if (tag == "kurtosis" || tag == "pair-kurtosis") return Tester::PairKurtosis;
  fail(ErrorCode::InvalidArgument, "unknown tester tag '" + tag + "' (frob | kurtosis)");
}

const char* to_string(Dataset d) {
  switch (d) {
    case Dataset::Null: return "null";
    case Dataset::NoiselessAlt: return "noiseless-alt";
    case Dataset::EnsembleAlt: return "ensemble-alt";
  }
  return "?";
}

const char* to_string(Tester t) { return t == Tester::Frob ? "frob" : "kurtosis"; }

std::pair<double, double> wilson_interval(int successes, int trials, double z) {
  require(trials >= 1 && successes >= 0 && successes <= trials, "wilson_interval: need 0 <= successes <= trials");
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z / (1 + z2 / n) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  // The limits are exactly 0 and 1 at the extremes; rounding would miss them.
  const double lo = successes == 0 ? 0.0 : std::max(0.0, centre - half);
  const double hi = successes == trials ? 1.0 : std::min(1.0, centre + half);
  return {lo, hi};
}

PowerResult tester_power(Dataset data, Tester tester, const EnsembleConfig& cfg, std::int64_t n,
                         int trials, const SeedPlan& seeds, const PowerParams& params, int workers) {
  require(trials >= 1, "tester_power: trials must be >= 1");
  require(params.block_rows >= 1, "tester_power: block_rows must be >= 1");
  if (tester == Tester::Frob) {
    require(n >= 2, "tester_power: frob tester needs n >= 2");
    require(params.gamma > 0.0, "tester_power: gamma must be positive");
  } else {
    require(n >= 8, "tester_power: kurtosis tester needs n >= 8");
  }
  cfg.validate();
  const int d = cfg.dim;

  PowerResult result;
  result.trials = trials;
  result.per_trial.resize(static_cast<std::size_t>(trials));
  parallel_for(result.per_trial.size(), workers, [&](std::size_t t) {
    Stream rng = seeds.stream(t);
    std::optional<ZeroMeanGaussian> gaussian;
    std::optional<ContaminatedModel> model;
    if (data == Dataset::NoiselessAlt) {
      gaussian.emplace(sample_perturbation(cfg, rng).matrix.shifted(1.0, 1.0));
    } else if (data == Dataset::EnsembleAlt) {
      model.emplace(sample_perturbation(cfg, rng).matrix, cfg.epsilon, GapCheck::Enforce, cfg.frob_target);
    }

    auto next_block = [&](std::int64_t rows) -> SampleMatrix {
      if (model) return model->sample(rng, rows);
      if (gaussian) return gaussian->sample(rng, rows);
      SampleMatrix z(rows, d);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int c = 0; c < d; ++c) z(r, c) = rng.normal();
      return z;
    };

    FrobAccumulator frob(d);
    std::optional<PairKurtosisAccumulator> kurt;
    if (tester == Tester::PairKurtosis) kurt.emplace(d);
    for (std::int64_t done = 0; done < n;) {
      const std::int64_t rows = std::min(params.block_rows, n - done);
      const SampleMatrix block = next_block(rows);
      if (kurt) kurt->add(block);
      else frob.add(block);
      done += rows;
    }

    TestVerdict v;
    if (kurt) {
      v.statistic = kurt->standardized();
      v.threshold = params.threshold_scale;
    } else {
      v.statistic = frob.statistic();
      v.threshold = 0.5 * params.gamma * params.gamma;
    }
    v.reject = v.statistic > v.threshold;
    result.per_trial[t] = {static_cast<std::int64_t>(t), rng.seed(), v};
  });

  for (const auto& tr : result.per_trial) result.rejects += tr.verdict.reject ? 1 : 0;
  result.reject_rate = static_cast<double>(result.rejects) / trials;
  std::tie(result.wilson_lo, result.wilson_hi) = wilson_interval(result.rejects, trials);
  return result;
}

}  // namespace robcov
