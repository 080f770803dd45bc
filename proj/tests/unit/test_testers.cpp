#include "doctest.h"
#include "oracles.hpp"

#include "robcov/error.hpp"
#include "robcov/testers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>
#include <vector>

using namespace robcov;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Numeric;
}

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

SampleMatrix normals(Stream& rng, int n, int d) {
  SampleMatrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

// O(n^2) U-statistic straight from its definition.
double naive_frob(const SampleMatrix& x) {
  const auto n = x.rows();
  double pairs = 0.0, norms = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    norms += x.row(i).squaredNorm();
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) {
        const double ip = x.row(i).dot(x.row(j));
        pairs += ip * ip;
      }
  }
  const double nn = static_cast<double>(n);
  return pairs / (nn * (nn - 1.0)) - 2.0 * norms / nn + static_cast<double>(x.cols());
}

double naive_pair_kurtosis(const SampleMatrix& x) {
  const auto n = static_cast<double>(x.rows());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    for (Eigen::Index j = i + 1; j < x.cols(); ++j) {
      double m4 = 0.0;
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double y = (x(r, i) + x(r, j)) / std::sqrt(2.0);
        m4 += y * y * y * y;
      }
      const double dev = m4 / n - 3.0;
      sum += dev * dev;
    }
  return sum;
}

}  // namespace

TEST_CASE("frob statistic matches the pairwise definition") {
  Stream rng(1);
  for (int t = 0; t < 10; ++t) {
    const SampleMatrix x = normals(rng, 30 + t, 4);
    FrobAccumulator acc(4);
    acc.add(x);
    CHECK(acc.statistic() == doctest::Approx(naive_frob(x)).epsilon(1e-11).scale(1e-9));
  }
}

TEST_CASE("frob verdict contract and preconditions") {
  Stream rng(2);
  const SampleMatrix x = normals(rng, 100, 5);
  const auto v = frob_tester(x, 0.5, 1.0 / 3.0);
  CHECK(v.threshold == 0.125);
  CHECK(v.reject == (v.statistic > v.threshold));
  CHECK(code_of([&] { frob_tester(x.topRows(1), 0.5, 0.3); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { frob_tester(x, 0.0, 0.3); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { frob_tester(x, 0.5, 0.6); }) == ErrorCode::InvalidArgument);
  FrobAccumulator acc(4);
  CHECK(code_of([&] { acc.add(x); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("frob statistic is bit-identical under row permutations") {
  Stream rng(3);
  SampleMatrix x = normals(rng, 257, 7);
  const double base = frob_tester(x, 0.5, 0.3).statistic;
  std::vector<int> perm(257);
  std::iota(perm.begin(), perm.end(), 0);
  for (int t = 0; t < 10; ++t) {
    for (int i = 256; i > 0; --i) std::swap(perm[i], perm[static_cast<int>(rng.bits() % (i + 1))]);
    SampleMatrix y(257, 7);
    for (int i = 0; i < 257; ++i) y.row(i) = x.row(perm[i]);
    CHECK(frob_tester(y, 0.5, 0.3).statistic == base);
  }
}

TEST_CASE("frob statistic is unbiased") {
  Stream inst(4);
  for (int s = 0; s < 5; ++s) {
    const Matrix sigma = oracle::random_covariance(inst, 8, 0.4, 1.8);
    const double truth = (sigma - Matrix::Identity(8, 8)).squaredNorm();
    const ZeroMeanGaussian g{SymmetricMatrix(sigma)};
    Stream rng(100 + s);
    const int trials = 10000;
    double sum = 0.0, sum2 = 0.0;
    for (int t = 0; t < trials; ++t) {
      FrobAccumulator acc(8);
      acc.add(g.sample(rng, 50));
      const double v = acc.statistic();
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / trials;
    const double se = std::sqrt((sum2 / trials - mean * mean) / trials);
    CHECK(std::abs(mean - truth) <= 3.0 * se);
  }
}

TEST_CASE("frob_sample_size") {
  CHECK(frob_sample_size(64, 0.5, 1.0 / 3.0) == 51200);
  CHECK(frob_sample_size(64, 0.5, 1.0 / 9.0) == 102400);
  CHECK(code_of([] { frob_sample_size(64, 0.5, 0.5); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("frob tester keeps the null level at d = 64") {
  const auto cfg = EnsembleConfig::with_gap(64, 0.15, 0.5);
  const auto res = tester_power(Dataset::Null, Tester::Frob, cfg, frob_sample_size(64, 0.5, 1.0 / 3.0), 400,
                                SeedPlan{0, "frob-null"}, {}, workers());
  CHECK(res.trials == 400);
  CHECK(res.reject_rate <= 1.0 / 3.0);
}

TEST_CASE("frob tester is blind to the ensemble at large n") {
  const auto cfg = EnsembleConfig::with_gap(16, 0.25, 0.5);
  const auto res = tester_power(Dataset::EnsembleAlt, Tester::Frob, cfg, 1000000, 30,
                                SeedPlan{0, "frob-blind"}, {}, workers());
  CHECK(res.reject_rate <= 1.0 / 3.0);
}

TEST_CASE("pair kurtosis statistic matches the pairwise definition") {
  Stream rng(5);
  for (int t = 0; t < 5; ++t) {
    const SampleMatrix x = normals(rng, 40 + t, 6);
    PairKurtosisAccumulator acc(6);
    acc.add(x);
    CHECK(acc.raw_statistic() == doctest::Approx(naive_pair_kurtosis(x)).epsilon(1e-10));

    PairKurtosisAccumulator blocks(6);
    blocks.add(x.topRows(17));
    blocks.add(x.bottomRows(x.rows() - 17));
    CHECK(blocks.raw_statistic() == doctest::Approx(acc.raw_statistic()).epsilon(1e-12));
  }
  CHECK(code_of([&] { pair_kurtosis_tester(normals(rng, 7, 3), 2.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("pair kurtosis null moments match simulation") {
  const int d = 4, n = 200, trials = 20000;
  Stream rng(6);
  double sum = 0.0, sum2 = 0.0;
  for (int t = 0; t < trials; ++t) {
    PairKurtosisAccumulator acc(d);
    acc.add(normals(rng, n, d));
    const double v = acc.raw_statistic();
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / trials, var = sum2 / trials - mean * mean;
  CHECK(std::abs(mean - PairKurtosisAccumulator::null_mean(d, n)) <= 3.0 * std::sqrt(var / trials));
  CHECK(var / PairKurtosisAccumulator::null_variance(d, n) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("pair kurtosis null calibration at d = 32") {
  const SeedPlan seeds{0, "kurtosis-null"};
  const auto cfg = EnsembleConfig::with_gap(32, 0.25, 0.5);
  PowerParams p;
  p.threshold_scale = 4.0;
  const auto res = tester_power(Dataset::Null, Tester::PairKurtosis, cfg, 100000, 100, seeds, p, workers());
  for (const auto& t : res.per_trial) CHECK(std::abs(t.verdict.statistic) <= 4.0);
}

TEST_CASE("mixture pair fourth moment") {
  const auto cfg = EnsembleConfig::defaults(128);
  Stream rng(7);
  const ContaminatedModel m(sample_perturbation(cfg, rng).matrix, 0.1);
  oracle::Quadrature q;
  for (auto [i, j] : {std::pair{0, 1}, {5, 77}, {127, 3}}) {
    const double a = m.perturbation()(i, j);
    const double v = mixture_pair_fourth_moment(m, i, j);
    CHECK(v == doctest::Approx(3.0 * (1.0 + 9.0 * a * a)).epsilon(1e-13));
    const double quad = q.real_line([&](double y) {
      return y * y * y * y * (0.9 * oracle::normal_pdf(y, 1.0 + a) + 0.1 * oracle::normal_pdf(y, 1.0 - 9.0 * a));
    });
    CHECK(v == doctest::Approx(quad).epsilon(1e-9));
  }
  CHECK(code_of([&] { mixture_pair_fourth_moment(m, 2, 2); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("population kurtosis signal is positive for accepted perturbations") {
  for (auto [d, eps] : {std::pair{16, 0.4}, {64, 0.15}}) {
    const auto cfg = EnsembleConfig::with_gap(d, eps, 0.5);
    Stream rng(8);
    for (int t = 0; t < 10; ++t) {
      const ContaminatedModel m(sample_perturbation(cfg, rng).matrix, eps);
      double signal = 0.0;
      for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
          const double dev = mixture_pair_fourth_moment(m, i, j) - 3.0;
          signal += dev * dev;
        }
      CHECK(signal > 0.0);
    }
  }
}

TEST_CASE("tags and intervals") {
  for (auto ds : {Dataset::Null, Dataset::NoiselessAlt, Dataset::EnsembleAlt})
    CHECK(parse_dataset(to_string(ds)) == ds);
  for (auto t : {Tester::Frob, Tester::PairKurtosis}) CHECK(parse_tester(to_string(t)) == t);
  CHECK(parse_tester("pair-kurtosis") == Tester::PairKurtosis);
  CHECK(code_of([] { parse_dataset("noisy"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { parse_tester("median"); }) == ErrorCode::InvalidArgument);

  // Score interval from its closed form.
  const double z = 1.959963984540054;
  for (auto [k, n] : {std::pair{0, 10}, {7, 20}, {400, 400}, {133, 400}}) {
    const double p = static_cast<double>(k) / n;
    const double centre = (p + z * z / (2.0 * n)) / (1.0 + z * z / n);
    const double half = z / (1.0 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4.0 * n * n));
    const auto [lo, hi] = wilson_interval(k, n);
    CHECK(lo == doctest::Approx(centre - half).epsilon(1e-12).scale(1e-15));
    CHECK(hi == doctest::Approx(centre + half).epsilon(1e-12));
    CHECK(lo <= p);
    CHECK(hi >= p);
  }
}

TEST_CASE("tester_power is reproducible across worker counts") {
  const auto cfg = EnsembleConfig::with_gap(16, 0.25, 0.5);
  const SeedPlan seeds{42, "power/ensemble-alt"};
  const auto a = tester_power(Dataset::EnsembleAlt, Tester::PairKurtosis, cfg, 2000, 12, seeds, {}, 1);
  const auto b = tester_power(Dataset::EnsembleAlt, Tester::PairKurtosis, cfg, 2000, 12, seeds, {}, 5);
  REQUIRE(a.per_trial.size() == b.per_trial.size());
  for (std::size_t i = 0; i < a.per_trial.size(); ++i) {
    CHECK(a.per_trial[i].seed == b.per_trial[i].seed);
    CHECK(a.per_trial[i].verdict.statistic == b.per_trial[i].verdict.statistic);
  }
  CHECK(a.rejects == b.rejects);
  CHECK(code_of([&] { tester_power(Dataset::Null, Tester::Frob, cfg, 100, 0, seeds); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { tester_power(Dataset::Null, Tester::PairKurtosis, cfg, 7, 1, seeds); }) ==
        ErrorCode::InvalidArgument);
}
