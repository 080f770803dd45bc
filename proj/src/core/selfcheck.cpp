#include "robcov/harness.hpp"

#include "robcov/error.hpp"
#include "robcov/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

namespace robcov {

namespace {

// Adaptive Simpson on [a, b].
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

// Fixed panels first, so a symmetric integrand that vanishes at the centre
// and both ends cannot fool the first refinement test.
double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  constexpr int kPanels = 64;
  const double h = (b - a) / kPanels;
  double total = 0.0;
  for (int p = 0; p < kPanels; ++p) {
    const double lo = a + p * h, hi = lo + h;
    const double fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
    const double whole = h / 6.0 * (fa + 4.0 * fm + fb);
    total += simpson(f, lo, hi, fa, fm, fb, whole, tol / kPanels, 50);
  }
  return total;
}

double normal_pdf(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// Determinant by cofactor expansion along the first row.
double cofactor_det(const std::vector<double>& m, int d) {
  if (d == 1) return m[0];
  double det = 0.0;
  for (int c = 0; c < d; ++c) {
    std::vector<double> minor;
    for (int i = 1; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (j != c) minor.push_back(m[static_cast<std::size_t>(i) * d + j]);
    det += (c % 2 ? -1.0 : 1.0) * m[static_cast<std::size_t>(c)] * cofactor_det(minor, d - 1);
  }
  return det;
}

SymmetricMatrix random_symmetric(Stream& rng, int d, double scale) {
  Matrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) m(i, j) = m(j, i) = scale * rng.normal();
  return SymmetricMatrix(m);
}

// I + E with ||E||_2 < 0.9, so the covariance is PD and below 2I.
SymmetricMatrix random_valid_covariance(Stream& rng, int d) {
  const SymmetricMatrix e = random_symmetric(rng, d, 1.0);
  double norm = 1.05 * spectral_norm(e, 1e-6, 1000000);
  if (!spectral_norm_below(e, norm)) norm = frobenius_norm(e);
  return e.shifted(1.0, 0.9 * rng.uniform() / norm);
}

}  // namespace

RunResult run_selfcheck(const RunSettings& s) {
  RunResult run;
  run.manifest.subcommand = "selfcheck";
  run.manifest.master_seed = s.master_seed;
  const SeedPlan plan{s.master_seed, "selfcheck"};
  int index = 0;

  auto report = [&](const char* name, double error, double tol) {
    const bool pass = std::isfinite(error) && error <= tol;
    TrialRecord r;
    r.experiment = std::string("selfcheck/") + name;
    r.trial_index = index;
    r.seed = plan.seed(static_cast<std::uint64_t>(index));
    r.metrics = {{"error", std::isfinite(error) ? error : 1e300}, {"tolerance", tol}, {"pass", pass ? 1.0 : 0.0}};
    run.records.push_back(std::move(r));
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s %-36s error %.3e (tolerance %.1e)", pass ? "PASS" : "FAIL", name, error, tol);
    run.summary.push_back(buf);
    if (!pass) ++run.failures;
    ++index;
  };
  auto guarded = [&](const char* name, double tol, const std::function<double(Stream&)>& body) {
    Stream rng = plan.stream(static_cast<std::uint64_t>(index));
    double err;
    try {
      err = body(rng);
    } catch (const std::exception& e) {
      run.summary.push_back(std::string("     ") + name + ": " + e.what());
      err = INFINITY;
    }
    report(name, err, tol);
  };

  guarded("spectral_norm_vs_jacobi", 1e-8, [](Stream& rng) {
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const SymmetricMatrix m = random_symmetric(rng, 6, 1.0);
      const Spectrum sp = reference_spectrum(m);
      const double ref = std::max(std::abs(sp.eigenvalues.front()), std::abs(sp.eigenvalues.back()));
      worst = std::max(worst, std::abs(spectral_norm(m, 1e-10, 1000000) - ref) / ref);
    }
    return worst;
  });

  guarded("frobenius_vs_spectrum", 1e-9, [](Stream& rng) {
    double worst = 0.0;
    for (int d = 1; d <= 8; ++d) {
      const SymmetricMatrix m = random_symmetric(rng, d, 1.0);
      double sum = 0.0;
      for (double l : reference_spectrum(m).eigenvalues) sum += l * l;
      const double f = frobenius_norm(m);
      worst = std::max(worst, std::abs(f * f - sum) / std::max(1.0, sum));
    }
    return worst;
  });

  guarded("logdet_vs_cofactor", 1e-9, [](Stream& rng) {
    double worst = 0.0;
    for (int d = 1; d <= 5; ++d) {
      const SymmetricMatrix g = random_symmetric(rng, d, 1.0);
      const Matrix pd = g.dense() * g.dense() + Matrix::Identity(d, d);
      const SymmetricMatrix m(pd);
      const double ref = cofactor_det(m.row_major(), d);
      worst = std::max(worst, std::abs(std::exp(logdet_pd(m)) - ref) / ref);
    }
    return worst;
  });

  guarded("is_pd_vs_spectrum", 0.0, [](Stream& rng) {
    int disagreements = 0;
    for (int t = 0; t < 1000; ++t) {
      const int d = 1 + static_cast<int>(rng.uniform() * 8);
      const SymmetricMatrix g = random_symmetric(rng, d, 1.0);
      const SymmetricMatrix m = g.shifted(2.0 * rng.uniform() * std::sqrt(static_cast<double>(d)), 1.0);
      const double lo = reference_spectrum(m).eigenvalues.back();
      if (std::abs(lo) < 1e-9) continue;
      disagreements += is_pd(m) != (lo > 0.0) ? 1 : 0;
    }
    return static_cast<double>(disagreements);
  });

  guarded("trace_product_vs_naive", 1e-12, [](Stream& rng) {
    const int d = 7;
    const SymmetricMatrix a = random_symmetric(rng, d, 0.5), b = random_symmetric(rng, d, 0.5);
    const auto ar = a.row_major(), br = b.row_major();
    std::vector<double> ab(d * d, 0.0);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) ab[i * d + j] += ar[i * d + k] * br[k * d + j];
    std::vector<double> pw = ab;
    double worst = 0.0;
    for (int m = 1; m <= 4; ++m) {
      double tr = 0.0;
      for (int i = 0; i < d; ++i) tr += pw[i * d + i];
      worst = std::max(worst, std::abs(trace_product_pow(a, b, m) - tr) / std::max(1.0, std::abs(tr)));
      std::vector<double> next(d * d, 0.0);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k) next[i * d + j] += pw[i * d + k] * ab[k * d + j];
      pw = next;
    }
    return worst;
  });

  guarded("chi2_exact_vs_quadrature_1d", 1e-6, [](Stream& rng) {
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const double v1 = 0.5 + 1.2 * rng.uniform(), v2 = 0.5 + 1.2 * rng.uniform();
      const double rate = 1.0 / v1 + 1.0 / v2 - 1.0;
      const double half = std::sqrt(2.0 * 80.0 / rate);
      const double q = integrate([&](double x) { return normal_pdf(x, v1) * normal_pdf(x, v2) / normal_pdf(x, 1.0); },
                                 -half, half, 1e-13);
      const double exact =
          chi2_inner_exact(SymmetricMatrix(1, std::vector<double>{v1}), SymmetricMatrix(1, std::vector<double>{v2}))
              .value;
      worst = std::max(worst, std::abs(exact - q) / q);
    }
    return worst;
  });

  guarded("chi2_identity_argument", 1e-10, [](Stream& rng) {
    double worst = 0.0;
    for (int d : {2, 16, 128}) {
      for (int t = 0; t < 10; ++t) {
        const SymmetricMatrix sigma = random_valid_covariance(rng, d);
        worst = std::max(worst, std::abs(chi2_inner_exact(SymmetricMatrix::identity(d), sigma).value - 1.0));
      }
    }
    return worst;
  });

  guarded("chi2_symmetry", 1e-12, [](Stream& rng) {
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const int d = 1 + t % 8;
      const SymmetricMatrix s1 = random_valid_covariance(rng, d), s2 = random_valid_covariance(rng, d);
      const double x = chi2_inner_exact(s1, s2).value, y = chi2_inner_exact(s2, s1).value;
      worst = std::max(worst, std::abs(x - y) / x);
    }
    return worst;
  });

  guarded("covariance_matching", 1e-12, [](Stream& rng) {
    const EnsembleConfig cfg = EnsembleConfig::with_gap(32, 0.25, 0.5);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const ContaminatedModel m(sample_perturbation(cfg, rng).matrix, cfg.epsilon);
      worst = std::max(worst, (m.mixture_covariance() - Matrix::Identity(32, 32)).cwiseAbs().maxCoeff());
    }
    return worst;
  });

  guarded("first_order_cancellation", 1e-14, [](Stream&) {
    double worst = 0.0;
    for (double eps : {0.05, 0.1, 1.0 / 3.0, 0.49}) worst = std::max(worst, std::abs(first_order_cancellation(eps)));
    return worst;
  });

  guarded("det_series_identity", 1e-10, [](Stream& rng) {
    const EnsembleConfig cfg = EnsembleConfig::with_gap(16, 0.4, 0.5);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const SymmetricMatrix a = sample_perturbation(cfg, rng).matrix;
      const SymmetricMatrix b = sample_perturbation(cfg, rng).matrix;
      const DetSeries ds = det_series_check(a, b, 12);
      worst = std::max(worst, std::abs(ds.lhs - ds.rhs));
    }
    return worst;
  });

  guarded("mixture_fourth_moment_vs_quadrature", 1e-9, [](Stream& rng) {
    const EnsembleConfig cfg = EnsembleConfig::with_gap(32, 0.25, 0.5);
    const ContaminatedModel m(sample_perturbation(cfg, rng).matrix, cfg.epsilon);
    double worst = 0.0;
    for (auto [i, j] : {std::pair{0, 1}, std::pair{3, 17}, std::pair{30, 31}}) {
      const double a = m.perturbation()(i, j);
      const double vin = 1.0 + a, vout = 1.0 - m.outlier_scale() * a;
      const double q = integrate(
          [&](double y) {
            return y * y * y * y * ((1.0 - m.epsilon()) * normal_pdf(y, vin) + m.epsilon() * normal_pdf(y, vout));
          },
          -40.0, 40.0, 1e-13);
      worst = std::max(worst, std::abs(mixture_pair_fourth_moment(m, i, j) - q) / q);
    }
    return worst;
  });

  guarded("tv_value_bounds_exact_tv_1d", 0.0, [](Stream&) {
    // d_TV(N(0,1), N(0,1.5)) by quadrature; the value must not fall below it.
    const double tv =
        0.5 * integrate([](double x) { return std::abs(normal_pdf(x, 1.0) - normal_pdf(x, 1.5)); }, -40.0, 40.0, 1e-13);
    const SymmetricMatrix s(1, std::vector<double>{1.5});
    const double bound = tv_lower_bound(chi2_inner_exact(s, s).value);
    return std::max(0.0, tv - bound);
  });

  guarded("derive_seed_collisions", 0.0, [](Stream&) {
    std::vector<std::uint64_t> seeds;
    const int n = 100000;
    seeds.reserve(2 * n);
    for (const char* tag : {"alpha", "beta"})
      for (int i = 0; i < n; ++i) seeds.push_back(derive_seed(0x5eed, tag, static_cast<std::uint64_t>(i)));
    std::sort(seeds.begin(), seeds.end());
    return static_cast<double>(seeds.end() - std::unique(seeds.begin(), seeds.end()));
  });

  char buf[64];
  std::snprintf(buf, sizeof buf, "%d of %d checks passed", index - run.failures, index);
  run.summary.push_back(buf);
  return run;
}

}  // namespace robcov
