#include "robcov/gauss.hpp"

#include "robcov/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace robcov {

namespace {

constexpr double kTvTolerance = 1e-9;
constexpr double kNormTol = 1e-3;
constexpr int kNormIterations = 100000;

Matrix symmetrized(const Matrix& m) { return (m + m.transpose()) * 0.5; }

}  // namespace

ZeroMeanGaussian::ZeroMeanGaussian(const SymmetricMatrix& covariance) {
  const Eigen::LLT<Matrix> llt(covariance.dense());
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::NotPositiveDefinite,
         "ZeroMeanGaussian: covariance is not positive definite (min eigenvalue " +
             std::to_string(min_eigenvalue(covariance)) + ")");
  }
  const int d = covariance.dim();
  Matrix factor = llt.matrixL();
  const Matrix inv_factor = factor.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  Matrix precision = symmetrized(inv_factor.transpose() * inv_factor);

  Matrix gap = -covariance.dense();
  gap.diagonal().array() += 2.0;
  const bool below_two = Eigen::LLT<Matrix>(gap).info() == Eigen::Success;

  const double logdet = 2.0 * factor.diagonal().array().log().sum();
  state_ = std::make_shared<const State>(
      State{covariance, std::move(factor), std::move(precision), logdet, below_two});
}

SampleMatrix ZeroMeanGaussian::sample(Stream& rng, std::int64_t n) const {
  require(n >= 1, "sample: n must be >= 1");
  const int d = dim();
  SampleMatrix z(n, d);
  for (std::int64_t r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) z(r, c) = rng.normal();
  SampleMatrix x = z * factor().transpose();
  return x;
}

double ZeroMeanGaussian::log_pdf(std::span<const double> x) const {
  const int d = dim();
  if (x.size() != static_cast<std::size_t>(d)) {
    fail(ErrorCode::DimensionMismatch, "log_pdf: point has dimension " +
                                           std::to_string(x.size()) + ", law has " +
                                           std::to_string(d));
  }
  const Eigen::Map<const Vector> xv(x.data(), d);
  const Vector y = factor().triangularView<Eigen::Lower>().solve(xv);
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * logdet_cov() - 0.5 * y.squaredNorm();
}

Chi2Value chi2_inner_exact(const ZeroMeanGaussian& g1, const ZeroMeanGaussian& g2) {
  if (g1.dim() != g2.dim()) fail(ErrorCode::DimensionMismatch, "chi2_inner_exact: dimension mismatch");
  if (!g1.below_twice_identity() || !g2.below_twice_identity()) {
    fail(ErrorCode::DivergentIntegral,
         "chi2_inner_exact: covariances must satisfy Sigma < 2I, otherwise the integral diverges");
  }
  Matrix interior = g1.precision() + g2.precision();
  interior.diagonal().array() -= 1.0;
  const Eigen::LLT<Matrix> llt(interior);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::Numeric,
         "chi2_inner_exact: Sigma1^-1 + Sigma2^-1 - I lost positive definiteness to rounding");
  }
  const double interior_logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double log_value = -0.5 * (g1.logdet_cov() + g2.logdet_cov() + interior_logdet);
  return {std::exp(log_value), log_value};
}

Chi2Value chi2_inner_exact(const SymmetricMatrix& s1, const SymmetricMatrix& s2) {
  if (s1.dim() != s2.dim()) fail(ErrorCode::DimensionMismatch, "chi2_inner_exact: dimension mismatch");
  return chi2_inner_exact(ZeroMeanGaussian(s1), ZeroMeanGaussian(s2));
}

TaylorChi2 chi2_inner_taylor(const SymmetricMatrix& a, const SymmetricMatrix& b) {
  if (a.dim() != b.dim()) fail(ErrorCode::DimensionMismatch, "chi2_inner_taylor: dimension mismatch");
  if (!spectral_norm_below(a, 0.5) || !spectral_norm_below(b, 0.5)) {
    fail(ErrorCode::InvalidArgument, "chi2_inner_taylor: perturbations need spectral norm <= 1/2");
  }
  const double t1 = trace_product_pow(a, b, 1);
  const double t2 = trace_product_pow(a, b, 2);
  const double d = a.dim();
  return {1.0 + 0.5 * t1, t1 * t1 + t2 + 1.0 / (d * d)};
}

namespace {

// An upper bound on ||M||_2 within about 1% of the true value. The power
// iteration estimate is a lower bound, so it is raised until a Cholesky test
// certifies it.
double certified_norm_bound(const SymmetricMatrix& m) {
  double bound = spectral_norm(m, kNormTol, kNormIterations) * (1.0 + 1e-6) + 1e-300;
  while (!spectral_norm_below(m, bound)) bound *= 1.01;
  return bound;
}

}  // namespace

DetSeries det_series_check(const SymmetricMatrix& a, const SymmetricMatrix& b, int terms) {
  if (a.dim() != b.dim()) fail(ErrorCode::DimensionMismatch, "det_series_check: dimension mismatch");
  require(terms >= 1, "det_series_check: need at least one series term");
  const double na = certified_norm_bound(a);
  const double nb = certified_norm_bound(b);
  if (na * nb >= 1.0) {
    fail(ErrorCode::DivergentIntegral,
         "det_series_check: cannot certify ||A|| ||B|| < 1, the log series may diverge");
  }
  const Matrix p = a.dense() * b.dense();
  Matrix i_minus = -p;
  i_minus.diagonal().array() += 1.0;
  const double lhs = Eigen::PartialPivLU<Matrix>(i_minus).determinant();

  double series = trace_product_pow(a, b, 1);
  Matrix power = p;
  for (int m = 2; m <= terms; ++m) {
    power = power * p;
    series += power.trace() / m;
  }
  return {lhs, std::exp(-series)};
}

double tv_lower_bound(double chi2_self) {
  if (!std::isfinite(chi2_self) || chi2_self < 1.0 - kTvTolerance) {
    fail(ErrorCode::InvalidArgument,
         "tv_lower_bound: self inner product must be >= 1, got " + std::to_string(chi2_self));
  }
  return 0.5 * std::sqrt(std::max(0.0, chi2_self - 1.0));
}

}  // namespace robcov
