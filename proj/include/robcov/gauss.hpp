#pragma once

#include "robcov/matcore.hpp"
#include "robcov/stream.hpp"

#include <cstdint>
#include <memory>
#include <span>

namespace robcov {

// n x d sample block, one draw per row.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// N(0, covariance). Immutable; copies share the cached factorization.
class ZeroMeanGaussian {
 public:
  explicit ZeroMeanGaussian(const SymmetricMatrix& covariance);

  int dim() const noexcept { return state_->covariance.dim(); }
  const SymmetricMatrix& covariance() const noexcept { return state_->covariance; }
  // Lower-triangular L with L L^T = covariance.
  const Matrix& factor() const noexcept { return state_->factor; }
  double logdet_cov() const noexcept { return state_->logdet; }
  // covariance^{-1}, assembled from two triangular solves against the factor.
  const Matrix& precision() const noexcept { return state_->precision; }
  // covariance < 2I in the Loewner order, which keeps chi^2 integrals finite.
  bool below_twice_identity() const noexcept { return state_->below_twice_identity; }

  // Rows are factor * z with z ~ N(0, I). Consumes d normals per row, in row order.
  SampleMatrix sample(Stream& rng, std::int64_t n) const;
  double log_pdf(std::span<const double> x) const;

 private:
  struct State {
    SymmetricMatrix covariance;
    Matrix factor;
    Matrix precision;
    double logdet = 0.0;
    bool below_twice_identity = false;
  };
  std::shared_ptr<const State> state_;
};

struct Chi2Value {
  double value;
  double log_value;
};

// chi^2_{N(0,I)}(N(0,s1), N(0,s2)) = det(s1 + s2 - s1 s2)^{-1/2}, evaluated as
// exp(-[logdet s1 + logdet s2 + logdet(s1^{-1} + s2^{-1} - I)] / 2).
Chi2Value chi2_inner_exact(const SymmetricMatrix& s1, const SymmetricMatrix& s2);
Chi2Value chi2_inner_exact(const ZeroMeanGaussian& g1, const ZeroMeanGaussian& g2);

struct TaylorChi2 {
  double first_order;       // 1 + tr(AB)/2
  double correction_bound;  // tr(AB)^2 + tr((AB)^2) + 1/d^2
};

// Second-order expansion for covariances I + A and I + B; requires ||A||, ||B|| <= 1/2.
TaylorChi2 chi2_inner_taylor(const SymmetricMatrix& a, const SymmetricMatrix& b);

struct DetSeries {
  double lhs;  // det(I - AB) by LU
  double rhs;  // exp(-sum_{m<=M} tr((AB)^m) / m)
};

DetSeries det_series_check(const SymmetricMatrix& a, const SymmetricMatrix& b, int terms);

// (1/2) sqrt(chi2_self - 1) for chi2_self = chi^2_A(B, B). By Cauchy-Schwarz,
// chi^2_A(B, B) - 1 >= 4 d_TV(A, B)^2, so the value bounds d_TV(A, B) from
// above: a small value certifies that A and B are hard to tell apart.
double tv_lower_bound(double chi2_self);

}  // namespace robcov
