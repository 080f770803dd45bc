#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace robcov {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense real symmetric d x d matrix. Symmetry is bit-exact after construction:
// inputs whose asymmetry is below kSymmetryTolerance (relative to the largest
// entry, floored at 1) are replaced by (M + M^T)/2, anything else is rejected.
class SymmetricMatrix {
 public:
  static constexpr double kSymmetryTolerance = 1e-12;

  explicit SymmetricMatrix(const Matrix& m);
  SymmetricMatrix(int dim, std::span<const double> row_major);

  static SymmetricMatrix identity(int dim);
  static SymmetricMatrix zero(int dim);
  static SymmetricMatrix diagonal(std::span<const double> diag);

  int dim() const noexcept { return static_cast<int>(m_.rows()); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Matrix& dense() const noexcept { return m_; }
  std::vector<double> row_major() const;

  // alpha * I + beta * this
  SymmetricMatrix shifted(double alpha, double beta) const;

 private:
  Matrix m_;
};

// Eigenvalues sorted in non-increasing order.
struct Spectrum {
  std::vector<double> eigenvalues;
};

double frobenius_norm(const SymmetricMatrix& m);

// Largest |eigenvalue| by Lanczos with full reorthogonalization, started from
// a vector derived from the matrix contents. Stops when the Ritz residual of
// the top pair falls below tol * |theta|; throws NoConvergence after max_iter
// steps (default 10 * d + 100 when max_iter <= 0). At d steps the value is exact.
double spectral_norm(const SymmetricMatrix& m, double tol, int max_iter = 0);

// tr((AB)^m). m == 1 uses the entrywise sum.
double trace_product_pow(const SymmetricMatrix& a, const SymmetricMatrix& b, int m);

// log det via Cholesky; throws NotPositiveDefinite on a non-positive pivot.
double logdet_pd(const SymmetricMatrix& m);

bool is_pd(const SymmetricMatrix& m);

// ||M||_2 < bound, decided exactly by two Cholesky attempts on bound*I -+ M.
bool spectral_norm_below(const SymmetricMatrix& m, double bound);

// Smallest eigenvalue. Only used to enrich error messages.
double min_eigenvalue(const SymmetricMatrix& m);

// Cyclic Jacobi rotations. A slow reference for small d (at most 64), kept
// independent of the factorizations above so it can serve as a check on them.
Spectrum reference_spectrum(const SymmetricMatrix& m);

}  // namespace robcov
