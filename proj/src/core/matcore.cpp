#include "robcov/matcore.hpp"

#include "robcov/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace robcov {

namespace {

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

void require_same_dim(const SymmetricMatrix& a, const SymmetricMatrix& b, const char* op) {
  if (a.dim() != b.dim()) {
    fail(ErrorCode::DimensionMismatch, std::string(op) + ": dimension mismatch (" +
                                           std::to_string(a.dim()) + " vs " +
                                           std::to_string(b.dim()) + ")");
  }
}

}  // namespace

SymmetricMatrix::SymmetricMatrix(const Matrix& m) {
  if (m.rows() < 1 || m.rows() != m.cols()) {
    fail(ErrorCode::InvalidArgument, "SymmetricMatrix: expected a non-empty square matrix");
  }
  if (!m.allFinite()) fail(ErrorCode::InvalidArgument, "SymmetricMatrix: non-finite entry");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * std::max(1.0, max_abs(m))) {
    fail(ErrorCode::InvalidArgument,
         "SymmetricMatrix: input is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  }
  m_ = (m + m.transpose()) * 0.5;
}

SymmetricMatrix::SymmetricMatrix(int dim, std::span<const double> row_major) {
  if (dim < 1) fail(ErrorCode::InvalidArgument, "SymmetricMatrix: dim must be >= 1");
  if (row_major.size() != static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim)) {
    fail(ErrorCode::DimensionMismatch, "SymmetricMatrix: expected d*d entries");
  }
  Matrix m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = row_major[static_cast<std::size_t>(i) * dim + j];
  *this = SymmetricMatrix(m);
}

SymmetricMatrix SymmetricMatrix::identity(int dim) {
  require(dim >= 1, "SymmetricMatrix: dim must be >= 1");
  return SymmetricMatrix(Matrix::Identity(dim, dim));
}

SymmetricMatrix SymmetricMatrix::zero(int dim) {
  require(dim >= 1, "SymmetricMatrix: dim must be >= 1");
  return SymmetricMatrix(Matrix::Zero(dim, dim));
}

SymmetricMatrix SymmetricMatrix::diagonal(std::span<const double> diag) {
  require(!diag.empty(), "SymmetricMatrix: empty diagonal");
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(diag.size()), static_cast<Eigen::Index>(diag.size()));
  for (std::size_t i = 0; i < diag.size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = diag[i];
  return SymmetricMatrix(m);
}

std::vector<double> SymmetricMatrix::row_major() const {
  const int d = dim();
  std::vector<double> out(static_cast<std::size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = m_(i, j);
  return out;
}

SymmetricMatrix SymmetricMatrix::shifted(double alpha, double beta) const {
  Matrix m = beta * m_;
  m.diagonal().array() += alpha;
  return SymmetricMatrix(m);
}

double frobenius_norm(const SymmetricMatrix& m) { return m.dense().norm(); }

double spectral_norm(const SymmetricMatrix& m, double tol, int max_iter) {
  require(tol > 0.0, "spectral_norm: tol must be positive");
  const int d = m.dim();
  const Matrix& a = m.dense();
  if (max_iter <= 0) max_iter = 10 * d + 100;
  if (max_abs(a) == 0.0) return 0.0;

  Vector v(d);
  for (int i = 0; i < d; ++i) {
    v(i) = a.row(i).cwiseAbs().sum() * (1.0 + 0.25 * std::sin(static_cast<double>(i) + 1.0));
  }
  v.normalize();

  // Lanczos with full reorthogonalization from v. Power iteration on M^2
  // cannot separate eigenvalues +l and -l, which coincide for M^2 and are
  // common here; the Ritz values of the Krylov space can. If the space becomes
  // invariant the next unit vector not yet spanned continues it, so at d steps
  // the Ritz values are the spectrum itself.
  const int cap = std::min(d, max_iter);
  Matrix q(d, cap);
  Vector alpha(cap), beta(cap);
  Vector w(d);
  q.col(0) = v;
  int next_unit = 0;
  // After a breakdown the early Ritz values describe only part of the space;
  // run to the full dimension instead of stopping on them.
  bool broke = false;
  for (int m = 0; m < cap; ++m) {
    w.noalias() = a * q.col(m);
    alpha(m) = q.col(m).dot(w);
    for (int pass = 0; pass < 2; ++pass) w -= q.leftCols(m + 1) * (q.leftCols(m + 1).transpose() * w);
    beta(m) = w.norm();
    if (beta(m) <= 1e-13 * alpha.head(m + 1).cwiseAbs().maxCoeff() + 1e-300) beta(m) = 0.0;

    if (beta(m) == 0.0) broke = true;
    const bool full = m + 1 == d;
    if (full || (!broke && (m + 1 == cap || m < 8 || m % 4 == 0))) {
      Eigen::SelfAdjointEigenSolver<Matrix> es;
      es.computeFromTridiagonal(alpha.head(m + 1), beta.head(m), Eigen::ComputeEigenvectors);
      Eigen::Index top = 0;
      es.eigenvalues().cwiseAbs().maxCoeff(&top);
      const double theta = es.eigenvalues()(top);
      if (full) return std::abs(theta);
      const double residual = beta(m) * std::abs(es.eigenvectors()(m, top));
      if (theta != 0.0 && residual <= tol * std::abs(theta)) return std::abs(theta);
    }
    if (m + 1 == cap) break;
    if (beta(m) == 0.0) {
      // Invariant subspace: continue from a unit vector outside it.
      bool found = false;
      while (!found && next_unit < d) {
        w = Vector::Unit(d, next_unit++);
        for (int pass = 0; pass < 2; ++pass) w -= q.leftCols(m + 1) * (q.leftCols(m + 1).transpose() * w);
        found = w.norm() > 1e-8;
      }
      if (!found) break;
      q.col(m + 1) = w.normalized();
    } else {
      q.col(m + 1) = w / beta(m);
    }
  }
  fail(ErrorCode::NoConvergence, "spectral_norm: Lanczos did not converge within " +
                                     std::to_string(max_iter) + " steps (tol " +
                                     std::to_string(tol) + ")");
}

double trace_product_pow(const SymmetricMatrix& a, const SymmetricMatrix& b, int m) {
  require_same_dim(a, b, "trace_product_pow");
  require(m >= 1, "trace_product_pow: m must be >= 1");
  if (m == 1) return a.dense().cwiseProduct(b.dense()).sum();
  const Matrix p = a.dense() * b.dense();
  if (m == 2) return p.cwiseProduct(p.transpose()).sum();
  Matrix q = p;
  for (int k = 1; k < m; ++k) q = q * p;
  return q.trace();
}

double logdet_pd(const SymmetricMatrix& m) {
  const Eigen::LLT<Matrix> llt(m.dense());
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::NotPositiveDefinite,
         "logdet_pd: matrix lost positive definiteness (non-positive Cholesky pivot)");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

bool is_pd(const SymmetricMatrix& m) {
  const Eigen::LLT<Matrix> llt(m.dense());
  return llt.info() == Eigen::Success;
}

bool spectral_norm_below(const SymmetricMatrix& m, double bound) {
  if (!(bound > 0.0)) return false;
  Matrix upper = -m.dense();
  upper.diagonal().array() += bound;
  if (Eigen::LLT<Matrix>(upper).info() != Eigen::Success) return false;
  Matrix lower = m.dense();
  lower.diagonal().array() += bound;
  return Eigen::LLT<Matrix>(lower).info() == Eigen::Success;
}

double min_eigenvalue(const SymmetricMatrix& m) {
  const Eigen::SelfAdjointEigenSolver<Matrix> es(m.dense(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

Spectrum reference_spectrum(const SymmetricMatrix& m) {
  const int d = m.dim();
  require(d <= 64, "reference_spectrum: only intended for d <= 64");
  std::vector<double> a = m.row_major();
  auto at = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * d + j]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, total = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        total += at(i, j) * at(i, j);
        if (i != j) off += at(i, j) * at(i, j);
      }
    if (off <= 1e-30 * total || off == 0.0) break;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  Spectrum out;
  for (int i = 0; i < d; ++i) out.eigenvalues.push_back(at(i, i));
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), std::greater<>());
  return out;
}

}  // namespace robcov
