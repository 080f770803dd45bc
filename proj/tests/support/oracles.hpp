#pragma once

// Independent reference computations for the tests. Everything here is built
// from Eigen's dense solvers or GSL quadrature, never from the library's own
// numerics.

#include "robcov/matcore.hpp"
#include "robcov/stream.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace oracle {

using robcov::Matrix;
using robcov::Vector;

inline Matrix random_symmetric(robcov::Stream& rng, int d, double scale) {
  Matrix m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) m(i, j) = m(j, i) = scale * rng.normal();
  return m;
}

inline Matrix random_orthogonal(robcov::Stream& rng, int d) {
  Matrix g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(d, d);
}

// Q diag(lambda) Q^T with eigenvalues uniform in [lo, hi].
inline Matrix random_covariance(robcov::Stream& rng, int d, double lo, double hi) {
  const Matrix q = random_orthogonal(rng, d);
  Vector lam(d);
  for (int i = 0; i < d; ++i) lam(i) = lo + (hi - lo) * rng.uniform();
  Matrix s = q * lam.asDiagonal() * q.transpose();
  return (s + s.transpose()) * 0.5;
}

inline Vector eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double max_abs_eigenvalue(const Matrix& m) { return eigenvalues(m).cwiseAbs().maxCoeff(); }

inline double cofactor_det(const Matrix& m) {
  const auto n = m.rows();
  if (n == 1) return m(0, 0);
  double det = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Matrix minor(n - 1, n - 1);
    for (Eigen::Index r = 1; r < n; ++r)
      for (Eigen::Index c = 0, cc = 0; c < n; ++c)
        if (c != j) minor(r - 1, cc++) = m(r, c);
    det += ((j % 2 == 0) ? 1.0 : -1.0) * m(0, j) * cofactor_det(minor);
  }
  return det;
}

inline double normal_pdf(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

inline double gaussian_pdf(const Vector& x, const Matrix& cov) {
  const Eigen::LLT<Matrix> llt(cov);
  const Vector y = llt.matrixL().solve(x);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return std::exp(-0.5 * y.squaredNorm() - 0.5 * logdet -
                  0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

class Quadrature {
 public:
  explicit Quadrature(std::size_t limit = 2000) : limit_(limit), ws_(gsl_integration_workspace_alloc(limit)) {
    gsl_set_error_handler_off();
  }
  ~Quadrature() { gsl_integration_workspace_free(ws_); }
  Quadrature(const Quadrature&) = delete;
  Quadrature& operator=(const Quadrature&) = delete;

  // Integral over the real line.
  double real_line(const std::function<double(double)>& f, double rel = 1e-11) {
    gsl_function g{&trampoline, const_cast<std::function<double(double)>*>(&f)};
    double result = 0.0, err = 0.0;
    const int st = gsl_integration_qagi(&g, 0.0, rel, limit_, ws_, &result, &err);
    if (st != GSL_SUCCESS && st != GSL_EROUND) throw std::runtime_error(gsl_strerror(st));
    return result;
  }

  // Integral over [a, b].
  double interval(const std::function<double(double)>& f, double a, double b, double rel = 1e-11) {
    gsl_function g{&trampoline, const_cast<std::function<double(double)>*>(&f)};
    double result = 0.0, err = 0.0;
    const int st = gsl_integration_qags(&g, a, b, 0.0, rel, limit_, ws_, &result, &err);
    if (st != GSL_SUCCESS && st != GSL_EROUND) throw std::runtime_error(gsl_strerror(st));
    return result;
  }

 private:
  static double trampoline(double x, void* p) { return (*static_cast<std::function<double(double)>*>(p))(x); }
  std::size_t limit_;
  gsl_integration_workspace* ws_;
};

// int p1 p2 / p over R for 1-D variances s1, s2 against N(0, 1).
inline double log_normal_pdf(double x, double var) {
  return -0.5 * x * x / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

inline double chi2_quadrature_1d(double s1, double s2) {
  Quadrature q;
  return q.real_line([&](double x) {
    return std::exp(log_normal_pdf(x, s1) + log_normal_pdf(x, s2) - log_normal_pdf(x, 1.0));
  });
}

// Nested 2-D quadrature of int p1 p2 / p over R^2.
inline double chi2_quadrature_2d(const Matrix& s1, const Matrix& s2) {
  const Eigen::Matrix2d p1 = s1.inverse(), p2 = s2.inverse();
  const Eigen::Matrix2d q = p1 + p2 - Eigen::Matrix2d::Identity();
  const double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(s1.determinant() * s2.determinant()));
  Quadrature outer, inner;
  return norm * outer.real_line([&](double x) {
    return inner.real_line([&](double y) {
      return std::exp(-0.5 * (q(0, 0) * x * x + 2.0 * q(0, 1) * x * y + q(1, 1) * y * y));
    });
  }, 1e-10);
}

// Exact d_TV between N(0, v1) and N(0, v2) in one dimension.
inline double tv_1d(double v1, double v2) {
  Quadrature q;
  return 0.5 * q.real_line([&](double x) { return std::abs(normal_pdf(x, v1) - normal_pdf(x, v2)); });
}

// Eigenvalues of the (generally non-symmetric) product A B.
inline Eigen::VectorXcd product_eigenvalues(const Matrix& a, const Matrix& b) {
  Eigen::EigenSolver<Matrix> es(a * b, false);
  return es.eigenvalues();
}

}  // namespace oracle
