#pragma once

#include "robcov/gauss.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace robcov {

// Parameters of the random-perturbation ensemble. Off-diagonal entries of A
// have standard deviation entry_scale / dim, so ||A||_F concentrates near
// entry_scale and ||A||_2 near 2 * entry_scale / sqrt(dim).
struct EnsembleConfig {
  int dim = 0;
  double epsilon = 0.1;      // contamination weight
  double frob_target = 0.5;  // soundness gap: accepted A have ||A||_F > frob_target
  double entry_scale = 0.6;
  double spec_cap = 3.0;     // reject when ||A||_2 > spec_cap / sqrt(dim)
  double frob_lo = 0.5;      // reject when ||A||_F is outside [frob_lo, frob_hi]
  double frob_hi = 1.0;
  int max_rejects = 200;

  // epsilon = 0.1, gap 0.5, c = 0.6, window [0.5, 1], cap 3.
  static EnsembleConfig defaults(int dim);
  // Same shape for another gap C: c = 1.2 C and window [C, 2C].
  static EnsembleConfig with_gap(int dim, double epsilon, double frob_target);

  // Throws InvalidArgument on out-of-range fields.
  void validate() const;
  // (1 - epsilon) / epsilon, the outlier covariance slope.
  double outlier_scale() const { return (1.0 - epsilon) / epsilon; }
  // spec_cap / sqrt(dim) * outlier_scale < 1: every draw passing the spectral
  // cap would yield PD components. Desk-scale dims usually fail this, and the
  // sampler then relies on its per-instance PD checks.
  bool asymptotically_valid() const;
};

bool operator==(const EnsembleConfig& a, const EnsembleConfig& b);

std::string to_json(const EnsembleConfig& cfg);
EnsembleConfig config_from_json(const std::string& text);

struct PerturbationDraw {
  SymmetricMatrix matrix;
  int rejects = 0;
  double frobenius = 0.0;
  double spectral = 0.0;
};

// One symmetric zero-diagonal draw with N(0, (c/d)^2) off-diagonal entries,
// no conditioning. Consumes d(d-1)/2 normals, upper triangle in row order.
SymmetricMatrix draw_unconditioned(const EnsembleConfig& cfg, Stream& rng);

// Rejection-samples draw_unconditioned until the Frobenius window, the
// spectral cap and positive definiteness of both mixture components
// (I +- outlier_scale * A, which also gives Sigma < 2I) all hold.
PerturbationDraw sample_perturbation(const EnsembleConfig& cfg, Stream& rng);

enum class GapCheck { Enforce, Skip };

// (1 - eps)(I + A) + eps (I - ((1 - eps)/eps) A) in floating point. Needs no
// positive definiteness, so it also covers perturbations no model accepts.
Matrix mixture_covariance(const SymmetricMatrix& a, double epsilon);

// (1 - eps) N(0, I + A) + eps N(0, I - ((1 - eps)/eps) A).
class ContaminatedModel {
 public:
  ContaminatedModel(const SymmetricMatrix& perturbation, double epsilon,
                    GapCheck gap = GapCheck::Enforce, double gap_value = 0.5);

  int dim() const noexcept { return a_.dim(); }
  const SymmetricMatrix& perturbation() const noexcept { return a_; }
  double epsilon() const noexcept { return epsilon_; }
  double outlier_scale() const noexcept { return (1.0 - epsilon_) / epsilon_; }
  const ZeroMeanGaussian& inlier() const noexcept { return inlier_; }
  const ZeroMeanGaussian& outlier() const noexcept { return outlier_; }

  // (1 - eps)(I + A) + eps (I - k A), evaluated in floating point.
  Matrix mixture_covariance() const;

  // Per row: one uniform for the latent coin (outlier when < eps), then d normals.
  SampleMatrix sample(Stream& rng, std::int64_t n, std::vector<bool>* outlier_rows = nullptr) const;

 private:
  SymmetricMatrix a_;
  double epsilon_;
  ZeroMeanGaussian inlier_;
  ZeroMeanGaussian outlier_;
};

inline ContaminatedModel build_model(const SymmetricMatrix& a, double epsilon,
                                     GapCheck gap = GapCheck::Enforce, double gap_value = 0.5) {
  return ContaminatedModel(a, epsilon, gap, gap_value);
}

// Sum over the 2x2 component grid of weight products times chi2_inner_exact.
Chi2Value chi2_mixture_exact(const ContaminatedModel& m1, const ContaminatedModel& m2);

// Weighted sum of the tr(AB) coefficients of the four cross terms; zero in exact arithmetic.
double first_order_cancellation(double epsilon);

// Plain-text matrix format: first line d, then d rows of d space-separated
// reals printed with 17 significant digits.
void write_matrix(std::ostream& out, const SymmetricMatrix& m);
SymmetricMatrix read_matrix(std::istream& in);
void save_matrix(const std::string& path, const SymmetricMatrix& m);
SymmetricMatrix load_matrix(const std::string& path);

}  // namespace robcov
