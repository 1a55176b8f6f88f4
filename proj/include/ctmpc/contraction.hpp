// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <string>
#include <vector>

#include "ctmpc/model.hpp"
#include "ctmpc/poly.hpp"
#include "ctmpc/types.hpp"

namespace ctmpc {

/// Largest eigenvalue of (A+BK)' M+ (A+BK) - (1-beta) M. Negative means the
/// closed-loop differential dynamics contract at this point.
double contraction_margin(const Matrix& A, const Matrix& B, const Matrix& K, const Matrix& M,
                          const Matrix& M_plus, double beta);

/// Smallest eigenvalue of the synthesis block matrix
///   [ W+        A W + B L ]
///   [ (.)'    (1-beta) W  ].
/// Positive means the convexified synthesis condition holds.
double lmi_margin(const Matrix& W, const Matrix& L, const Matrix& A, const Matrix& B,
                  const Matrix& W_plus, double beta);

/// Rectangular sample grid used for synthesis and verification. The state
/// box is the certification region: a sub-box of the model's state set that
/// stays clear of points where the Jacobian is singular.
struct CertificateGrid {
  Box states;
  int states_per_dim = 21;
  Box inputs;
  int inputs_per_dim = 5;

  std::vector<Vector> state_points() const;
  std::vector<Vector> input_points() const;
  /// Same extent at doubled density (2k-1 points per dimension).
  CertificateGrid refined() const;
  std::string hash() const;
};

/// Per-timescale contraction certificate: metric M(x) = W(x)^-1 and
/// differential feedback gain K(x) = L(x) W(x)^-1 with rate beta, uniform
/// metric bounds certified on the grid.
class ContractionCertificate {
 public:
  ContractionCertificate() = default;
  ContractionCertificate(double tau, double beta, PolynomialMatrix w, PolynomialMatrix l,
                         double metric_lower, double metric_upper, double margin_eta,
                         CertificateGrid grid, double synthesis_margin);

  double tau() const { return tau_; }
  double beta() const { return beta_; }
  double metric_lower() const { return metric_lower_; }
  double metric_upper() const { return metric_upper_; }
  double margin_eta() const { return margin_eta_; }
  double synthesis_margin() const { return synthesis_margin_; }
  /// Per-step distance decay factor sqrt(1-beta).
  double decay_factor() const;
  /// Transient overshoot R = sqrt(m_upper / m_lower).
  double overshoot() const;
  bool constant_metric() const { return w_.is_constant(); }
  int state_dim() const { return w_.rows(); }
  int input_dim() const { return l_.rows(); }

  Matrix metric(const Vector& x) const;
  Matrix gain(const Vector& x) const;

  const PolynomialMatrix& w() const { return w_; }
  const PolynomialMatrix& l() const { return l_; }
  const CertificateGrid& grid() const { return grid_; }

 private:
  double tau_ = 0.0;
  double beta_ = 0.0;
  PolynomialMatrix w_;
  PolynomialMatrix l_;
  double metric_lower_ = 0.0;
  double metric_upper_ = 0.0;
  double margin_eta_ = 1e-4;
  double synthesis_margin_ = 0.0;
  CertificateGrid grid_;
  // cached for the constant case
  bool cached_ = false;
  Matrix metric_cache_;
  Matrix gain_cache_;
};

/// Constraint-sampling term for synthesis: the certificate must admit some
/// admissible input from `state` whose one-step image contracts toward the
/// fixed-point reference `target` (straight-path distances, slack margin).
struct FeasibilityWitness {
  Vector state;
  Vector target;
};

struct SynthesisProblem {
  const SystemModel* model = nullptr;
  double tau = 1.0;
  double beta = 0.3;
  int degree = 0;  // 0 or 2
  CertificateGrid grid;
  double margin_eta = 1e-4;
  unsigned seed = 1;
  int starts = 8;
  int max_iterations = 400;
  // optional offline constraint sampling folded into the search
  std::vector<FeasibilityWitness> witnesses;
  double witness_slack = 1e-3;
  double witness_scale = 0.25;
};

/// Searches (W, L) coefficients maximizing the worst grid LMI margin by
/// multi-start downhill simplex; accepts candidates whose LMI margin is
/// >= eta and whose converted contraction margin is <= -eta everywhere on
/// the grid. Lowest normalized parameter norm wins among passing candidates.
ContractionCertificate synthesize(const SynthesisProblem& problem);

struct VerificationReport {
  std::vector<double> margins;  // per state point, worst over the input grid
  double worst_margin = 0.0;
  Vector worst_state;
  double metric_lower = 0.0;
  double metric_upper = 0.0;
  double margin_eta = 0.0;
  int points_checked = 0;
  int clamped_images = 0;  // one-step images clamped back into the state box
  std::vector<Vector> clamped_states;

  bool passed() const { return worst_margin <= -margin_eta && metric_lower > 0.0; }
};

VerificationReport verify(const ContractionCertificate& cert, const SystemModel& model,
                          const std::vector<Vector>& states, const std::vector<Vector>& inputs);

/// Convenience overload on the grid spec (doubled density by default lives
/// with the caller; this evaluates exactly the points of `grid`).
VerificationReport verify(const ContractionCertificate& cert, const SystemModel& model,
                          const CertificateGrid& grid);

void save_certificate(const ContractionCertificate& cert, const std::string& path);
ContractionCertificate load_certificate(const std::string& path);

}  // namespace ctmpc
