// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <functional>
#include <vector>

#include "ctmpc/contraction.hpp"
#include "ctmpc/model.hpp"
#include "ctmpc/types.hpp"

namespace ctmpc {

/// State-dependent metric with fast evaluation paths: constant metrics make
/// geodesics straight lines and all integrals closed-form; polynomial-backed
/// metrics (from certificates) evaluate quadratic forms without heap
/// allocation. Instances carry scratch buffers, so share one per thread.
class MetricFunction {
 public:
  MetricFunction() = default;
  static MetricFunction constant(Matrix m);
  static MetricFunction from(std::function<Matrix(const Vector&)> fn);
  static MetricFunction from_certificate(const ContractionCertificate& cert);
  /// Metric M(x) = W(x)^{-1} for a polynomial W family (degree 0 collapses
  /// to the constant fast path).
  static MetricFunction from_inverse_poly(const PolynomialMatrix& w);

  bool is_constant() const { return constant_; }
  Matrix operator()(const Vector& x) const;

  /// delta' M(midpoint) delta for the segment a -> b.
  double segment_quad(const Vector& a, const Vector& b) const;

 private:
  bool constant_ = false;
  Matrix value_;
  std::function<Matrix(const Vector&)> fn_;

  // polynomial-backed: M(x) = W(x)^{-1} evaluated via a small linear solve
  bool poly_ = false;
  PolynomialMatrix w_poly_;
  mutable Vector mono_buf_;
  mutable Vector mid_buf_;
  mutable Vector delta_buf_;
  mutable Vector solve_buf_;
  mutable Matrix w_buf_;
};

/// Discretized s-parameterized path with S+1 samples on a uniform grid of
/// [0, 1]; samples.front() and samples.back() are the queried endpoints.
struct GeodesicPath {
  std::vector<Vector> samples;
  double energy = 0.0;  // sum of tangent' M tangent / S
  double length = 0.0;  // midpoint-rule Riemannian length
  bool clamped = false;    // some sample was pulled back into the state box
  bool converged = true;   // energy descent reached tolerance in budget

  int segments() const { return static_cast<int>(samples.size()) - 1; }
  /// Forward difference scaled by the segment count (ds = 1/S).
  Vector tangent(int segment) const;
};

struct GeodesicOptions {
  int segments = 16;
  int max_iterations = 200;
  double energy_tol = 1e-10;
  bool relaxed = false;         // on non-convergence: straight line + flag
  const Box* clamp_to = nullptr;  // project samples into this box
  /// Cached-distance reuse radius (relative endpoint move below which the
  /// warm path is re-pinned without re-descending); <= 0 forces descent.
  double repin_tol = 1e-4;
};

/// Midpoint-rule Riemannian length of the path under the metric.
double path_length(const MetricFunction& metric, const GeodesicPath& path);

double path_energy(const MetricFunction& metric, const GeodesicPath& path);

/// Energy-minimizing discretized path from `from` to `to`; straight line
/// analytically for constant metrics, projected gradient descent otherwise.
GeodesicPath geodesic(const MetricFunction& metric, const Vector& from, const Vector& to,
                      const GeodesicOptions& options = {});

double riemannian_distance(const MetricFunction& metric, const Vector& a, const Vector& b,
                           const GeodesicOptions& options = {});

/// Reusable path state for repeated distance queries whose endpoints move
/// slowly (the solver evaluates one node's distances thousands of times
/// under tiny input perturbations). Endpoint moves below a stationarity
/// threshold of the last descended anchors reuse the path directly.
struct GeodesicCache {
  GeodesicPath path;
  Vector anchor_from;
  Vector anchor_to;
  bool valid = false;
};

double riemannian_distance_cached(const MetricFunction& metric, const Vector& a, const Vector& b,
                                  const GeodesicOptions& options, GeodesicCache& cache);

/// Integrated differential feedback along the geodesic from the reference
/// to the state: u* + sum K(midpoint) delta, saturated onto the input box.
Vector feedback_control(const ContractionCertificate& cert, const SystemModel& model,
                        const Vector& x, const Vector& x_star, const Vector& u_star,
                        const GeodesicOptions& options = {}, bool* saturated = nullptr);

/// d(x+, x*+) - sqrt(1-beta) d(x, x*) with both images stepped through the
/// model at the certificate's timescale. Non-positive means (x*, u*)-tracking
/// contracts under u at this state.
double constraint_residual(const ContractionCertificate& cert, const SystemModel& model,
                           const Vector& x, const Vector& x_star, const Vector& u,
                           const Vector& u_star, const GeodesicOptions& options = {});

}  // namespace ctmpc
