// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ctmpc/poly.hpp"
#include "ctmpc/types.hpp"

namespace ctmpc {

/// Timescale-parameterized discrete control-affine model
///   x+ = f(x, tau) + B(tau) u
/// with box-constrained states and inputs. The input matrix depends on the
/// timescale only, never on the state. An empty state_jacobian falls back
/// to central finite differences of the full step map.
struct SystemModel {
  int state_dim = 0;
  int input_dim = 0;
  std::function<Vector(const Vector&, double)> drift;
  std::function<Matrix(double)> input_matrix;
  std::function<Matrix(const Vector&, const Vector&, double)> state_jacobian;
  Box state_box;
  Box input_box;
};

/// Coupled-tank geometry and actuator constants (cm / V / s units).
struct TankParameters {
  double alpha1 = 155.0;       // upper tank cross-section, cm^2
  double alpha2 = 15.5;        // lower tank cross-section, cm^2
  double sigma1 = 0.178;       // outflow orifice areas, cm^2
  double sigma2 = 0.178;
  double pump_gain = 13.2;     // cm^3 / (V s)
  double gravity = 980.0;      // cm / s^2
  double sample_period = 1.0;  // s

  void validate() const;
};

/// Level floor applied inside the tank dynamics before square roots.
inline constexpr double kLevelFloor = 1e-9;

SystemModel make_tank_model(const TankParameters& params = {});

/// Euler-form polynomial model x+ = x + tau * p(x) + tau * B0 u with
/// per-equation coefficient tables, total degree <= 3.
SystemModel make_polynomial_model(const std::vector<PolynomialMatrix>& equations,
                                  const Matrix& input_gain, Box state_box, Box input_box);

Vector step(const SystemModel& model, const Vector& x, const Vector& u, double tau);

/// (A, B) of the step map at (x, u, tau); A analytic when the model provides
/// it, otherwise central finite differences.
std::pair<Matrix, Matrix> jacobians(const SystemModel& model, const Vector& x, const Vector& u,
                                    double tau);

/// Input making x_star a fixed point of the tau-step map, solved by damped
/// Gauss-Newton on the fixed-point residual (tolerance 1e-9).
Vector steady_state_input(const SystemModel& model, const Vector& x_star, double tau);

struct PlanSegment {
  double t_start = 0.0;
  double t_end = 0.0;
  Vector x_star;
  Vector u_star;
};

/// Piecewise-constant operating targets with steady inputs resolved at
/// construction. Segments are contiguous; at an interior boundary the later
/// segment wins; the final segment is closed on the right.
class ReferencePlan {
 public:
  ReferencePlan() = default;
  ReferencePlan(std::vector<PlanSegment> segments);

  double t_begin() const;
  double t_end() const;
  const std::vector<PlanSegment>& segments() const { return segments_; }

  /// Active (x*, u*) at time t; throws OutOfWindowError outside [begin, end].
  const PlanSegment& at(double t) const;
  /// Like at(), but holds the final segment constant beyond the window end.
  const PlanSegment& at_held(double t) const;

 private:
  std::vector<PlanSegment> segments_;
};

struct PlanTargetSpec {
  double t_start = 0.0;
  double t_end = 0.0;
  Vector target;
};

/// Builds a plan whose steady inputs are solved against the model at
/// tau_delta and validated as fixed points to residual < 1e-9.
ReferencePlan make_reference_plan(const SystemModel& model, double tau_delta,
                                  const std::vector<PlanTargetSpec>& targets);

std::pair<Vector, Vector> reference_at(const ReferencePlan& plan, double t);

}  // namespace ctmpc
