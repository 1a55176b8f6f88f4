// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctmpc/contraction.hpp"
#include "ctmpc/model.hpp"
#include "ctmpc/riemann.hpp"
#include "ctmpc/types.hpp"

namespace ctmpc {

/// Ordered (tau_i, N_i) segments over a fixed physical sampling period.
/// Every tau_i is a positive integer multiple of tau_delta and the segment
/// timescales are non-decreasing (fine steps first).
struct TimescaleSchedule {
  struct Segment {
    double tau = 0.0;
    int steps = 0;
    long ratio = 1;  // tau / tau_delta, exact
  };

  double tau_delta = 1.0;
  std::vector<Segment> segments;

  int segment_count() const { return static_cast<int>(segments.size()); }
  /// N: number of predicted inputs.
  long total_inputs() const;
  /// k_hat: physical sampling periods covered by the horizon.
  long predicted_steps() const;

  /// Segment index owning flat input node q (0-based, q < N).
  int segment_of(long q) const;
  /// Prediction-time offset (seconds) of state node q, q in [0, N].
  double node_time(long q) const;
};

TimescaleSchedule build_schedule(double tau_delta,
                                 const std::vector<std::pair<double, int>>& segments);

using StageCost = std::function<double(const Vector& x, const Vector& u, const Vector& x_ref,
                                       const Vector& u_ref, double tau)>;

StageCost input_energy_cost();
StageCost quadratic_tracking_cost(Matrix q, Matrix r);

struct SolverOptions {
  double residual_tol = 1e-6;
  double box_tol = 1e-8;
  double penalty_initial = 1e3;
  double penalty_growth = 10.0;
  int penalty_rounds = 5;
  int max_inner_iterations = 150;
  double fd_step = 1e-6;
  double gradient_tol = 1e-6;
  int geodesic_segments = 16;
  bool use_warm_start = true;
};

struct MpcProblem {
  TimescaleSchedule schedule;
  std::vector<SystemModel> models;                    // one per segment
  std::vector<ContractionCertificate> certificates;  // one per segment
  StageCost cost;
  ReferencePlan plan;
  Box state_box;
  Box input_box;
  SolverOptions options;
};

/// Checks the structural invariants (certificate timescales match segments,
/// dimensions agree); throws ConfigError otherwise.
void validate_problem(const MpcProblem& problem);

enum class SolveStatus { kOptimal, kMaxIterations, kInfeasibleFallback };

std::string to_string(SolveStatus status);

struct MpcSolution {
  std::vector<Vector> inputs;      // N entries, segment-concatenated
  std::vector<Vector> states;      // N+1 entries, stitched prediction
  std::vector<double> residuals;   // per input node
  double cost = 0.0;
  SolveStatus status = SolveStatus::kOptimal;
  double solve_ms = 0.0;
  int iterations = 0;             // inner quasi-Newton iterations, all rounds
  bool state_escape = false;      // a predicted state was clamped back into the box
  std::vector<Vector> warm_inputs;  // shifted sequence for the next solve
};

struct NodeReference {
  Vector x_star;
  Vector u_star;
};

/// Stitched prediction: segment 1 starts at the measurement, each later
/// segment at the previous segment's final state, each step with its own
/// timescale model. States leaving the box are clamped and flagged.
std::vector<Vector> predict(const MpcProblem& problem, const Vector& x_k,
                            const std::vector<Vector>& inputs, bool* state_escape = nullptr);

/// Per-node references: entry q holds the plan segment active at absolute
/// time k*tau_delta + node_time(q); N+1 entries.
std::vector<NodeReference> reference_prediction(const MpcProblem& problem, long k);

MpcSolution solve(const MpcProblem& problem, const Vector& x_k, long k,
                  const MpcSolution* warm_start = nullptr);

/// First input of the optimal plan plus the solution carrying the shifted
/// warm-start sequence (fine segment shifted one step, tail padded with the
/// reference input, coarse entries carried unshifted).
std::pair<Vector, MpcSolution> receding_step(const MpcProblem& problem, const Vector& x_k, long k,
                                             const MpcSolution* warm_start = nullptr);

struct AuditReport {
  bool ok = false;
  double max_residual = 0.0;
  double max_state_violation = 0.0;
  double max_input_violation = 0.0;
  double state_mismatch = 0.0;  // re-predicted vs reported states
};

/// Independent re-evaluation of a returned solution: fresh prediction,
/// boxes, and contraction residuals.
AuditReport audit_solution(const MpcProblem& problem, const Vector& x_k, long k,
                           const MpcSolution& solution);

/// The integrated-feedback plan evaluated node by node (the known feasible
/// point used for seeding and as the infeasibility fallback).
MpcSolution fallback_solution(const MpcProblem& problem, const Vector& x_k, long k);

}  // namespace ctmpc
