// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <functional>

#include "ctmpc/types.hpp"

namespace ctmpc {

using ScalarObjective = std::function<double(const Vector&)>;

struct NelderMeadOptions {
  int max_iterations = 400;
  double simplex_tol = 1e-10;  // simplex diameter
  double value_tol = 1e-12;    // best-worst value spread
  double initial_step = 0.25;
};

struct NelderMeadResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Derivative-free downhill simplex minimization. Deterministic for a fixed
/// starting point.
NelderMeadResult nelder_mead(const ScalarObjective& f, const Vector& x0,
                             const NelderMeadOptions& options = {});

struct QuasiNewtonOptions {
  int max_iterations = 150;
  double gradient_tol = 1e-7;
  double fd_step = 1e-6;  // relative central-difference step
  int max_line_halvings = 30;
  /// Cap on the infinity norm of a trial step (0 disables); stiff penalty
  /// gradients otherwise launch the first line search absurdly far.
  double step_cap = 0.0;
  /// Optional replacement for the built-in central-difference gradient
  /// (callers can exploit problem structure; must approximate the same
  /// central differences).
  std::function<Vector(const Vector&)> gradient;
  /// Optional hook run after each accepted step. It may refresh caller
  /// state the objective depends on and must return the objective value at
  /// the accepted point under that refreshed state.
  std::function<double(const Vector&)> post_accept;
};

struct QuasiNewtonResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// BFGS with central-difference gradients and Armijo backtracking.
QuasiNewtonResult bfgs_minimize(const ScalarObjective& f, const Vector& x0,
                                const QuasiNewtonOptions& options = {});

/// Central-difference gradient, step scaled per coordinate by max(1, |x_i|).
Vector numerical_gradient(const ScalarObjective& f, const Vector& x, double fd_step,
                          int* evaluations = nullptr);

}  // namespace ctmpc
