// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <stdexcept>
#include <string>

#include "ctmpc/types.hpp"

namespace ctmpc {

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A square-root (or similar) produced a non-finite value despite clamping.
struct NanGuardError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Jacobian requested where the model is not differentiable.
struct SingularityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// No input of any magnitude makes the requested state a fixed point.
struct NonEquilibriumError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A fixed-point input exists but lies outside the admissible input set.
struct InfeasibleReferenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutOfWindowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonSymmetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Certificate search exhausted without reaching the required margin.
struct SynthesisError : std::runtime_error {
  SynthesisError(const std::string& what, Vector worst_state, double achieved_margin)
      : std::runtime_error(what),
        worst_state(std::move(worst_state)),
        achieved_margin(achieved_margin) {}
  Vector worst_state;
  double achieved_margin = 0.0;
};

struct GeodesicError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The integrated-feedback fallback itself violates the contraction
/// constraint (after saturation); the receding-horizon loop cannot continue.
struct FallbackInfeasibleError : std::runtime_error {
  FallbackInfeasibleError(const std::string& what, double worst_residual)
      : std::runtime_error(what), worst_residual(worst_residual) {}
  double worst_residual = 0.0;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ctmpc
