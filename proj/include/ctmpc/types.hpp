// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <Eigen/Dense>

namespace ctmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned closed box; one interval per dimension.
struct Box {
  Vector lo;
  Vector hi;

  Box() = default;
  Box(Vector lower, Vector upper);

  static Box cube(int dim, double lower, double upper);

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vector& x, double tol = 0.0) const;
  Vector clamp(const Vector& x) const;
  /// Largest component-wise distance outside the box, zero inside.
  double violation(const Vector& x) const;
  Vector center() const { return 0.5 * (lo + hi); }
};

}  // namespace ctmpc
