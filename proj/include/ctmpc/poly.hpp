// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <vector>

#include "ctmpc/types.hpp"

namespace ctmpc {

/// Dense monomial basis of total degree <= degree in nvars variables,
/// graded lexicographic order: 1, x1, ..., xn, x1^2, x1*x2, ...
class MonomialBasis {
 public:
  MonomialBasis() = default;
  MonomialBasis(int nvars, int degree);

  int nvars() const { return nvars_; }
  int degree() const { return degree_; }
  int size() const { return static_cast<int>(exponents_.size()); }
  const std::vector<int>& exponents(int k) const { return exponents_[k]; }

  /// All monomial values at x, basis order.
  Vector eval(const Vector& x) const;
  /// Allocation-free variant; out must be presized to size().
  void eval_into(const Vector& x, Vector& out) const;

 private:
  int nvars_ = 0;
  int degree_ = 0;
  std::vector<std::vector<int>> exponents_;
};

/// Matrix-valued polynomial function of the state. Entries share one
/// monomial basis; symmetric matrices store the lower triangle only.
/// The flat parameter vector layout is fixed (stored entries in row-major
/// lower-triangle order, each holding its basis coefficients), which makes
/// serialization and derivative-free search over coefficients reproducible.
class PolynomialMatrix {
 public:
  PolynomialMatrix() = default;
  PolynomialMatrix(int rows, int cols, int nvars, int degree, bool symmetric);

  /// Degree-0 matrix pinned to a constant value.
  static PolynomialMatrix constant(const Matrix& value, int nvars, bool symmetric);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int degree() const { return basis_.degree(); }
  int nvars() const { return basis_.nvars(); }
  bool symmetric() const { return symmetric_; }
  bool is_constant() const { return basis_.degree() == 0; }

  Matrix eval(const Vector& x) const;
  /// Allocation-free variant; out must be rows() x cols(), monomial_buffer
  /// presized to the basis size.
  void eval_into(const Vector& x, Matrix& out, Vector& monomial_buffer) const;

  const MonomialBasis& basis() const { return basis_; }

  int parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& theta);

  /// Entry (i,j) coefficient vector over the basis (i >= j when symmetric).
  const Vector& entry_coeffs(int i, int j) const;
  Vector& entry_coeffs(int i, int j);

 private:
  int stored_index(int i, int j) const;

  int rows_ = 0;
  int cols_ = 0;
  bool symmetric_ = false;
  MonomialBasis basis_;
  std::vector<Vector> coeffs_;  // one per stored entry
};

}  // namespace ctmpc
