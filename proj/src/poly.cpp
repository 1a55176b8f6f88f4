// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#include "ctmpc/poly.hpp"

#include <cmath>

#include "ctmpc/errors.hpp"

namespace ctmpc {

namespace {

void enumerate_exponents(int nvars, int remaining, std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
  if (static_cast<int>(current.size()) == nvars) {
    out.push_back(current);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    current.push_back(e);
    enumerate_exponents(nvars, remaining - e, current, out);
    current.pop_back();
  }
}

}  // namespace

MonomialBasis::MonomialBasis(int nvars, int degree) : nvars_(nvars), degree_(degree) {
  if (nvars < 0 || degree < 0) throw DomainError("monomial basis: negative size");
  // graded order: all monomials of total degree d, d = 0..degree
  for (int d = 0; d <= degree; ++d) {
    std::vector<std::vector<int>> level;
    std::vector<int> current;
    enumerate_exponents(nvars, d, current, level);
    for (auto& exps : level) {
      int total = 0;
      for (int e : exps) total += e;
      if (total == d) exponents_.push_back(exps);
    }
  }
}

Vector MonomialBasis::eval(const Vector& x) const {
  Vector v(size());
  eval_into(x, v);
  return v;
}

void MonomialBasis::eval_into(const Vector& x, Vector& out) const {
  if (x.size() != nvars_) throw DimensionError("monomial basis: wrong state dimension");
  for (int k = 0; k < size(); ++k) {
    double m = 1.0;
    for (int i = 0; i < nvars_; ++i) {
      for (int e = 0; e < exponents_[k][i]; ++e) m *= x[i];
    }
    out[k] = m;
  }
}

PolynomialMatrix::PolynomialMatrix(int rows, int cols, int nvars, int degree, bool symmetric)
    : rows_(rows), cols_(cols), symmetric_(symmetric), basis_(nvars, degree) {
  if (rows <= 0 || cols <= 0) throw DimensionError("polynomial matrix: empty shape");
  if (symmetric && rows != cols) throw DimensionError("polynomial matrix: symmetric must be square");
  const int stored = symmetric ? rows * (rows + 1) / 2 : rows * cols;
  coeffs_.assign(stored, Vector::Zero(basis_.size()));
}

PolynomialMatrix PolynomialMatrix::constant(const Matrix& value, int nvars, bool symmetric) {
  PolynomialMatrix p(static_cast<int>(value.rows()), static_cast<int>(value.cols()), nvars, 0,
                     symmetric);
  for (int i = 0; i < p.rows_; ++i) {
    for (int j = 0; j < p.cols_; ++j) {
      if (symmetric && j > i) continue;
      p.entry_coeffs(i, j)[0] = value(i, j);
    }
  }
  return p;
}

int PolynomialMatrix::stored_index(int i, int j) const {
  if (i < 0 || j < 0 || i >= rows_ || j >= cols_)
    throw DimensionError("polynomial matrix: entry out of range");
  if (symmetric_) {
    if (j > i) std::swap(i, j);
    return i * (i + 1) / 2 + j;
  }
  return i * cols_ + j;
}

Matrix PolynomialMatrix::eval(const Vector& x) const {
  Matrix out(rows_, cols_);
  Vector mono(basis_.size());
  eval_into(x, out, mono);
  return out;
}

void PolynomialMatrix::eval_into(const Vector& x, Matrix& out, Vector& monomial_buffer) const {
  basis_.eval_into(x, monomial_buffer);
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) {
      out(i, j) = coeffs_[stored_index(i, j)].dot(monomial_buffer);
    }
  }
}

int PolynomialMatrix::parameter_count() const {
  return static_cast<int>(coeffs_.size()) * basis_.size();
}

Vector PolynomialMatrix::parameters() const {
  Vector theta(parameter_count());
  int at = 0;
  for (const auto& c : coeffs_) {
    theta.segment(at, c.size()) = c;
    at += static_cast<int>(c.size());
  }
  return theta;
}

void PolynomialMatrix::set_parameters(const Vector& theta) {
  if (theta.size() != parameter_count())
    throw DimensionError("polynomial matrix: parameter vector size mismatch");
  int at = 0;
  for (auto& c : coeffs_) {
    c = theta.segment(at, c.size());
    at += static_cast<int>(c.size());
  }
}

const Vector& PolynomialMatrix::entry_coeffs(int i, int j) const {
  return coeffs_[stored_index(i, j)];
}

Vector& PolynomialMatrix::entry_coeffs(int i, int j) { return coeffs_[stored_index(i, j)]; }

}  // namespace ctmpc
