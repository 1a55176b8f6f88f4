// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctmpc/optim.hpp"

using namespace ctmpc;

TEST_CASE("simplex search minimizes a shifted quadratic") {
  auto f = [](const Vector& x) {
    return (x[0] - 1.5) * (x[0] - 1.5) + 3.0 * (x[1] + 0.5) * (x[1] + 0.5);
  };
  NelderMeadResult result = nelder_mead(f, Vector::Zero(2));
  CHECK(result.converged);
  CHECK(result.x[0] == doctest::Approx(1.5).epsilon(1e-5));
  CHECK(result.x[1] == doctest::Approx(-0.5).epsilon(1e-5));
}

TEST_CASE("simplex search handles a non-smooth max of planes") {
  auto f = [](const Vector& x) {
    return std::max(std::abs(x[0] - 2.0), std::abs(x[1] + 1.0));
  };
  NelderMeadOptions options;
  options.max_iterations = 800;
  NelderMeadResult result = nelder_mead(f, Vector::Zero(2), options);
  CHECK(result.value < 1e-6);
}

TEST_CASE("quasi-Newton minimizes an ill-conditioned quadratic") {
  Matrix h(3, 3);
  h << 100, 0, 0, 0, 1, 0, 0, 0, 10;
  Vector target(3);
  target << 0.3, -2.0, 1.0;
  auto f = [&](const Vector& x) {
    const Vector d = x - target;
    return 0.5 * d.dot(h * d);
  };
  QuasiNewtonResult result = bfgs_minimize(f, Vector::Zero(3));
  CHECK(result.converged);
  CHECK((result.x - target).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("quasi-Newton with rosenbrock valley") {
  auto f = [](const Vector& x) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    return a * a + 100.0 * b * b;
  };
  QuasiNewtonOptions options;
  options.max_iterations = 400;
  options.gradient_tol = 1e-9;
  QuasiNewtonResult result = bfgs_minimize(f, Vector::Zero(2), options);
  CHECK(result.value < 1e-8);
}

TEST_CASE("step cap limits the first trial move") {
  int evals = 0;
  auto f = [&](const Vector& x) {
    ++evals;
    return 1e8 * x[0] * x[0];
  };
  QuasiNewtonOptions options;
  options.step_cap = 0.5;
  options.max_iterations = 50;
  Vector x0(1);
  x0 << 0.4;
  QuasiNewtonResult result = bfgs_minimize(f, x0, options);
  CHECK(std::abs(result.x[0]) < 1e-4);
}

TEST_CASE("central-difference gradient matches the analytic one") {
  auto f = [](const Vector& x) { return x[0] * x[0] * x[1] + 2.0 * x[1]; };
  Vector x(2);
  x << 1.2, -0.7;
  const Vector g = numerical_gradient(f, x, 1e-6);
  CHECK(g[0] == doctest::Approx(2.0 * 1.2 * -0.7).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(1.2 * 1.2 + 2.0).epsilon(1e-8));
}
