// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#include "ctmpc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace ctmpc {

NelderMeadResult nelder_mead(const ScalarObjective& f, const Vector& x0,
                             const NelderMeadOptions& options) {
  const int n = static_cast<int>(x0.size());
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

  std::vector<Vector> points(n + 1, x0);
  for (int i = 0; i < n; ++i) {
    const double h = options.initial_step * std::max(1.0, std::abs(x0[i]));
    points[i + 1][i] += h;
  }
  std::vector<double> values(n + 1);
  for (int i = 0; i <= n; ++i) values[i] = f(points[i]);

  std::vector<int> order(n + 1);
  NelderMeadResult result;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return values[a] < values[b]; });
    const int best = order[0], worst = order[n], second_worst = order[n - 1];

    double diameter = 0.0;
    for (int i = 1; i <= n; ++i)
      diameter = std::max(diameter, (points[order[i]] - points[best]).lpNorm<Eigen::Infinity>());
    if (diameter < options.simplex_tol &&
        std::abs(values[worst] - values[best]) < options.value_tol) {
      result.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += points[i];
    centroid /= n;

    const Vector reflected = centroid + alpha * (centroid - points[worst]);
    const double f_reflected = f(reflected);

    if (f_reflected < values[best]) {
      const Vector expanded = centroid + gamma * (reflected - centroid);
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        points[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        points[worst] = reflected;
        values[worst] = f_reflected;
      }
    } else if (f_reflected < values[second_worst]) {
      points[worst] = reflected;
      values[worst] = f_reflected;
    } else {
      const bool outside = f_reflected < values[worst];
      const Vector base = outside ? reflected : points[worst];
      const Vector contracted = centroid + rho * (base - centroid);
      const double f_contracted = f(contracted);
      if (f_contracted < std::min(f_reflected, values[worst])) {
        points[worst] = contracted;
        values[worst] = f_contracted;
      } else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          points[i] = points[best] + sigma * (points[i] - points[best]);
          values[i] = f(points[i]);
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (values[i] < values[best]) best = i;
  result.x = points[best];
  result.value = values[best];
  result.iterations = iter;
  return result;
}

Vector numerical_gradient(const ScalarObjective& f, const Vector& x, double fd_step,
                          int* evaluations) {
  const int n = static_cast<int>(x.size());
  Vector grad(n);
  Vector probe = x;
  for (int i = 0; i < n; ++i) {
    const double h = fd_step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  if (evaluations) *evaluations += 2 * n;
  return grad;
}

QuasiNewtonResult bfgs_minimize(const ScalarObjective& f, const Vector& x0,
                                const QuasiNewtonOptions& options) {
  const int n = static_cast<int>(x0.size());
  QuasiNewtonResult result;
  result.x = x0;
  result.value = f(x0);
  result.evaluations = 1;

  auto eval_gradient = [&](const Vector& x) {
    if (options.gradient) return options.gradient(x);
    return numerical_gradient(f, x, options.fd_step, &result.evaluations);
  };

  Matrix h_inv = Matrix::Identity(n, n);
  Vector grad = eval_gradient(result.x);

  double window_start_value = result.value;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter;
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tol) {
      result.converged = true;
      return result;
    }
    Vector direction = -h_inv * grad;
    double directional = grad.dot(direction);
    if (!(directional < 0.0)) {  // lost descent; restart from steepest descent
      h_inv = Matrix::Identity(n, n);
      direction = -grad;
      directional = grad.dot(direction);
    }
    if (options.step_cap > 0.0) {
      const double magnitude = direction.lpNorm<Eigen::Infinity>();
      if (magnitude > options.step_cap) {
        direction *= options.step_cap / magnitude;
        directional = grad.dot(direction);
      }
    }

    double step = 1.0;
    double f_new = result.value;
    Vector x_new = result.x;
    bool accepted = false;
    for (int halving = 0; halving < options.max_line_halvings; ++halving) {
      x_new = result.x + step * direction;
      f_new = f(x_new);
      ++result.evaluations;
      if (f_new <= result.value + 1e-4 * step * directional) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // no acceptable step along a descent direction: treat as converged
      result.converged = grad.lpNorm<Eigen::Infinity>() < 1e3 * options.gradient_tol;
      return result;
    }
    if (options.post_accept) f_new = options.post_accept(x_new);

    // stop when a whole window of iterations no longer makes progress;
    // penalty terms amplify distance-evaluation jitter into the gradient
    if (iter > 0 && iter % 8 == 0) {
      if (window_start_value - f_new < 1e-11 * std::max(1.0, std::abs(f_new))) {
        result.x = x_new;
        result.value = f_new;
        result.converged = true;
        return result;
      }
      window_start_value = f_new;
    }

    const Vector grad_new = eval_gradient(x_new);
    const Vector s = x_new - result.x;
    const Vector y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Matrix identity = Matrix::Identity(n, n);
      h_inv = (identity - rho * s * y.transpose()) * h_inv *
                  (identity - rho * y * s.transpose()) +
              rho * s * s.transpose();
    } else {
      h_inv = Matrix::Identity(n, n);
    }
    result.x = x_new;
    result.value = f_new;
    grad = grad_new;
  }
  result.iterations = options.max_iterations;
  return result;
}

}  // namespace ctmpc
