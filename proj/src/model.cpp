// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#include "ctmpc/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctmpc/errors.hpp"

namespace ctmpc {

Box::Box(Vector lower, Vector upper) : lo(std::move(lower)), hi(std::move(upper)) {
  if (lo.size() != hi.size()) throw DimensionError("box: bound dimensions differ");
  for (int i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) throw DomainError("box: lower bound exceeds upper bound");
  }
}

Box Box::cube(int dim, double lower, double upper) {
  return Box(Vector::Constant(dim, lower), Vector::Constant(dim, upper));
}

bool Box::contains(const Vector& x, double tol) const {
  if (x.size() != lo.size()) return false;
  for (int i = 0; i < x.size(); ++i) {
    if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
  }
  return true;
}

Vector Box::clamp(const Vector& x) const {
  Vector out = x;
  for (int i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], lo[i], hi[i]);
  return out;
}

double Box::violation(const Vector& x) const {
  double worst = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    worst = std::max(worst, lo[i] - x[i]);
    worst = std::max(worst, x[i] - hi[i]);
  }
  return std::max(worst, 0.0);
}

void TankParameters::validate() const {
  const double values[] = {alpha1, alpha2, sigma1, sigma2, pump_gain, gravity, sample_period};
  for (double v : values) {
    if (!(v > 0.0)) throw DomainError("tank parameters must be strictly positive");
  }
}

namespace {

double guarded_sqrt(double v) {
  const double r = std::sqrt(v);
  if (!std::isfinite(r)) throw NanGuardError("square-root argument non-finite after clamping");
  return r;
}

void check_step_args(const SystemModel& model, const Vector& x, const Vector& u, double tau) {
  if (!(tau > 0.0)) throw DomainError("step: timescale must be positive");
  if (x.size() != model.state_dim) throw DimensionError("step: state dimension mismatch");
  if (u.size() != model.input_dim) throw DimensionError("step: input dimension mismatch");
}

}  // namespace

SystemModel make_tank_model(const TankParameters& params) {
  params.validate();
  const TankParameters p = params;

  SystemModel model;
  model.state_dim = 2;
  model.input_dim = 1;
  model.state_box = Box::cube(2, 0.0, 10.0);
  model.input_box = Box::cube(1, 0.0, 10.0);

  model.drift = [p](const Vector& x, double tau) {
    // level floor only under the square roots; outflow of an empty tank is ~0
    const double x1 = std::max(x[0], kLevelFloor);
    const double x2 = std::max(x[1], kLevelFloor);
    const double q1 = guarded_sqrt(2.0 * p.gravity * x1);
    const double q2 = guarded_sqrt(2.0 * p.gravity * x2);
    Vector f(2);
    f[0] = x[0] - tau * (p.sigma1 / p.alpha1) * q1;
    f[1] = x[1] + tau * (p.sigma2 / p.alpha2) * q1 - tau * (p.sigma2 / p.alpha2) * q2;
    return f;
  };

  model.input_matrix = [p](double tau) {
    Matrix b(2, 1);
    b(0, 0) = tau * p.pump_gain / p.alpha1;
    b(1, 0) = 0.0;
    return b;
  };

  model.state_jacobian = [p](const Vector& x, const Vector& /*u*/, double tau) {
    if (x[0] <= kLevelFloor || x[1] <= kLevelFloor)
      throw SingularityError("tank jacobian singular at empty level");
    // d/dx sqrt(2 g x) = g / sqrt(2 g x)
    const double d1 = p.gravity / std::sqrt(2.0 * p.gravity * x[0]);
    const double d2 = p.gravity / std::sqrt(2.0 * p.gravity * x[1]);
    Matrix a(2, 2);
    a(0, 0) = 1.0 - tau * (p.sigma1 / p.alpha1) * d1;
    a(0, 1) = 0.0;
    a(1, 0) = tau * (p.sigma2 / p.alpha2) * d1;
    a(1, 1) = 1.0 - tau * (p.sigma2 / p.alpha2) * d2;
    return a;
  };

  return model;
}

SystemModel make_polynomial_model(const std::vector<PolynomialMatrix>& equations,
                                  const Matrix& input_gain, Box state_box, Box input_box) {
  const int n = static_cast<int>(equations.size());
  if (n == 0) throw DimensionError("polynomial model: no equations");
  for (const auto& eq : equations) {
    if (eq.rows() != 1 || eq.cols() != 1 || eq.nvars() != n)
      throw DimensionError("polynomial model: each equation is scalar in n state variables");
    if (eq.degree() > 3) throw DomainError("polynomial model: degree must be <= 3");
  }
  if (input_gain.rows() != n) throw DimensionError("polynomial model: input gain row mismatch");

  SystemModel model;
  model.state_dim = n;
  model.input_dim = static_cast<int>(input_gain.cols());
  model.state_box = std::move(state_box);
  model.input_box = std::move(input_box);

  model.drift = [equations, n](const Vector& x, double tau) {
    Vector f(n);
    for (int i = 0; i < n; ++i) f[i] = x[i] + tau * equations[i].eval(x)(0, 0);
    return f;
  };
  model.input_matrix = [input_gain](double tau) { return Matrix(tau * input_gain); };
  // analytic jacobian left empty; finite-difference fallback applies
  return model;
}

Vector step(const SystemModel& model, const Vector& x, const Vector& u, double tau) {
  check_step_args(model, x, u, tau);
  Vector next = model.drift(x, tau) + model.input_matrix(tau) * u;
  if (!next.allFinite()) throw NanGuardError("step produced a non-finite state");
  return next;
}

std::pair<Matrix, Matrix> jacobians(const SystemModel& model, const Vector& x, const Vector& u,
                                    double tau) {
  check_step_args(model, x, u, tau);
  const Matrix b = model.input_matrix(tau);
  if (model.state_jacobian) return {model.state_jacobian(x, u, tau), b};

  // central differences of the full step map
  const int n = model.state_dim;
  Matrix a(n, n);
  for (int j = 0; j < n; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    a.col(j) = (step(model, xp, u, tau) - step(model, xm, u, tau)) / (2.0 * h);
  }
  return {a, b};
}

Vector steady_state_input(const SystemModel& model, const Vector& x_star, double tau) {
  if (x_star.size() != model.state_dim)
    throw DimensionError("steady_state_input: state dimension mismatch");
  if (!(tau > 0.0)) throw DomainError("steady_state_input: timescale must be positive");

  constexpr double kTol = 1e-9;
  Vector u = Vector::Zero(model.input_dim);
  Vector residual = step(model, x_star, u, tau) - x_star;

  for (int iter = 0; iter < 50 && residual.lpNorm<Eigen::Infinity>() >= kTol; ++iter) {
    const Matrix j = model.input_matrix(tau);
    const Vector du =
        -(j.transpose() * j + 1e-14 * Matrix::Identity(model.input_dim, model.input_dim))
             .ldlt()
             .solve(j.transpose() * residual);
    double damping = 1.0;
    Vector best_u = u;
    Vector best_res = residual;
    for (int halvings = 0; halvings < 20; ++halvings) {
      const Vector trial = u + damping * du;
      const Vector trial_res = step(model, x_star, trial, tau) - x_star;
      if (trial_res.norm() < best_res.norm()) {
        best_u = trial;
        best_res = trial_res;
        break;
      }
      damping *= 0.5;
    }
    if ((best_u - u).norm() == 0.0) break;  // no further progress
    u = best_u;
    residual = best_res;
  }

  if (residual.lpNorm<Eigen::Infinity>() >= kTol) {
    std::ostringstream msg;
    msg << "no input makes the requested state a fixed point (residual "
        << residual.lpNorm<Eigen::Infinity>() << ")";
    throw NonEquilibriumError(msg.str());
  }
  if (!model.input_box.contains(u, 1e-12)) {
    throw InfeasibleReferenceError("fixed-point input lies outside the admissible input set");
  }
  return u;
}

ReferencePlan::ReferencePlan(std::vector<PlanSegment> segments) : segments_(std::move(segments)) {
  if (segments_.empty()) throw DomainError("reference plan: no segments");
  for (size_t i = 0; i < segments_.size(); ++i) {
    if (!(segments_[i].t_start < segments_[i].t_end))
      throw DomainError("reference plan: segment has non-positive duration");
    if (i > 0 && std::abs(segments_[i].t_start - segments_[i - 1].t_end) > 1e-12)
      throw DomainError("reference plan: segments must be contiguous");
  }
}

double ReferencePlan::t_begin() const { return segments_.front().t_start; }
double ReferencePlan::t_end() const { return segments_.back().t_end; }

const PlanSegment& ReferencePlan::at(double t) const {
  if (t < t_begin() || t > t_end()) throw OutOfWindowError("reference time outside plan window");
  return at_held(t);
}

const PlanSegment& ReferencePlan::at_held(double t) const {
  if (t < t_begin()) throw OutOfWindowError("reference time precedes plan window");
  // later segment wins at a boundary; final segment held beyond its end
  for (size_t i = segments_.size(); i-- > 0;) {
    if (t >= segments_[i].t_start) return segments_[i];
  }
  return segments_.front();
}

ReferencePlan make_reference_plan(const SystemModel& model, double tau_delta,
                                  const std::vector<PlanTargetSpec>& targets) {
  std::vector<PlanSegment> segments;
  segments.reserve(targets.size());
  for (const auto& spec : targets) {
    PlanSegment seg;
    seg.t_start = spec.t_start;
    seg.t_end = spec.t_end;
    seg.x_star = spec.target;
    seg.u_star = steady_state_input(model, spec.target, tau_delta);
    const double res =
        (step(model, seg.x_star, seg.u_star, tau_delta) - seg.x_star).lpNorm<Eigen::Infinity>();
    if (res >= 1e-9) throw NonEquilibriumError("plan target is not a fixed point of the model");
    segments.push_back(std::move(seg));
  }
  return ReferencePlan(std::move(segments));
}

std::pair<Vector, Vector> reference_at(const ReferencePlan& plan, double t) {
  const PlanSegment& seg = plan.at(t);
  return {seg.x_star, seg.u_star};
}

}  // namespace ctmpc
