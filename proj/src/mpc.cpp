// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#include "ctmpc/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <limits>
#include <sstream>

#include "ctmpc/errors.hpp"
#include "ctmpc/optim.hpp"

namespace ctmpc {

long TimescaleSchedule::total_inputs() const {
  long n = 0;
  for (const auto& seg : segments) n += seg.steps;
  return n;
}

long TimescaleSchedule::predicted_steps() const {
  long k_hat = 0;
  for (const auto& seg : segments) k_hat += static_cast<long>(seg.steps) * seg.ratio;
  return k_hat;
}

int TimescaleSchedule::segment_of(long q) const {
  long at = 0;
  for (int i = 0; i < segment_count(); ++i) {
    at += segments[i].steps;
    if (q < at) return i;
  }
  throw DimensionError("schedule: node index beyond horizon");
}

double TimescaleSchedule::node_time(long q) const {
  if (q < 0 || q > total_inputs()) throw DimensionError("schedule: node index out of range");
  double t = 0.0;
  long remaining = q;
  for (const auto& seg : segments) {
    const long here = std::min<long>(remaining, seg.steps);
    t += static_cast<double>(here) * seg.tau;
    remaining -= here;
    if (remaining == 0) break;
  }
  return t;
}

TimescaleSchedule build_schedule(double tau_delta,
                                 const std::vector<std::pair<double, int>>& segments) {
  if (!(tau_delta > 0.0)) throw DomainError("schedule: sampling period must be positive");
  if (segments.empty()) throw DomainError("schedule: needs at least one segment");

  TimescaleSchedule schedule;
  schedule.tau_delta = tau_delta;
  double previous_tau = 0.0;
  for (const auto& [tau, steps] : segments) {
    if (!(tau > 0.0) || steps < 1) throw DomainError("schedule: segment must have tau > 0, N >= 1");
    const double ratio_real = tau / tau_delta;
    const long ratio = std::lround(ratio_real);
    if (ratio < 1 || std::abs(tau - static_cast<double>(ratio) * tau_delta) > 1e-9 * tau_delta)
      throw DomainError("schedule: every tau must be a positive integer multiple of tau_delta");
    if (tau < previous_tau - 1e-12)
      throw DomainError("schedule: timescales must be non-decreasing (fine steps first)");
    previous_tau = tau;
    schedule.segments.push_back({tau, steps, ratio});
  }
  return schedule;
}

StageCost input_energy_cost() {
  return [](const Vector&, const Vector& u, const Vector&, const Vector&, double) {
    return u.squaredNorm();
  };
}

StageCost quadratic_tracking_cost(Matrix q, Matrix r) {
  return [q = std::move(q), r = std::move(r)](const Vector& x, const Vector& u,
                                              const Vector& x_ref, const Vector& u_ref, double) {
    const Vector dx = x - x_ref;
    const Vector du = u - u_ref;
    return dx.dot(q * dx) + du.dot(r * du);
  };
}

void validate_problem(const MpcProblem& problem) {
  const int p = problem.schedule.segment_count();
  if (p == 0) throw ConfigError("mpc problem: empty schedule");
  if (static_cast<int>(problem.models.size()) != p)
    throw ConfigError("mpc problem: one model binding per segment required");
  if (static_cast<int>(problem.certificates.size()) != p)
    throw ConfigError("mpc problem: one certificate per segment required");
  for (int i = 0; i < p; ++i) {
    if (std::abs(problem.certificates[i].tau() - problem.schedule.segments[i].tau) > 1e-12)
      throw ConfigError("mpc problem: certificate timescale does not match its segment");
    if (problem.certificates[i].state_dim() != problem.models[i].state_dim)
      throw ConfigError("mpc problem: certificate dimension does not match the model");
  }
  if (!problem.cost) throw ConfigError("mpc problem: stage cost not set");
  if (problem.plan.segments().empty()) throw ConfigError("mpc problem: empty reference plan");
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kMaxIterations: return "max-iterations";
    case SolveStatus::kInfeasibleFallback: return "infeasible-fallback";
  }
  return "unknown";
}

std::vector<Vector> predict(const MpcProblem& problem, const Vector& x_k,
                            const std::vector<Vector>& inputs, bool* state_escape) {
  const long n_inputs = problem.schedule.total_inputs();
  if (static_cast<long>(inputs.size()) != n_inputs)
    throw DimensionError("predict: input sequence length does not match the schedule");

  std::vector<Vector> states;
  states.reserve(n_inputs + 1);
  states.push_back(x_k);
  bool escaped = false;
  Vector x = x_k;
  for (long q = 0; q < n_inputs; ++q) {
    const int seg = problem.schedule.segment_of(q);
    const Vector raw = step(problem.models[seg], x, inputs[q], problem.schedule.segments[seg].tau);
    if (problem.state_box.violation(raw) > 0.0) {
      escaped = true;
      x = problem.state_box.clamp(raw);
    } else {
      x = raw;
    }
    states.push_back(x);
  }
  if (state_escape) *state_escape = escaped;
  return states;
}

std::vector<NodeReference> reference_prediction(const MpcProblem& problem, long k) {
  const long n_inputs = problem.schedule.total_inputs();
  std::vector<NodeReference> refs;
  refs.reserve(n_inputs + 1);
  for (long q = 0; q <= n_inputs; ++q) {
    const double t = static_cast<double>(k) * problem.schedule.tau_delta +
                     problem.schedule.node_time(q);
    const PlanSegment& seg = problem.plan.at_held(t);
    refs.push_back({seg.x_star, seg.u_star});
  }
  return refs;
}

namespace {

/// Shared per-solve context: per-node references, their one-step images,
/// fast metric distances (closed-form for constant certificates, warm-started
/// geodesic caches otherwise), and prefix-reuse central-difference gradients.
class SolveContext {
 public:
  SolveContext(const MpcProblem& problem, const Vector& x_k, long k)
      : problem_(problem), x_k_(x_k), refs_(reference_prediction(problem, k)) {
    const long n = problem.schedule.total_inputs();
    geo_.segments = problem.options.geodesic_segments;
    geo_.relaxed = true;
    geo_.repin_tol = 1e-4;  // probe-level reuse; larger moves re-descend
    node_segment_.resize(n);
    ref_next_.resize(n);
    input_matrices_.reserve(problem.schedule.segment_count());
    for (int seg = 0; seg < problem.schedule.segment_count(); ++seg) {
      input_matrices_.push_back(
          problem.models[seg].input_matrix(problem.schedule.segments[seg].tau));
    }
    for (long q = 0; q < n; ++q) {
      const int seg = problem.schedule.segment_of(q);
      node_segment_[q] = seg;
      ref_next_[q] = step(problem.models[seg], refs_[q].x_star, refs_[q].u_star,
                          problem.schedule.segments[seg].tau);
    }
    metrics_.reserve(problem.certificates.size());
    for (const auto& cert : problem.certificates) {
      metrics_.push_back(MetricFunction::from_certificate(cert));
    }
    caches_.resize(2 * n);
    // the first node's current-distance never changes within one solve
    node0_distance_ = distance(node_segment_[0], x_k_, refs_[0].x_star, 1);
  }

  long input_count() const { return problem_.schedule.total_inputs(); }
  const std::vector<NodeReference>& refs() const { return refs_; }

  /// Geodesic path handling for state-dependent metrics: frozen interiors
  /// during one inner minimization (a consistent smooth objective for the
  /// line search), re-descended between penalty rounds, exact for final
  /// feasibility decisions.
  enum class PathMode { kFrozen, kAdaptive, kExact };

  void set_path_mode(PathMode mode) const { mode_ = mode; }

  /// Metric distance; closed form for constant metrics, warm-started
  /// geodesic solve otherwise (one cache slot per node and side).
  double distance(int seg, const Vector& a, const Vector& b, long cache_slot) const {
    GeodesicOptions opts = geo_;
    opts.clamp_to = &problem_.models[seg].state_box;
    switch (mode_) {
      case PathMode::kFrozen: opts.repin_tol = 1e9; break;
      case PathMode::kAdaptive: break;
      case PathMode::kExact: opts.repin_tol = 0.0; break;
    }
    return riemannian_distance_cached(metrics_[seg], a, b, opts, caches_[cache_slot]);
  }

  struct Sums {
    double cost = 0.0;
    double box_sq = 0.0;  // accumulated squared state/input box violations
  };

  /// Stitched rollout with per-node contraction residuals and box
  /// violations; the residual uses the raw one-step image, the rollout
  /// continues on the clamped state.
  struct Evaluation : Sums {
    double max_residual = -std::numeric_limits<double>::infinity();
    double max_state_violation = 0.0;
    double max_input_violation = 0.0;
    bool state_escape = false;
    std::vector<Vector> states;
    std::vector<double> residuals;
  };

  /// One prediction node: accumulates cost and box violations, advances x to
  /// the clamped next state, returns the contraction residual.
  double process_node(long q, Vector& x, const Vector& u, Sums& sums,
                      double* state_violation_out, double* input_violation_out) const {
    const int seg = node_segment_[q];
    const auto& cert = problem_.certificates[seg];
    const double tau = problem_.schedule.segments[seg].tau;

    sums.cost += problem_.cost(x, u, refs_[q].x_star, refs_[q].u_star, tau);

    const double input_violation = problem_.input_box.violation(u);
    sums.box_sq += input_violation * input_violation;

    Vector raw = problem_.models[seg].drift(x, tau);
    raw.noalias() += input_matrices_[seg] * u;
    const double d_now =
        q == 0 ? node0_distance_ : distance(seg, x, refs_[q].x_star, 2 * q + 1);
    const double residual =
        distance(seg, raw, ref_next_[q], 2 * q) - cert.decay_factor() * d_now;

    const double state_violation = problem_.state_box.violation(raw);
    sums.box_sq += state_violation * state_violation;
    x = state_violation > 0.0 ? problem_.state_box.clamp(raw) : std::move(raw);

    if (state_violation_out) *state_violation_out = state_violation;
    if (input_violation_out) *input_violation_out = input_violation;
    return residual;
  }

  /// Augmented-Lagrangian treatment of one contraction constraint r <= 0.
  static double multiplier_term(double residual, double lambda, double mu) {
    const double shifted = std::max(0.0, lambda / mu + residual);
    return 0.5 * mu * (shifted * shifted - (lambda / mu) * (lambda / mu));
  }

  Evaluation evaluate(const std::vector<Vector>& inputs, bool keep_trajectory,
                      bool exact = false) const {
    const PathMode saved_mode = mode_;
    if (exact) mode_ = PathMode::kExact;
    Evaluation ev;
    const long n = input_count();
    if (keep_trajectory) {
      ev.states.reserve(n + 1);
      ev.states.push_back(x_k_);
      ev.residuals.reserve(n);
    }
    Vector x = x_k_;
    for (long q = 0; q < n; ++q) {
      double state_violation = 0.0, input_violation = 0.0;
      const double residual =
          process_node(q, x, inputs[q], ev, &state_violation, &input_violation);
      ev.max_residual = std::max(ev.max_residual, residual);
      ev.max_state_violation = std::max(ev.max_state_violation, state_violation);
      ev.max_input_violation = std::max(ev.max_input_violation, input_violation);
      ev.state_escape = ev.state_escape || state_violation > 0.0;
      if (keep_trajectory) {
        ev.states.push_back(x);
        ev.residuals.push_back(residual);
      }
    }
    mode_ = saved_mode;
    return ev;
  }

  double penalty_value(const std::vector<Vector>& inputs, double mu,
                       const Vector& lambda) const {
    Sums sums;
    double multipliers = 0.0;
    Vector x = x_k_;
    for (long q = 0; q < input_count(); ++q) {
      const double residual = process_node(q, x, inputs[q], sums, nullptr, nullptr);
      multipliers += multiplier_term(residual, lambda[q], mu);
    }
    return sums.cost + mu * sums.box_sq + multipliers;
  }

  /// Central-difference gradient of the augmented objective. Perturbing
  /// input coordinate j only changes nodes from its own onward, so the
  /// rollout is re-run from the perturbed node using the base trajectory's
  /// entry state.
  Vector penalty_gradient(const Vector& theta, double mu, const Vector& lambda,
                          double fd_step) const {
    const long n = input_count();
    const int m = static_cast<int>(problem_.models.front().input_dim);
    std::vector<Vector> inputs(n);
    for (long q = 0; q < n; ++q) inputs[q] = theta.segment(q * m, m);

    // entry state per node along the base trajectory (no distances needed)
    std::vector<Vector> entries(n);
    {
      Vector x = x_k_;
      for (long q = 0; q < n; ++q) {
        entries[q] = x;
        const int seg = node_segment_[q];
        Vector raw = problem_.models[seg].drift(x, problem_.schedule.segments[seg].tau);
        raw.noalias() += input_matrices_[seg] * inputs[q];
        x = problem_.state_box.violation(raw) > 0.0 ? problem_.state_box.clamp(raw)
                                                    : std::move(raw);
      }
    }

    auto tail_value = [&](long q0, Vector x) {
      Sums sums;
      double multipliers = 0.0;
      for (long q = q0; q < n; ++q) {
        const double residual = process_node(q, x, inputs[q], sums, nullptr, nullptr);
        multipliers += multiplier_term(residual, lambda[q], mu);
      }
      return sums.cost + mu * sums.box_sq + multipliers;
    };

    Vector grad(theta.size());
    for (long j = 0; j < theta.size(); ++j) {
      const long q = j / m;
      const int coord = static_cast<int>(j % m);
      const double saved = inputs[q][coord];
      const double h = fd_step * std::max(1.0, std::abs(saved));
      inputs[q][coord] = saved + h;
      const double fp = tail_value(q, entries[q]);
      inputs[q][coord] = saved - h;
      const double fm = tail_value(q, entries[q]);
      inputs[q][coord] = saved;
      grad[j] = (fp - fm) / (2.0 * h);
    }
    return grad;
  }

  bool feasible(const Evaluation& ev) const {
    // accept slightly inside the contract tolerance; independent recomputes
    // of the geodesic distances must stay under it as well
    return ev.max_residual <= 0.9 * problem_.options.residual_tol &&
           ev.max_state_violation <= problem_.options.box_tol &&
           ev.max_input_violation <= problem_.options.box_tol;
  }

  /// Greedy minimal-effort plan: node by node, the smallest-magnitude
  /// admissible input whose contraction residual clears a small margin
  /// (scalar-input models; otherwise the reference inputs are returned).
  /// Feasible by construction whenever each node admits any feasible input.
  std::vector<Vector> greedy_seed() const {
    const long n = input_count();
    std::vector<Vector> inputs;
    inputs.reserve(n);
    if (problem_.models.front().input_dim != 1) {
      for (long q = 0; q < n; ++q) inputs.push_back(refs_[q].u_star);
      return inputs;
    }
    // ride the constraint with real slack: exact boundary-riding drifts into
    // states whose later nodes lose feasibility altogether
    const double margin = 1e-3;
    Vector x = x_k_;
    Sums scratch;
    for (long q = 0; q < n; ++q) {
      const double lo = problem_.input_box.lo[0];
      const double hi = problem_.input_box.hi[0];
      auto residual_at = [&](double u) {
        Vector x_copy = x;
        Sums sums;
        return process_node(q, x_copy, Vector::Constant(1, u), sums, nullptr, nullptr);
      };
      // coarse scan for the residual-minimizing input, then golden-section
      // refinement: near steady states the feasible valley in u is far
      // narrower than any reasonable scan spacing
      double best_u = lo, best_r = residual_at(lo);
      for (int i = 1; i <= 16; ++i) {
        const double u = lo + (hi - lo) * i / 16.0;
        const double r = residual_at(u);
        if (r < best_r) {
          best_r = r;
          best_u = u;
        }
      }
      {
        const double spacing = (hi - lo) / 16.0;
        double a = std::max(lo, best_u - spacing);
        double c = std::min(hi, best_u + spacing);
        const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = c - ratio * (c - a), x2 = a + ratio * (c - a);
        double f1 = residual_at(x1), f2 = residual_at(x2);
        for (int iter = 0; iter < 40 && c - a > 1e-10; ++iter) {
          if (f1 < f2) {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - ratio * (c - a);
            f1 = residual_at(x1);
          } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (c - a);
            f2 = residual_at(x2);
          }
        }
        const double refined_u = f1 < f2 ? x1 : x2;
        const double refined_r = std::min(f1, f2);
        if (refined_r < best_r) {
          best_r = refined_r;
          best_u = refined_u;
        }
      }
      double chosen = best_u;
      if (best_r <= -margin) {
        // walk toward zero effort while the margin holds (bisection on the
        // cheap side of the feasible interval)
        const double target = std::clamp(0.0, lo, hi);
        double cheap = target, good = best_u;
        if (residual_at(cheap) <= -margin) {
          chosen = cheap;
        } else {
          for (int iter = 0; iter < 40 && std::abs(good - cheap) > 1e-9; ++iter) {
            const double mid = 0.5 * (good + cheap);
            if (residual_at(mid) <= -margin)
              good = mid;
            else
              cheap = mid;
          }
          chosen = good;
        }
      }
      inputs.push_back(Vector::Constant(1, chosen));
      process_node(q, x, inputs.back(), scratch, nullptr, nullptr);
    }
    return inputs;
  }

 private:
  const MpcProblem& problem_;
  Vector x_k_;
  std::vector<NodeReference> refs_;
  std::vector<int> node_segment_;
  std::vector<Vector> ref_next_;
  std::vector<Matrix> input_matrices_;
  std::vector<MetricFunction> metrics_;
  GeodesicOptions geo_;
  mutable std::vector<GeodesicCache> caches_;
  mutable PathMode mode_ = PathMode::kAdaptive;
  double node0_distance_ = 0.0;
};

Vector flatten(const std::vector<Vector>& inputs) {
  const int m = inputs.empty() ? 0 : static_cast<int>(inputs.front().size());
  Vector theta(static_cast<long>(inputs.size()) * m);
  for (size_t q = 0; q < inputs.size(); ++q) theta.segment(q * m, m) = inputs[q];
  return theta;
}

std::vector<Vector> unflatten(const Vector& theta, long count, int m) {
  std::vector<Vector> inputs(count);
  for (long q = 0; q < count; ++q) inputs[q] = theta.segment(q * m, m);
  return inputs;
}

}  // namespace

MpcSolution fallback_solution(const MpcProblem& problem, const Vector& x_k, long k) {
  const SolveContext context(problem, x_k, k);
  const auto& refs = context.refs();
  const long n = context.input_count();

  GeodesicOptions geo;
  geo.segments = problem.options.geodesic_segments;
  geo.relaxed = true;

  std::vector<Vector> inputs;
  inputs.reserve(n);
  Vector x = x_k;
  for (long q = 0; q < n; ++q) {
    const int seg = problem.schedule.segment_of(q);
    const auto& model = problem.models[seg];
    const Vector u = feedback_control(problem.certificates[seg], model, x, refs[q].x_star,
                                      refs[q].u_star, geo);
    inputs.push_back(u);
    x = problem.state_box.clamp(step(model, x, u, problem.schedule.segments[seg].tau));
  }

  const auto ev = context.evaluate(inputs, true, /*exact=*/true);
  MpcSolution solution;
  solution.inputs = std::move(inputs);
  solution.states = ev.states;
  solution.residuals = ev.residuals;
  solution.cost = ev.cost;
  solution.state_escape = ev.state_escape;
  solution.status = SolveStatus::kInfeasibleFallback;
  return solution;
}

MpcSolution solve(const MpcProblem& problem, const Vector& x_k, long k,
                  const MpcSolution* warm_start) {
  const auto t_begin = std::chrono::steady_clock::now();
  if (!problem.state_box.contains(x_k, 1e-9))
    throw DomainError("solve: measured state outside the state box");

  const SolveContext context(problem, x_k, k);
  const long n = context.input_count();
  const int m = problem.models.front().input_dim;
  const auto& opts = problem.options;

  MpcSolution fallback = fallback_solution(problem, x_k, k);

  std::vector<std::vector<Vector>> seeds;
  int fallback_seed_index = -1;
  if (opts.use_warm_start && warm_start) {
    const auto& warm = warm_start->warm_inputs.empty() ? warm_start->inputs
                                                       : warm_start->warm_inputs;
    if (static_cast<long>(warm.size()) == n) seeds.push_back(warm);
  }
  fallback_seed_index = static_cast<int>(seeds.size());
  seeds.push_back(fallback.inputs);
  {
    std::vector<Vector> reference_inputs;
    reference_inputs.reserve(n);
    for (long q = 0; q < n; ++q) reference_inputs.push_back(context.refs()[q].u_star);
    seeds.push_back(std::move(reference_inputs));
  }
  seeds.push_back(context.greedy_seed());

  struct SeedResult {
    std::vector<Vector> inputs;
    SolveContext::Evaluation ev;
    bool feasible = false;
    bool converged = false;
  };
  std::optional<SeedResult> best;
  int total_iterations = 0;

  const auto run_inner = [&](Vector theta, double mu, const Vector& lambda, int iterations,
                             bool* converged) {
    const auto objective = [&](const Vector& candidate) {
      return context.penalty_value(unflatten(candidate, n, m), mu, lambda);
    };
    QuasiNewtonOptions qn;
    qn.max_iterations = iterations;
    qn.fd_step = opts.fd_step;
    qn.gradient_tol = opts.gradient_tol;
    qn.step_cap = 2.0;
    qn.gradient = [&](const Vector& candidate) {
      return context.penalty_gradient(candidate, mu, lambda, opts.fd_step);
    };
    const QuasiNewtonResult inner = bfgs_minimize(objective, theta, qn);
    if (converged) *converged = inner.converged;
    total_iterations += inner.iterations;
    return inner.x;
  };

  const double mu_cap =
      opts.penalty_initial * std::pow(opts.penalty_growth, opts.penalty_rounds - 1);

  static const bool debug_rounds = std::getenv("CTMPC_DEBUG_SOLVE") != nullptr;

  int seed_index = -1;
  for (const auto& seed : seeds) {
    ++seed_index;
    Vector theta = flatten(seed);
    bool converged = false;
    bool settled = false;
    Vector lambda = Vector::Zero(n);

    // a feasible seed is already a valid (unoptimized) candidate; rounds can
    // bounce off the constraint boundary without recovering it. The fallback
    // plan is deliberately excluded so the infeasible-fallback status keeps
    // meaning "nothing beat the safety controller".
    if (seed_index != fallback_seed_index) {
      SeedResult plain;
      plain.inputs = seed;
      for (auto& u : plain.inputs) u = problem.input_box.clamp(u);
      plain.ev = context.evaluate(plain.inputs, true, /*exact=*/true);
      plain.feasible = context.feasible(plain.ev);
      if (debug_rounds) {
        std::fprintf(stderr, "  seed %d plain: feasible %d cost %.4f max_r %.3e\n", seed_index,
                     plain.feasible, plain.ev.cost, plain.ev.max_residual);
      }
      if (plain.feasible && (!best || plain.ev.cost < best->ev.cost)) best = std::move(plain);
    }
    double mu = opts.penalty_initial;
    double previous_violation = std::numeric_limits<double>::infinity();
    bool previous_feasible = false;
    double previous_cost = std::numeric_limits<double>::infinity();

    // prime the path caches at the seed; each round-end evaluation below
    // re-descends them at the new iterate
    context.evaluate(unflatten(theta, n, m), false, /*exact=*/true);
    // multiplier rounds: the contraction constraints enter through their
    // multiplier estimates, the penalty weight grows only when the worst
    // violation stalls; three short polish rounds follow the budgeted ones.
    // The iterate can bounce around the constraint boundary between rounds,
    // so the best feasible round result is kept, not the last one.
    std::optional<Vector> best_feasible_theta;
    double best_feasible_cost = std::numeric_limits<double>::infinity();
    const int budget_rounds = opts.penalty_rounds;
    for (int round = 0; round < budget_rounds + 6; ++round) {
      const int iterations = round < budget_rounds ? opts.max_inner_iterations : 50;
      theta = run_inner(theta, mu, lambda, iterations, &converged);

      const auto ev = context.evaluate(unflatten(theta, n, m), true, /*exact=*/true);
      for (long q = 0; q < n; ++q)
        lambda[q] = std::max(0.0, lambda[q] + mu * ev.residuals[q]);
      const bool feasible = context.feasible(ev);
      if (debug_rounds) {
        std::fprintf(stderr,
                     "  seed %d round %d: mu %.1e cost %.4f max_r %.3e sviol %.2e iviol %.2e\n",
                     seed_index, round, mu, ev.cost, ev.max_residual, ev.max_state_violation,
                     ev.max_input_violation);
      }
      if (feasible && ev.cost < best_feasible_cost) {
        best_feasible_cost = ev.cost;
        best_feasible_theta = theta;
      }
      if (feasible && previous_feasible &&
          std::abs(ev.cost - previous_cost) <= 1e-7 * std::max(1.0, std::abs(ev.cost))) {
        settled = true;
        break;
      }
      const double violation =
          std::max({ev.max_residual, ev.max_state_violation, ev.max_input_violation, 0.0});
      if (violation > problem.options.residual_tol && violation > 0.25 * previous_violation)
        mu = std::min(mu * opts.penalty_growth, mu_cap);
      previous_violation = violation;
      previous_feasible = feasible;
      previous_cost = ev.cost;
    }

    // prefer the best feasible round result; snap penalty-level overshoots
    // of the input box back onto it
    for (const Vector* candidate :
         {best_feasible_theta ? &*best_feasible_theta : nullptr, &theta}) {
      if (!candidate) continue;
      std::vector<Vector> inputs = unflatten(*candidate, n, m);
      for (auto& u : inputs) u = problem.input_box.clamp(u);
      SeedResult result;
      result.ev = context.evaluate(inputs, true, /*exact=*/true);
      result.inputs = std::move(inputs);
      result.feasible = context.feasible(result.ev);
      result.converged = converged || settled;
      if (result.feasible && (!best || result.ev.cost < best->ev.cost))
        best = std::move(result);
    }
  }

  MpcSolution solution;
  if (best) {
    solution.inputs = std::move(best->inputs);
    solution.states = std::move(best->ev.states);
    solution.residuals = std::move(best->ev.residuals);
    solution.cost = best->ev.cost;
    solution.state_escape = best->ev.state_escape;
    solution.status = best->converged ? SolveStatus::kOptimal : SolveStatus::kMaxIterations;
  } else {
    const auto fallback_ev = context.evaluate(fallback.inputs, false, /*exact=*/true);
    if (!context.feasible(fallback_ev)) {
      std::ostringstream msg;
      msg << "contraction-constrained problem infeasible and the integrated-feedback fallback "
             "violates the residual tolerance (worst residual "
          << fallback_ev.max_residual << ")";
      throw FallbackInfeasibleError(msg.str(), fallback_ev.max_residual);
    }
    solution = std::move(fallback);
  }
  solution.iterations = total_iterations;
  solution.solve_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_begin)
          .count();
  return solution;
}

std::pair<Vector, MpcSolution> receding_step(const MpcProblem& problem, const Vector& x_k, long k,
                                             const MpcSolution* warm_start) {
  MpcSolution solution = solve(problem, x_k, k, warm_start);
  const Vector applied = problem.input_box.clamp(solution.inputs.front());

  // shift the fine segment by one step; coarse entries carry over unshifted
  std::vector<Vector> warm = solution.inputs;
  const int fine_steps = problem.schedule.segments.front().steps;
  for (int j = 0; j + 1 < fine_steps; ++j) warm[j] = solution.inputs[j + 1];
  const double tail_time = static_cast<double>(k + 1) * problem.schedule.tau_delta +
                           problem.schedule.node_time(fine_steps - 1);
  warm[fine_steps - 1] = problem.plan.at_held(tail_time).u_star;
  solution.warm_inputs = std::move(warm);

  return {applied, std::move(solution)};
}

AuditReport audit_solution(const MpcProblem& problem, const Vector& x_k, long k,
                           const MpcSolution& solution) {
  AuditReport report;
  const auto refs = reference_prediction(problem, k);

  bool escape = false;
  const auto states = predict(problem, x_k, solution.inputs, &escape);
  report.state_mismatch = 0.0;
  for (size_t q = 0; q < states.size() && q < solution.states.size(); ++q) {
    report.state_mismatch = std::max(report.state_mismatch,
                                     (states[q] - solution.states[q]).lpNorm<Eigen::Infinity>());
  }

  GeodesicOptions geo;
  geo.segments = problem.options.geodesic_segments;
  geo.relaxed = true;
  report.max_residual = -std::numeric_limits<double>::infinity();
  Vector x = x_k;
  for (long q = 0; q < problem.schedule.total_inputs(); ++q) {
    const int seg = problem.schedule.segment_of(q);
    const auto& model = problem.models[seg];
    const double r = constraint_residual(problem.certificates[seg], model, x, refs[q].x_star,
                                         solution.inputs[q], refs[q].u_star, geo);
    report.max_residual = std::max(report.max_residual, r);
    report.max_input_violation =
        std::max(report.max_input_violation, problem.input_box.violation(solution.inputs[q]));
    // box compliance is judged on the raw one-step image, before any clamp
    const Vector raw = step(model, x, solution.inputs[q], problem.schedule.segments[seg].tau);
    report.max_state_violation =
        std::max(report.max_state_violation, problem.state_box.violation(raw));
    x = problem.state_box.clamp(raw);
  }

  report.ok = report.state_mismatch <= 1e-9 &&
              report.max_residual <= problem.options.residual_tol &&
              report.max_state_violation <= problem.options.box_tol &&
              report.max_input_violation <= problem.options.box_tol;
  return report;
}

}  // namespace ctmpc
