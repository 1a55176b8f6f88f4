// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

// End-to-end acceptance suite for the coupled-tank study: every criterion
// prints one PASS/FAIL line; the process exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ctmpc/config.hpp"
#include "ctmpc/contraction.hpp"
#include "ctmpc/errors.hpp"
#include "ctmpc/model.hpp"
#include "ctmpc/mpc.hpp"
#include "ctmpc/riemann.hpp"
#include "ctmpc/sim.hpp"

using namespace ctmpc;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool passed, const std::string& detail) {
  std::printf("[%s] %2d. %-28s %s\n", passed ? "PASS" : "FAIL", index, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!passed) ++failures;
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buffer[256];
  std::snprintf(buffer, sizeof(buffer), pattern, a, b, c);
  return buffer;
}

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Study {
  ScenarioConfig config;
  SystemModel tank;
  std::vector<ContractionCertificate> certificates;
  std::vector<double> synthesis_seconds;
  std::vector<VerificationReport> reports;
  ReferencePlan plan;
};

}  // namespace

int main() {
  std::printf("acceptance: coupled-tank contraction-constrained MPC study\n");

  Study study;
  study.config = load_config(CTMPC_STUDY_CONFIG);
  validate_config(study.config);
  study.tank = build_plant(study.config, ".");

  // --- 1: horizon arithmetic -------------------------------------------
  {
    const auto t0 = std::chrono::steady_clock::now();
    const TimescaleSchedule example = build_schedule(1.0, {{1.0, 1}, {5.0, 1}});
    const TimescaleSchedule studyh = build_schedule(1.0, {{1.0, 1}, {10.0, 3}});
    const double elapsed = seconds_since(t0);
    const bool pass = example.predicted_steps() == 6 && studyh.predicted_steps() == 31 &&
                      studyh.total_inputs() == 4 && elapsed < 0.01;
    report(1, "horizon arithmetic",
           pass, fmt("k_hat = 6 and 31 exactly in %.4fs", elapsed));
  }

  // --- 2: certificate synthesis ----------------------------------------
  {
    bool pass = true;
    std::string detail;
    for (const auto& source : study.config.certificates) {
      SynthesisProblem problem;
      problem.model = &study.tank;
      problem.tau = source.tau;
      problem.beta = source.beta;
      problem.degree = source.degree;
      problem.grid = source.grid;
      problem.margin_eta = source.margin_eta;
      problem.seed = study.config.seed;
      problem.witnesses = source.witnesses;
      problem.witness_slack = source.witness_slack;
      problem.starts = source.starts;
      problem.max_iterations = source.max_iterations;

      const auto t0 = std::chrono::steady_clock::now();
      try {
        study.certificates.push_back(synthesize(problem));
      } catch (const SynthesisError& err) {
        report(2, "certificate synthesis", false,
               std::string("synthesis failed: ") + err.what());
        return 1;
      }
      const double elapsed = seconds_since(t0);
      study.synthesis_seconds.push_back(elapsed);

      const VerificationReport dense =
          verify(study.certificates.back(), study.tank, source.grid.refined());
      study.reports.push_back(dense);
      pass = pass && dense.passed() && dense.worst_margin <= -1e-4 && elapsed < 60.0 &&
             dense.points_checked == 41 * 41;
      detail += fmt("tau=%g: margin %.2e in %.0fs  ", source.tau, dense.worst_margin, elapsed);
    }
    report(2, "certificate synthesis", pass, detail);
  }
  study.plan = build_plan(study.config, study.tank);

  // --- 3: Schur equivalence --------------------------------------------
  {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> normal(0.0, 0.8);
    std::uniform_real_distribution<double> eig(0.2, 3.0);
    std::uniform_real_distribution<double> beta_draw(0.05, 1.0);
    auto random_spd = [&](int n) {
      Matrix raw(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) raw(i, j) = normal(rng);
      const Matrix q = Eigen::HouseholderQR<Matrix>(raw).householderQ();
      Vector d(n);
      for (int i = 0; i < n; ++i) d[i] = eig(rng);
      return Matrix(q * d.asDiagonal() * q.transpose());
    };
    int checked = 0, counterexamples = 0;
    while (checked < 120) {
      const int n = 2 + checked % 3;
      const int m = 1 + checked % 2;
      Matrix a(n, n), b(n, m), l(m, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = normal(rng);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) b(i, j) = normal(rng);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) l(i, j) = 0.5 * normal(rng);
      const Matrix w = random_spd(n), w_plus = random_spd(n);
      const double beta = beta_draw(rng);
      const double lmi = lmi_margin(w, l, a, b, w_plus, beta);
      const Matrix metric = w.inverse(), metric_plus = w_plus.inverse();
      const double eq13 =
          contraction_margin(a, b, l * metric, 0.5 * (metric + metric.transpose()),
                             0.5 * (metric_plus + metric_plus.transpose()), beta);
      if (std::abs(lmi) < 1e-12 || std::abs(eq13) < 1e-12) continue;
      if ((lmi > 0.0) != (eq13 < 0.0)) ++counterexamples;
      ++checked;
    }
    report(3, "Schur equivalence", counterexamples == 0,
           fmt("%.0f random instances, %.0f counterexamples", checked, counterexamples));
  }

  // --- 4: incremental stability envelope --------------------------------
  {
    bool pass = true;
    std::string detail;
    std::mt19937_64 rng(43);
    for (size_t c = 0; c < study.certificates.size(); ++c) {
      const auto& cert = study.certificates[c];
      const MetricFunction metric = MetricFunction::from_certificate(cert);
      const Box& region = cert.grid().states;
      std::uniform_real_distribution<double> target_draw(std::max(region.lo[0], 2.5),
                                                         std::min(region.hi[0], 7.5));
      std::uniform_real_distribution<double> offset(-1.2, 1.2);
      const double decay = cert.decay_factor();
      const double overshoot = cert.overshoot();
      int pairs = 0, ratio_bad = 0, envelope_bad = 0, tries = 0;
      const auto t0 = std::chrono::steady_clock::now();
      while (pairs < 20 && tries < 400) {
        ++tries;
        const double level = target_draw(rng);
        const Vector x_star = vec2(level, level);
        const Vector u_star = steady_state_input(study.tank, x_star, cert.tau());
        Vector x = region.clamp(vec2(level + offset(rng), level + offset(rng)));
        bool saturated = false;
        feedback_control(cert, study.tank, x, x_star, u_star, {}, &saturated);
        if (saturated) continue;
        ++pairs;
        const double initial_gap = (x - x_star).norm();
        double d = riemannian_distance(metric, x, x_star);
        for (int k = 1; k <= 10; ++k) {
          bool sat = false;
          const Vector u = feedback_control(cert, study.tank, x, x_star, u_star, {}, &sat);
          if (sat) break;
          x = step(study.tank, x, u, cert.tau());
          if (!region.contains(x, 1e-9)) break;
          const double d_next = riemannian_distance(metric, x, x_star);
          if (d > 1e-12 && d_next > decay * d + 1e-6) ++ratio_bad;
          d = d_next;
          const double bound =
              overshoot * std::pow(decay, k) * initial_gap * (1.0 + 1e-6) + 1e-12;
          if ((x - x_star).norm() > bound) ++envelope_bad;
          if (d < 1e-10) break;
        }
      }
      pass = pass && pairs >= 20 && ratio_bad == 0 && envelope_bad == 0 &&
             seconds_since(t0) < 30.0;
      detail += fmt("tau=%g: %.0f pairs", cert.tau(), static_cast<double>(pairs)) +
                fmt(", %.0f ratio / %.0f envelope violations  ", ratio_bad, envelope_bad);
    }
    report(4, "incremental stability", pass, detail);
  }

  // --- 5: constraint-set non-emptiness ----------------------------------
  {
    bool pass = true;
    std::string detail;
    for (const auto& cert : study.certificates) {
      CertificateGrid sampling = cert.grid();
      sampling.states_per_dim = 21;
      const auto states = sampling.state_points();
      int unsaturated = 0, violations = 0;
      double worst = -1.0;
      for (const auto& target : study.plan.segments()) {
        const Vector u_star = steady_state_input(study.tank, target.x_star, cert.tau());
        for (const auto& x : states) {
          bool saturated = false;
          const Vector u =
              feedback_control(cert, study.tank, x, target.x_star, u_star, {}, &saturated);
          if (saturated) continue;
          ++unsaturated;
          const double r = constraint_residual(cert, study.tank, x, target.x_star, u, u_star);
          worst = std::max(worst, r);
          if (r > 1e-8) ++violations;
        }
      }
      pass = pass && violations == 0 && unsaturated > 100;
      detail += fmt("tau=%g: %.0f samples, worst r %.1e  ", cert.tau(),
                    static_cast<double>(unsaturated), worst);
    }
    report(5, "constraint sampling", pass, detail);
  }

  // --- 6: tracking reproduction -----------------------------------------
  SimulationTrace trace;
  MpcProblem controller;
  {
    controller = build_problem(study.config, study.tank, study.certificates,
                               study.config.segments);
    const auto t0 = std::chrono::steady_clock::now();
    trace = run_closed_loop(study.tank, controller, study.plan, study.config.horizon,
                            study.config.x0);
    const double elapsed = seconds_since(t0);

    bool pass = !trace.aborted && trace.states.size() == 121 && elapsed < 300.0;
    double worst_tail_error = 0.0, worst_residual = -1.0;
    for (size_t i = 0; i < trace.states.size(); ++i) {
      const double t = trace.times[i];
      const bool tail = (t >= 30.0 && t < 40.0) || (t >= 70.0 && t < 80.0) || t >= 110.0;
      if (tail) {
        worst_tail_error = std::max(
            worst_tail_error, (trace.states[i] - trace.ref_states[i]).lpNorm<Eigen::Infinity>());
      }
    }
    for (size_t i = 0; i < trace.inputs.size(); ++i) {
      pass = pass && trace.inputs[i][0] >= 0.0 && trace.inputs[i][0] <= 10.0;
      worst_residual = std::max(worst_residual, trace.residuals[i]);
    }
    pass = pass && worst_tail_error < 0.1 && worst_residual <= 1e-6;
    report(6, "tracking reproduction", pass,
           fmt("tail error %.3f cm, worst residual %.2e, %.0fs", worst_tail_error,
               worst_residual, elapsed));
  }

  // --- 7: computation-time ordering --------------------------------------
  {
    std::vector<BenchmarkVariant> variants;
    for (const auto& spec : study.config.bench_variants) {
      variants.push_back(
          {spec.label, build_problem(study.config, study.tank, study.certificates,
                                     spec.segments)});
    }
    const double horizon = study.config.bench_horizon >= 0.0 ? study.config.bench_horizon
                                                             : study.config.horizon;
    const auto rows = benchmark(variants, study.tank, study.plan, horizon, study.config.x0,
                                study.config.bench_repetitions);
    bool pass = rows.size() == 2 && !rows[0].failed && !rows[1].failed;
    double ratio = 0.0;
    if (pass) {
      pass = rows[0].k_hat == 31 && rows[1].k_hat == 31 && rows[0].n_decisions == 4 &&
             rows[1].n_decisions == 31;
      ratio = rows[1].median_ms / rows[0].median_ms;
      pass = pass && rows[0].median_ms < rows[1].median_ms && ratio >= 1.5;
    }
    report(7, "computation-time ordering", pass,
           fmt("multi %.1f ms vs single %.1f ms per step, ratio %.1fx",
               rows[0].median_ms, rows[1].median_ms, ratio));
  }

  // --- 8: geodesic correctness --------------------------------------------
  {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> coord(-2.0, 2.0);
    bool pass = true;

    const MetricFunction identity = MetricFunction::constant(Matrix::Identity(2, 2));
    pass = pass && std::abs(riemannian_distance(identity, vec2(1, 1), vec2(4, 5)) - 5.0) < 1e-9;

    Matrix m(2, 2);
    m << 2.0, 0.3, 0.3, 1.2;
    const MetricFunction constant = MetricFunction::constant(m);
    for (int trial = 0; trial < 20 && pass; ++trial) {
      const Vector a = vec2(coord(rng), coord(rng)), b = vec2(coord(rng), coord(rng));
      const GeodesicPath path = geodesic(constant, a, b);
      const Vector delta = b - a;
      pass = pass && std::abs(path.energy - delta.dot(m * delta)) < 1e-9;
    }

    const MetricFunction curved = MetricFunction::from([](const Vector& x) {
      Matrix value = Matrix::Identity(2, 2);
      value(0, 0) = 1.0 + x[0] * x[0];
      return value;
    });
    int ordering_failures = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const Vector a = vec2(coord(rng), coord(rng)), b = vec2(coord(rng), coord(rng));
      const GeodesicPath best = geodesic(curved, a, b);
      GeodesicPath straight;
      for (int i = 0; i <= 16; ++i)
        straight.samples.push_back(a + (b - a) * (i / 16.0));
      if (best.length > path_length(curved, straight) + 1e-9) ++ordering_failures;
    }
    pass = pass && ordering_failures == 0;
    report(8, "geodesic correctness", pass,
           fmt("%.0f ordering failures over 50 curved pairs",
               static_cast<double>(ordering_failures)));
  }

  // --- 9: jacobian consistency --------------------------------------------
  {
    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> level(0.3, 9.7);
    std::uniform_real_distribution<double> volt(0.0, 10.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Vector x = vec2(level(rng), level(rng));
      const Vector u = Vector::Constant(1, volt(rng));
      const double tau = trial % 2 ? 10.0 : 1.0;
      const Matrix analytic = jacobians(study.tank, x, u, tau).first;
      Matrix fd(2, 2);
      for (int j = 0; j < 2; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        fd.col(j) = (step(study.tank, xp, u, tau) - step(study.tank, xm, u, tau)) / (2 * h);
      }
      worst = std::max(worst, (analytic - fd).lpNorm<Eigen::Infinity>() /
                                  analytic.lpNorm<Eigen::Infinity>());
    }
    report(9, "jacobian consistency", worst < 1e-5, fmt("worst relative error %.2e", worst));
  }

  // --- 10: solution audit ---------------------------------------------------
  {
    Vector x = study.config.x0;
    MpcSolution warm;
    bool have_warm = false;
    int audited = 0, audit_failures = 0;
    const long steps = std::lround(study.config.horizon / study.config.tau_delta);
    bool aborted = false;
    for (long k = 0; k < steps; ++k) {
      try {
        auto [applied, solution] = receding_step(controller, x, k, have_warm ? &warm : nullptr);
        if (solution.status == SolveStatus::kOptimal) {
          ++audited;
          const AuditReport audit = audit_solution(controller, x, k, solution);
          if (!audit.ok) ++audit_failures;
        }
        x = study.tank.state_box.clamp(step(study.tank, x, applied, study.config.tau_delta));
        warm = std::move(solution);
        have_warm = true;
      } catch (const FallbackInfeasibleError&) {
        aborted = true;
        break;
      }
    }
    report(10, "solution audit", !aborted && audit_failures == 0 && audited > 0,
           fmt("%.0f optimal solutions audited, %.0f failures", static_cast<double>(audited),
               static_cast<double>(audit_failures)));
  }

  std::printf("%s: %d criterion failure%s\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures,
              failures == 1 ? "" : "s");
  return failures == 0 ? 0 : 1;
}
