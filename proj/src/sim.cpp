// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#include "ctmpc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include "ctmpc/errors.hpp"
#include "ctmpc/riemann.hpp"

namespace ctmpc {

const char* const kTraceCsvHeader = "t,x1,x2,u,x1_ref,x2_ref,u_ref,residual,solve_ms,status";
const char* const kBenchmarkCsvHeader = "label,k_hat,n_decisions,median_ms,mean_ms,rms_error";

double SimulationTrace::tracking_rms() const {
  if (states.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < states.size(); ++i) sum += (states[i] - ref_states[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(states.size()));
}

double SimulationTrace::input_energy() const {
  double sum = 0.0;
  for (const auto& u : inputs) sum += u.squaredNorm();
  return sum;
}

SimulationTrace run_closed_loop(const SystemModel& plant, const MpcProblem& controller,
                                const ReferencePlan& plan, double horizon, const Vector& x0) {
  validate_problem(controller);
  if (!plant.state_box.contains(x0, 1e-9))
    throw DomainError("closed loop: initial state outside the state box");
  const double tau_delta = controller.schedule.tau_delta;
  if (horizon < 0.0) throw DomainError("closed loop: negative horizon");
  const long steps = std::lround(horizon / tau_delta);
  if (plan.t_begin() > 0.0 || plan.t_end() < horizon - 1e-9)
    throw OutOfWindowError("closed loop: the plan does not cover the simulation window");

  // certificate at the physical sampling period, used for the applied-step
  // residual record
  const ContractionCertificate* applied_cert = nullptr;
  for (const auto& cert : controller.certificates) {
    if (std::abs(cert.tau() - tau_delta) < 1e-12) {
      applied_cert = &cert;
      break;
    }
  }

  GeodesicOptions geo;
  geo.segments = controller.options.geodesic_segments;
  geo.relaxed = true;

  SimulationTrace trace;
  Vector x = x0;
  MpcSolution warm;
  bool have_warm = false;

  const auto record_reference = [&](double t) {
    const PlanSegment& seg = plan.at(t);
    trace.ref_states.push_back(seg.x_star);
    trace.ref_inputs.push_back(seg.u_star);
  };

  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * tau_delta;
    trace.times.push_back(t);
    trace.states.push_back(x);
    record_reference(t);

    Vector u;
    try {
      auto [applied, solution] = receding_step(controller, x, k, have_warm ? &warm : nullptr);
      u = applied;
      warm = std::move(solution);
      have_warm = true;
    } catch (const FallbackInfeasibleError& err) {
      trace.aborted = true;
      trace.abort_reason = err.what();
      // partial trace: drop the half-recorded step head
      trace.times.pop_back();
      trace.states.pop_back();
      trace.ref_states.pop_back();
      trace.ref_inputs.pop_back();
      return trace;
    }

    const double residual = applied_cert
                                ? constraint_residual(*applied_cert, plant, x,
                                                      trace.ref_states.back(), u,
                                                      trace.ref_inputs.back(), geo)
                                : std::numeric_limits<double>::quiet_NaN();

    trace.inputs.push_back(u);
    trace.residuals.push_back(residual);
    trace.solve_ms.push_back(warm.solve_ms);
    trace.statuses.push_back(warm.status);

    x = plant.state_box.clamp(step(plant, x, u, tau_delta));
  }

  // trailing state row
  trace.times.push_back(static_cast<double>(steps) * tau_delta);
  trace.states.push_back(x);
  record_reference(static_cast<double>(steps) * tau_delta);
  return trace;
}

namespace {

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

BenchmarkRow run_variant(const BenchmarkVariant& variant, const SystemModel& plant,
                         const ReferencePlan& plan, double horizon, const Vector& x0,
                         int repetitions) {
  BenchmarkRow row;
  row.label = variant.label;
  row.k_hat = variant.problem.schedule.predicted_steps();
  row.n_decisions =
      variant.problem.schedule.total_inputs() * variant.problem.models.front().input_dim;
  try {
    std::vector<double> samples;
    double rms = 0.0;
    for (int rep = 0; rep < repetitions; ++rep) {
      const SimulationTrace trace = run_closed_loop(plant, variant.problem, plan, horizon, x0);
      if (trace.aborted) throw FallbackInfeasibleError("variant aborted: " + trace.abort_reason, 0);
      // skip the cold warm-up solve of each repetition
      for (size_t i = 1; i < trace.solve_ms.size(); ++i) samples.push_back(trace.solve_ms[i]);
      rms = trace.tracking_rms();
    }
    row.median_ms = median(samples);
    double sum = 0.0;
    for (double s : samples) sum += s;
    row.mean_ms = samples.empty() ? 0.0 : sum / static_cast<double>(samples.size());
    row.rms_error = rms;
    row.status = "ok";
  } catch (const std::exception& err) {
    row.failed = true;
    row.status = err.what();
  }
  return row;
}

}  // namespace

std::vector<BenchmarkRow> benchmark(const std::vector<BenchmarkVariant>& variants,
                                    const SystemModel& plant, const ReferencePlan& plan,
                                    double horizon, const Vector& x0, int repetitions,
                                    int workers) {
  if (repetitions < 3) throw DomainError("benchmark: at least 3 repetitions required");
  std::vector<BenchmarkRow> rows(variants.size());
  if (workers <= 1) {
    for (size_t i = 0; i < variants.size(); ++i)
      rows[i] = run_variant(variants[i], plant, plan, horizon, x0, repetitions);
    return rows;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  const int thread_count = std::min<int>(workers, static_cast<int>(variants.size()));
  for (int t = 0; t < thread_count; ++t) {
    pool.emplace_back([&]() {
      for (size_t i = next.fetch_add(1); i < variants.size(); i = next.fetch_add(1))
        rows[i] = run_variant(variants[i], plant, plan, horizon, x0, repetitions);
    });
  }
  for (auto& worker : pool) worker.join();
  return rows;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_trace_csv(const SimulationTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace file: " + path);
  out << kTraceCsvHeader << "\n";
  for (size_t i = 0; i < trace.states.size(); ++i) {
    out << fmt(trace.times[i]);
    for (int d = 0; d < trace.states[i].size(); ++d) out << ',' << fmt(trace.states[i][d]);
    const bool has_step = i < trace.inputs.size();
    out << ',' << (has_step ? fmt(trace.inputs[i][0]) : "");
    for (int d = 0; d < trace.ref_states[i].size(); ++d) out << ',' << fmt(trace.ref_states[i][d]);
    out << ',' << fmt(trace.ref_inputs[i][0]);
    out << ',' << (has_step ? fmt(trace.residuals[i]) : "");
    out << ',' << (has_step ? fmt(trace.solve_ms[i]) : "");
    out << ',' << (has_step ? to_string(trace.statuses[i]) : "");
    out << "\n";
  }
}

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write benchmark file: " + path);
  out << kBenchmarkCsvHeader << "\n";
  for (const auto& row : rows) {
    out << row.label << ',' << row.k_hat << ',' << row.n_decisions << ',' << fmt(row.median_ms)
        << ',' << fmt(row.mean_ms) << ',' << fmt(row.rms_error) << "\n";
  }
}

}  // namespace ctmpc
