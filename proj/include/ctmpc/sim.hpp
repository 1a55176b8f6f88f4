// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <string>
#include <vector>

#include "ctmpc/mpc.hpp"
#include "ctmpc/types.hpp"

namespace ctmpc {

/// Closed-loop record at the physical sampling period: T/tau_delta + 1
/// states, T/tau_delta of everything applied per step.
struct SimulationTrace {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> inputs;
  std::vector<Vector> ref_states;
  std::vector<Vector> ref_inputs;
  std::vector<double> residuals;  // applied-step contraction residual at tau_delta
  std::vector<double> solve_ms;
  std::vector<SolveStatus> statuses;
  bool aborted = false;
  std::string abort_reason;

  double tracking_rms() const;
  double input_energy() const;
};

/// Alternates one MPC solve and one plant step per sampling period,
/// recording the trace; aborts with a partial trace when the solver and its
/// fallback are both infeasible.
SimulationTrace run_closed_loop(const SystemModel& plant, const MpcProblem& controller,
                                const ReferencePlan& plan, double horizon, const Vector& x0);

struct BenchmarkVariant {
  std::string label;
  MpcProblem problem;
};

struct BenchmarkRow {
  std::string label;
  long k_hat = 0;
  long n_decisions = 0;
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double rms_error = 0.0;
  bool failed = false;
  std::string status;
};

/// Repeats each variant's closed loop `repetitions` times (>= 3), collecting
/// per-step solve times with the warm-up step excluded. Variants may fan out
/// over `workers` threads; repetitions of one variant stay sequential.
std::vector<BenchmarkRow> benchmark(const std::vector<BenchmarkVariant>& variants,
                                    const SystemModel& plant, const ReferencePlan& plan,
                                    double horizon, const Vector& x0, int repetitions,
                                    int workers = 1);

void write_trace_csv(const SimulationTrace& trace, const std::string& path);
void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, const std::string& path);

extern const char* const kTraceCsvHeader;
extern const char* const kBenchmarkCsvHeader;

}  // namespace ctmpc
