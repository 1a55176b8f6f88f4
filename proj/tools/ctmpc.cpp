// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ctmpc/config.hpp"
#include "ctmpc/errors.hpp"

namespace {

using namespace ctmpc;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitSynthesis = 2;
constexpr int kExitSimulation = 3;

struct CliState {
  std::string config_path;
  std::string out_dir;  // overrides config output_dir when set
  int seed = -1;        // overrides config seed when >= 0
  bool quiet = false;
};

int worker_count() {
  // CTMPC_WORKERS bounds bench fan-out; default 1 keeps runs deterministic
  const char* env = std::getenv("CTMPC_WORKERS");
  if (!env) return 1;
  const int workers = std::atoi(env);
  return workers > 0 ? workers : 1;
}

std::string tau_tag(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", tau);
  return buf;
}

struct Session {
  ScenarioConfig config;
  std::string config_dir;
  std::string out_dir;
};

Session open_session(const CliState& state) {
  Session session;
  session.config = load_config(state.config_path);
  if (state.seed >= 0) session.config.seed = static_cast<unsigned>(state.seed);
  if (!state.out_dir.empty()) session.config.output_dir = state.out_dir;
  validate_config(session.config);
  const size_t slash = state.config_path.find_last_of('/');
  session.config_dir = slash == std::string::npos ? "." : state.config_path.substr(0, slash);
  session.out_dir = session.config.output_dir;
  std::filesystem::create_directories(session.out_dir);
  return session;
}

void print_report(const std::string& label, const VerificationReport& report, bool quiet) {
  if (quiet) return;
  std::printf("%s: worst margin %.6g at (", label.c_str(), report.worst_margin);
  for (int i = 0; i < report.worst_state.size(); ++i)
    std::printf("%s%.4g", i ? ", " : "", report.worst_state[i]);
  std::printf("), metric bounds [%.6g, %.6g], %d points, %s\n", report.metric_lower,
              report.metric_upper, report.points_checked, report.passed() ? "PASS" : "FAIL");
}

int cmd_synthesize(const CliState& state) {
  Session session = open_session(state);
  const SystemModel model = build_plant(session.config, session.config_dir);

  bool all_passed = true;
  for (const auto& source : session.config.certificates) {
    if (!source.synthesize_inline) {
      if (!state.quiet)
        std::printf("tau=%s: file-backed (%s), skipping\n", tau_tag(source.tau).c_str(),
                    source.file.c_str());
      continue;
    }
    SynthesisProblem problem;
    problem.model = &model;
    problem.tau = source.tau;
    problem.beta = source.beta;
    problem.degree = source.degree;
    problem.grid = source.grid;
    problem.margin_eta = source.margin_eta;
    problem.seed = session.config.seed;
    problem.witnesses = source.witnesses;
    problem.witness_slack = source.witness_slack;
    problem.starts = source.starts;
    problem.max_iterations = source.max_iterations;

    const ContractionCertificate cert = synthesize(problem);
    const VerificationReport report = verify(cert, model, cert.grid().refined());
    const std::string path = session.out_dir + "/cert_tau" + tau_tag(source.tau) + ".json";
    save_certificate(cert, path);
    print_report("tau=" + tau_tag(source.tau) + " -> " + path, report, state.quiet);
    all_passed = all_passed && report.passed();
  }
  if (!all_passed) return kExitSynthesis;
  return kExitOk;
}

int cmd_verify(const CliState& state) {
  Session session = open_session(state);
  const SystemModel model = build_plant(session.config, session.config_dir);
  const auto certificates = resolve_certificates(session.config, model, session.config_dir);

  bool all_passed = true;
  for (const auto& cert : certificates) {
    const VerificationReport report = verify(cert, model, cert.grid().refined());
    print_report("tau=" + tau_tag(cert.tau()), report, state.quiet);
    all_passed = all_passed && report.passed();
  }
  return all_passed ? kExitOk : kExitSynthesis;
}

int cmd_run(const CliState& state) {
  Session session = open_session(state);
  const SystemModel plant = build_plant(session.config, session.config_dir);
  const auto certificates = resolve_certificates(session.config, plant, session.config_dir);
  const MpcProblem controller =
      build_problem(session.config, plant, certificates, session.config.segments);

  const SimulationTrace trace = run_closed_loop(plant, controller, controller.plan,
                                                session.config.horizon, session.config.x0);
  const std::string csv_path = session.out_dir + "/trace.csv";
  write_trace_csv(trace, csv_path);
  write_plot_script(session.out_dir + "/plot_trace.gp", "trace.csv");
  if (!state.quiet)
    std::printf("trace: %zu state rows -> %s\n", trace.states.size(), csv_path.c_str());
  if (trace.aborted) {
    std::fprintf(stderr, "simulation aborted: %s\n", trace.abort_reason.c_str());
    return kExitSimulation;
  }
  return kExitOk;
}

int cmd_bench(const CliState& state) {
  Session session = open_session(state);
  if (session.config.bench_variants.size() < 2)
    throw ConfigError("bench needs at least two variants to compare");
  const SystemModel plant = build_plant(session.config, session.config_dir);
  const auto certificates = resolve_certificates(session.config, plant, session.config_dir);

  std::vector<BenchmarkVariant> variants;
  for (const auto& spec : session.config.bench_variants) {
    variants.push_back(
        {spec.label, build_problem(session.config, plant, certificates, spec.segments)});
  }
  const ReferencePlan plan = build_plan(session.config, plant);
  const double horizon = session.config.bench_horizon >= 0.0 ? session.config.bench_horizon
                                                             : session.config.horizon;
  const auto rows = benchmark(variants, plant, plan, horizon, session.config.x0,
                              session.config.bench_repetitions, worker_count());

  const std::string csv_path = session.out_dir + "/benchmark.csv";
  write_benchmark_csv(rows, csv_path);

  if (!state.quiet) {
    std::printf("%-18s %-16s %-18s %-12s\n", "Method", "Predicted Steps", "Ave. Comp. Time",
                "Decisions");
    for (const auto& row : rows) {
      if (row.failed) {
        std::printf("%-18s %-16s %-18s %s\n", row.label.c_str(), "-", "-", row.status.c_str());
      } else {
        char khat[32], time[32];
        std::snprintf(khat, sizeof(khat), "k^ = %ld", row.k_hat);
        std::snprintf(time, sizeof(time), "%.3f ms", row.mean_ms);
        std::printf("%-18s %-16s %-18s %-12ld\n", row.label.c_str(), khat, time, row.n_decisions);
      }
    }
  }

  bool any_ok = false;
  for (const auto& row : rows) any_ok = any_ok || !row.failed;
  return any_ok ? kExitOk : kExitSimulation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contraction-constrained multi-timescale MPC"};
  app.require_subcommand(1);

  CliState state;
  app.add_option("--config", state.config_path, "scenario configuration file")
      ->required()
      ->each([](const std::string&) {});
  app.add_option("--out", state.out_dir, "output directory (overrides the config)");
  app.add_option("--seed", state.seed, "random seed (overrides the config)");
  app.add_flag("--quiet", state.quiet, "suppress progress output");

  auto* synthesize_cmd = app.add_subcommand("synthesize", "synthesize and verify certificates");
  auto* verify_cmd = app.add_subcommand("verify", "verify configured certificates");
  auto* run_cmd = app.add_subcommand("run", "run the closed-loop scenario");
  auto* bench_cmd = app.add_subcommand("bench", "compare controller variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synthesize_cmd->parsed()) return cmd_synthesize(state);
    if (verify_cmd->parsed()) return cmd_verify(state);
    if (run_cmd->parsed()) return cmd_run(state);
    if (bench_cmd->parsed()) return cmd_bench(state);
  } catch (const SynthesisError& err) {
    std::fprintf(stderr, "synthesis failed: %s\n", err.what());
    if (err.worst_state.size() > 0) {
      std::fprintf(stderr, "worst grid point: (");
      for (int i = 0; i < err.worst_state.size(); ++i)
        std::fprintf(stderr, "%s%.6g", i ? ", " : "", err.worst_state[i]);
      std::fprintf(stderr, ") with margin %.6g\n", err.achieved_margin);
    }
    return kExitSynthesis;
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kExitConfig;
  } catch (const FallbackInfeasibleError& err) {
    std::fprintf(stderr, "simulation aborted: %s\n", err.what());
    return kExitSimulation;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitConfig;
  }
  return kExitOk;
}
