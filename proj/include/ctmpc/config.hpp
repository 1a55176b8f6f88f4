// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctmpc/contraction.hpp"
#include "ctmpc/mpc.hpp"
#include "ctmpc/model.hpp"
#include "ctmpc/sim.hpp"

namespace ctmpc {

struct CertificateSource {
  double tau = 1.0;
  std::string file;  // set for file-backed certificates
  bool synthesize_inline = false;
  double beta = 0.3;
  int degree = 0;
  CertificateGrid grid;
  double margin_eta = 1e-4;
  // offline constraint sampling folded into the synthesis search
  std::vector<FeasibilityWitness> witnesses;
  double witness_slack = 1e-3;
  int starts = 8;
  int max_iterations = 400;
};

struct BenchVariantSpec {
  std::string label;
  std::vector<std::pair<double, int>> segments;
};

/// One structured configuration file drives every CLI command; all values
/// have committed defaults matching the coupled-tank study.
struct ScenarioConfig {
  std::string plant_type = "tank";  // "tank" or "polynomial"
  std::string plant_file;           // polynomial model file
  TankParameters tank;

  double tau_delta = 1.0;
  std::vector<std::pair<double, int>> segments;

  std::vector<CertificateSource> certificates;
  std::vector<PlanTargetSpec> plan_targets;

  std::string cost_type = "input_energy";  // or "quadratic_tracking"
  Vector cost_q_diag;
  Vector cost_r_diag;

  SolverOptions solver;

  double horizon = 120.0;
  Vector x0;

  int bench_repetitions = 3;
  double bench_horizon = -1.0;  // < 0: use the simulation horizon
  std::vector<BenchVariantSpec> bench_variants;

  std::string output_dir = "out";
  unsigned seed = 1;
};

ScenarioConfig load_config(const std::string& path);
ScenarioConfig parse_config(const std::string& text);
/// Canonical serialization; parsing then re-serializing is idempotent.
std::string serialize_config(const ScenarioConfig& config);

/// Structural validation beyond parsing (schedule arithmetic, certificate
/// coverage per distinct timescale, plan coverage of the horizon).
void validate_config(const ScenarioConfig& config);

SystemModel build_plant(const ScenarioConfig& config, const std::string& config_dir);

/// Loads file-backed certificates (paths relative to the config directory)
/// and synthesizes inline-specified ones. Checks timescale and dimension
/// agreement with the schedule and plant.
std::vector<ContractionCertificate> resolve_certificates(const ScenarioConfig& config,
                                                         const SystemModel& model,
                                                         const std::string& config_dir);

ReferencePlan build_plan(const ScenarioConfig& config, const SystemModel& model);

/// Controller for an explicit segment list, pulling the matching certificate
/// per segment timescale from `certificates`.
MpcProblem build_problem(const ScenarioConfig& config, const SystemModel& model,
                         const std::vector<ContractionCertificate>& certificates,
                         const std::vector<std::pair<double, int>>& segments);

SystemModel load_polynomial_model(const std::string& path);

void write_plot_script(const std::string& script_path, const std::string& csv_name);

}  // namespace ctmpc
