// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

// Exit-code contract of the command-line tool, exercised against crafted
// configurations: 0 success, 1 config/validation, 2 synthesis failure,
// 3 simulation abort.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "ctmpc/contraction.hpp"
#include "ctmpc/model.hpp"
#include "ctmpc/poly.hpp"

using namespace ctmpc;

namespace {

const char* kCliPath = CTMPC_CLI_PATH;
const char* kStudyConfig = CTMPC_STUDY_CONFIG;

std::string sandbox() {
  static std::string dir = [] {
    std::string d = "cli_sandbox";
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args) {
  const std::string command = std::string(kCliPath) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WEXITSTATUS(status);
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string tiny_run_config(const std::string& cert_file, double horizon,
                            const std::string& extra = "") {
  return R"({
  "plant": {"type": "tank"},
  "schedule": {"tau_delta": 1.0, "segments": [{"tau": 1.0, "steps": 2}]},
  "certificates": [{"tau": 1.0, "file": ")" +
         cert_file + R"("}],
  "plan": [{"start": 0.0, "end": 200.0, "target": [3.0, 3.0]}],
  "simulation": {"horizon": )" +
         std::to_string(horizon) + R"(, "x0": [3.0, 3.0]})" + extra + R"(
})";
}

}  // namespace

TEST_CASE("cli exit codes across the contract") {
  const std::string dir = sandbox();

  // a small real certificate to drive run configs
  const SystemModel tank = make_tank_model();
  SynthesisProblem problem;
  problem.model = &tank;
  problem.tau = 1.0;
  problem.beta = 0.3;
  problem.degree = 0;
  problem.grid.states = Box(Vector::Constant(2, 0.25), Vector::Constant(2, 10.0));
  problem.grid.states_per_dim = 21;
  problem.grid.inputs = Box::cube(1, 0.0, 10.0);
  problem.grid.inputs_per_dim = 5;
  const ContractionCertificate cert = synthesize(problem);
  save_certificate(cert, dir + "/cert_ok.json");

  SUBCASE("0: a valid steady run succeeds and writes outputs") {
    write_file(dir + "/run_ok.json", tiny_run_config("cert_ok.json", 3.0));
    CHECK(run_cli("--config " + dir + "/run_ok.json --out " + dir + "/out_ok run") == 0);
    CHECK(std::filesystem::exists(dir + "/out_ok/trace.csv"));
    CHECK(std::filesystem::exists(dir + "/out_ok/plot_trace.gp"));
  }

  SUBCASE("1: malformed configuration") {
    write_file(dir + "/broken.json", "{ this is not json");
    CHECK(run_cli("--config " + dir + "/broken.json run") == 1);
  }

  SUBCASE("1: missing certificate file") {
    write_file(dir + "/missing_cert.json", tiny_run_config("no_such_cert.json", 3.0));
    CHECK(run_cli("--config " + dir + "/missing_cert.json run") == 1);
  }

  SUBCASE("1: bench needs at least two variants") {
    write_file(dir + "/bench_one.json",
               tiny_run_config("cert_ok.json", 3.0,
                               R"(,
  "bench": {"repetitions": 3, "variants": [
    {"label": "only", "segments": [{"tau": 1.0, "steps": 2}]}]})"));
    CHECK(run_cli("--config " + dir + "/bench_one.json bench") == 1);
  }

  SUBCASE("1: rejected contraction rate") {
    write_file(dir + "/bad_beta.json", R"({
  "plant": {"type": "tank"},
  "schedule": {"tau_delta": 1.0, "segments": [{"tau": 1.0, "steps": 2}]},
  "certificates": [{"tau": 1.0, "synthesize": {"beta": 0.0, "degree": 0,
    "grid": {"state_lo": [0.25, 0.25], "state_hi": [10, 10],
             "input_lo": [0], "input_hi": [10]}}}],
  "plan": [{"start": 0.0, "end": 200.0, "target": [3.0, 3.0]}],
  "simulation": {"horizon": 3.0, "x0": [3.0, 3.0]}
})");
    CHECK(run_cli("--config " + dir + "/bad_beta.json synthesize") == 1);
  }

  SUBCASE("2: synthesis failure on an uncontrollable unstable model") {
    write_file(dir + "/runaway.json", R"({
      "state_dim": 1, "input_dim": 1,
      "state_box": {"lo": [-5], "hi": [5]},
      "input_box": {"lo": [-10], "hi": [10]},
      "input_gain": [[0.0]],
      "equations": [ {"x1": 1.0} ]
    })");
    write_file(dir + "/synth_fail.json", R"({
  "plant": {"type": "polynomial", "file": "runaway.json"},
  "schedule": {"tau_delta": 1.0, "segments": [{"tau": 1.0, "steps": 2}]},
  "certificates": [{"tau": 1.0, "synthesize": {"beta": 0.3, "degree": 0,
    "grid": {"state_lo": [-5], "state_hi": [5], "states_per_dim": 11,
             "input_lo": [-10], "input_hi": [10], "inputs_per_dim": 3},
    "starts": 4, "max_iterations": 150}}],
  "plan": [{"start": 0.0, "end": 200.0, "target": [0.0]}],
  "simulation": {"horizon": 3.0, "x0": [0.0]}
})");
    CHECK(run_cli("--config " + dir + "/synth_fail.json synthesize") == 2);
  }

  SUBCASE("3: simulation abort with a partial trace") {
    // a deadbeat-rate certificate demands x+ = x*+ exactly; from off-target
    // states neither the optimizer nor the fallback can satisfy it
    ContractionCertificate impossible(cert.tau(), 1.0, cert.w(), cert.l(),
                                      cert.metric_lower(), cert.metric_upper(),
                                      cert.margin_eta(), cert.grid(), cert.synthesis_margin());
    save_certificate(impossible, dir + "/cert_deadbeat.json");
    write_file(dir + "/abort.json", R"({
  "plant": {"type": "tank"},
  "schedule": {"tau_delta": 1.0, "segments": [{"tau": 1.0, "steps": 2}]},
  "certificates": [{"tau": 1.0, "file": "cert_deadbeat.json"}],
  "plan": [{"start": 0.0, "end": 200.0, "target": [3.0, 3.0]}],
  "simulation": {"horizon": 5.0, "x0": [1.0, 1.0]}
})");
    CHECK(run_cli("--config " + dir + "/abort.json --out " + dir + "/out_abort run") == 3);
    CHECK(std::filesystem::exists(dir + "/out_abort/trace.csv"));
  }

  SUBCASE("0: verify passes on the good certificate") {
    write_file(dir + "/verify_ok.json", tiny_run_config("cert_ok.json", 3.0));
    CHECK(run_cli("--config " + dir + "/verify_ok.json verify") == 0);
  }

  SUBCASE("2: verify flags a corrupted certificate") {
    PolynomialMatrix doubled = cert.l();
    doubled.set_parameters(2.0 * doubled.parameters());
    ContractionCertificate corrupted(cert.tau(), cert.beta(), cert.w(), doubled,
                                     cert.metric_lower(), cert.metric_upper(),
                                     cert.margin_eta(), cert.grid(), cert.synthesis_margin());
    save_certificate(corrupted, dir + "/cert_bad.json");
    write_file(dir + "/verify_bad.json", tiny_run_config("cert_bad.json", 3.0));
    CHECK(run_cli("--config " + dir + "/verify_bad.json verify") == 2);
  }

  SUBCASE("0: zero-horizon run emits the header and initial row") {
    write_file(dir + "/zero.json", tiny_run_config("cert_ok.json", 0.0));
    CHECK(run_cli("--config " + dir + "/zero.json --out " + dir + "/out_zero run") == 0);
    std::ifstream in(dir + "/out_zero/trace.csv");
    int lines = 0;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++lines;
    CHECK(lines == 2);
  }
}

TEST_CASE("help text is reachable") {
  CHECK(run_cli("--help") == 0);
  (void)kStudyConfig;
}
