// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#include "ctmpc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctmpc/errors.hpp"

namespace ctmpc {

namespace {

using nlohmann::json;

json vec_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vec_from(const json& arr) {
  Vector v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v[static_cast<int>(i)] = arr[i].get<double>();
  return v;
}

json grid_json(const CertificateGrid& grid) {
  return json{{"state_lo", vec_json(grid.states.lo)},
              {"state_hi", vec_json(grid.states.hi)},
              {"states_per_dim", grid.states_per_dim},
              {"input_lo", vec_json(grid.inputs.lo)},
              {"input_hi", vec_json(grid.inputs.hi)},
              {"inputs_per_dim", grid.inputs_per_dim}};
}

CertificateGrid grid_from(const json& g) {
  CertificateGrid grid;
  grid.states = Box(vec_from(g.at("state_lo")), vec_from(g.at("state_hi")));
  grid.states_per_dim = g.value("states_per_dim", 21);
  grid.inputs = Box(vec_from(g.at("input_lo")), vec_from(g.at("input_hi")));
  grid.inputs_per_dim = g.value("inputs_per_dim", 5);
  return grid;
}

std::string join_path(const std::string& dir, const std::string& file) {
  if (file.empty() || file.front() == '/') return file;
  return dir + "/" + file;
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config parse error: ") + err.what());
  }

  ScenarioConfig config;
  try {
    if (doc.contains("plant")) {
      const json& plant = doc["plant"];
      config.plant_type = plant.value("type", std::string("tank"));
      config.plant_file = plant.value("file", std::string());
      if (plant.contains("parameters")) {
        const json& p = plant["parameters"];
        config.tank.alpha1 = p.value("alpha1", config.tank.alpha1);
        config.tank.alpha2 = p.value("alpha2", config.tank.alpha2);
        config.tank.sigma1 = p.value("sigma1", config.tank.sigma1);
        config.tank.sigma2 = p.value("sigma2", config.tank.sigma2);
        config.tank.pump_gain = p.value("pump_gain", config.tank.pump_gain);
        config.tank.gravity = p.value("gravity", config.tank.gravity);
        config.tank.sample_period = p.value("sample_period", config.tank.sample_period);
      }
    }

    const json& schedule = doc.at("schedule");
    config.tau_delta = schedule.at("tau_delta").get<double>();
    for (const json& seg : schedule.at("segments"))
      config.segments.emplace_back(seg.at("tau").get<double>(), seg.at("steps").get<int>());

    for (const json& cert : doc.at("certificates")) {
      CertificateSource source;
      source.tau = cert.at("tau").get<double>();
      if (cert.contains("file")) {
        source.file = cert.at("file").get<std::string>();
      } else if (cert.contains("synthesize")) {
        const json& synth = cert.at("synthesize");
        source.synthesize_inline = true;
        source.beta = synth.at("beta").get<double>();
        source.degree = synth.value("degree", 0);
        source.grid = grid_from(synth.at("grid"));
        source.margin_eta = synth.value("margin_eta", 1e-4);
        source.witness_slack = synth.value("witness_slack", 1e-3);
        source.starts = synth.value("starts", 8);
        source.max_iterations = synth.value("max_iterations", 400);
        if (synth.contains("witnesses")) {
          for (const json& witness : synth["witnesses"]) {
            FeasibilityWitness w;
            w.state = vec_from(witness.at("state"));
            w.target = vec_from(witness.at("target"));
            source.witnesses.push_back(std::move(w));
          }
        }
      } else {
        throw ConfigError("certificate entry needs either a file or a synthesize block");
      }
      config.certificates.push_back(std::move(source));
    }

    for (const json& target : doc.at("plan")) {
      PlanTargetSpec spec;
      spec.t_start = target.at("start").get<double>();
      spec.t_end = target.at("end").get<double>();
      spec.target = vec_from(target.at("target"));
      config.plan_targets.push_back(std::move(spec));
    }

    if (doc.contains("cost")) {
      config.cost_type = doc["cost"].value("type", std::string("input_energy"));
      if (doc["cost"].contains("q_diag")) config.cost_q_diag = vec_from(doc["cost"]["q_diag"]);
      if (doc["cost"].contains("r_diag")) config.cost_r_diag = vec_from(doc["cost"]["r_diag"]);
    }

    if (doc.contains("solver")) {
      const json& s = doc["solver"];
      config.solver.residual_tol = s.value("residual_tol", config.solver.residual_tol);
      config.solver.box_tol = s.value("box_tol", config.solver.box_tol);
      config.solver.penalty_initial = s.value("penalty_initial", config.solver.penalty_initial);
      config.solver.penalty_growth = s.value("penalty_growth", config.solver.penalty_growth);
      config.solver.penalty_rounds = s.value("penalty_rounds", config.solver.penalty_rounds);
      config.solver.max_inner_iterations =
          s.value("max_inner_iterations", config.solver.max_inner_iterations);
      config.solver.fd_step = s.value("fd_step", config.solver.fd_step);
      config.solver.gradient_tol = s.value("gradient_tol", config.solver.gradient_tol);
      config.solver.geodesic_segments =
          s.value("geodesic_segments", config.solver.geodesic_segments);
      config.solver.use_warm_start = s.value("use_warm_start", config.solver.use_warm_start);
    }

    const json& sim = doc.at("simulation");
    config.horizon = sim.at("horizon").get<double>();
    config.x0 = vec_from(sim.at("x0"));

    if (doc.contains("bench")) {
      config.bench_repetitions = doc["bench"].value("repetitions", 3);
      config.bench_horizon = doc["bench"].value("horizon", -1.0);
      if (doc["bench"].contains("variants")) {
        for (const json& variant : doc["bench"]["variants"]) {
          BenchVariantSpec spec;
          spec.label = variant.at("label").get<std::string>();
          for (const json& seg : variant.at("segments"))
            spec.segments.emplace_back(seg.at("tau").get<double>(), seg.at("steps").get<int>());
          config.bench_variants.push_back(std::move(spec));
        }
      }
    }

    config.output_dir = doc.value("output_dir", std::string("out"));
    config.seed = doc.value("seed", 1u);
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config field error: ") + err.what());
  }
  return config;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string serialize_config(const ScenarioConfig& config) {
  json doc;
  doc["plant"] = {{"type", config.plant_type}};
  if (!config.plant_file.empty()) doc["plant"]["file"] = config.plant_file;
  if (config.plant_type == "tank") {
    doc["plant"]["parameters"] = {
        {"alpha1", config.tank.alpha1},   {"alpha2", config.tank.alpha2},
        {"sigma1", config.tank.sigma1},   {"sigma2", config.tank.sigma2},
        {"pump_gain", config.tank.pump_gain}, {"gravity", config.tank.gravity},
        {"sample_period", config.tank.sample_period}};
  }

  doc["schedule"]["tau_delta"] = config.tau_delta;
  doc["schedule"]["segments"] = json::array();
  for (const auto& [tau, steps] : config.segments)
    doc["schedule"]["segments"].push_back({{"tau", tau}, {"steps", steps}});

  doc["certificates"] = json::array();
  for (const auto& source : config.certificates) {
    json entry{{"tau", source.tau}};
    if (source.synthesize_inline) {
      entry["synthesize"] = {{"beta", source.beta},
                             {"degree", source.degree},
                             {"grid", grid_json(source.grid)},
                             {"margin_eta", source.margin_eta},
                             {"witness_slack", source.witness_slack},
                             {"starts", source.starts},
                             {"max_iterations", source.max_iterations}};
      if (!source.witnesses.empty()) {
        json witnesses = json::array();
        for (const auto& w : source.witnesses)
          witnesses.push_back({{"state", vec_json(w.state)}, {"target", vec_json(w.target)}});
        entry["synthesize"]["witnesses"] = std::move(witnesses);
      }
    } else {
      entry["file"] = source.file;
    }
    doc["certificates"].push_back(std::move(entry));
  }

  doc["plan"] = json::array();
  for (const auto& target : config.plan_targets)
    doc["plan"].push_back(
        {{"start", target.t_start}, {"end", target.t_end}, {"target", vec_json(target.target)}});

  doc["cost"] = {{"type", config.cost_type}};
  if (config.cost_q_diag.size() > 0) doc["cost"]["q_diag"] = vec_json(config.cost_q_diag);
  if (config.cost_r_diag.size() > 0) doc["cost"]["r_diag"] = vec_json(config.cost_r_diag);

  doc["solver"] = {{"residual_tol", config.solver.residual_tol},
                   {"box_tol", config.solver.box_tol},
                   {"penalty_initial", config.solver.penalty_initial},
                   {"penalty_growth", config.solver.penalty_growth},
                   {"penalty_rounds", config.solver.penalty_rounds},
                   {"max_inner_iterations", config.solver.max_inner_iterations},
                   {"fd_step", config.solver.fd_step},
                   {"gradient_tol", config.solver.gradient_tol},
                   {"geodesic_segments", config.solver.geodesic_segments},
                   {"use_warm_start", config.solver.use_warm_start}};

  doc["simulation"] = {{"horizon", config.horizon}, {"x0", vec_json(config.x0)}};

  if (!config.bench_variants.empty()) {
    doc["bench"]["repetitions"] = config.bench_repetitions;
    if (config.bench_horizon >= 0.0) doc["bench"]["horizon"] = config.bench_horizon;
    doc["bench"]["variants"] = json::array();
    for (const auto& variant : config.bench_variants) {
      json segments = json::array();
      for (const auto& [tau, steps] : variant.segments)
        segments.push_back({{"tau", tau}, {"steps", steps}});
      doc["bench"]["variants"].push_back({{"label", variant.label}, {"segments", segments}});
    }
  }

  doc["output_dir"] = config.output_dir;
  doc["seed"] = config.seed;
  return doc.dump(2) + "\n";
}

void validate_config(const ScenarioConfig& config) {
  if (config.plant_type != "tank" && config.plant_type != "polynomial")
    throw ConfigError("plant type must be 'tank' or 'polynomial'");
  if (config.plant_type == "polynomial" && config.plant_file.empty())
    throw ConfigError("polynomial plant requires a model file");

  const TimescaleSchedule schedule = build_schedule(config.tau_delta, config.segments);

  std::set<long> scheduled;
  for (const auto& seg : schedule.segments) scheduled.insert(seg.ratio);
  std::set<long> covered;
  for (const auto& source : config.certificates) {
    const long ratio = std::lround(source.tau / config.tau_delta);
    if (!covered.insert(ratio).second)
      throw ConfigError("more than one certificate for the same timescale");
    if (source.synthesize_inline && !(source.beta > 0.0 && source.beta <= 1.0))
      throw ConfigError("certificate contraction rate must lie in (0, 1]");
  }
  for (long ratio : scheduled) {
    if (!covered.count(ratio))
      throw ConfigError("schedule timescale without a certificate entry");
  }
  for (const auto& variant : config.bench_variants) {
    const TimescaleSchedule vs = build_schedule(config.tau_delta, variant.segments);
    for (const auto& seg : vs.segments) {
      if (!covered.count(seg.ratio))
        throw ConfigError("bench variant timescale without a certificate entry: " + variant.label);
    }
  }

  if (config.plan_targets.empty()) throw ConfigError("plan needs at least one target segment");
  if (config.plan_targets.front().t_start > 0.0)
    throw ConfigError("plan must start at time zero");
  if (config.plan_targets.back().t_end < config.horizon - 1e-9)
    throw ConfigError("plan does not cover the simulation horizon");

  if (config.cost_type != "input_energy" && config.cost_type != "quadratic_tracking")
    throw ConfigError("cost type must be 'input_energy' or 'quadratic_tracking'");
  if (!(config.horizon >= 0.0)) throw ConfigError("simulation horizon must be non-negative");
}

SystemModel build_plant(const ScenarioConfig& config, const std::string& config_dir) {
  if (config.plant_type == "tank") return make_tank_model(config.tank);
  return load_polynomial_model(join_path(config_dir, config.plant_file));
}

std::vector<ContractionCertificate> resolve_certificates(const ScenarioConfig& config,
                                                         const SystemModel& model,
                                                         const std::string& config_dir) {
  std::vector<ContractionCertificate> certificates;
  for (const auto& source : config.certificates) {
    if (source.synthesize_inline) {
      SynthesisProblem problem;
      problem.model = &model;
      problem.tau = source.tau;
      problem.beta = source.beta;
      problem.degree = source.degree;
      problem.grid = source.grid;
      problem.margin_eta = source.margin_eta;
      problem.seed = config.seed;
      problem.witnesses = source.witnesses;
      problem.witness_slack = source.witness_slack;
      problem.starts = source.starts;
      problem.max_iterations = source.max_iterations;
      certificates.push_back(synthesize(problem));
    } else {
      const std::string path = join_path(config_dir, source.file);
      std::ifstream probe(path);
      if (!probe) throw ConfigError("certificate file not found: " + path);
      probe.close();
      ContractionCertificate cert = load_certificate(path);
      if (std::abs(cert.tau() - source.tau) > 1e-12)
        throw ConfigError("certificate timescale mismatch in " + path);
      if (cert.state_dim() != model.state_dim || cert.input_dim() != model.input_dim)
        throw ConfigError("certificate dimensions do not match the plant in " + path);
      certificates.push_back(std::move(cert));
    }
  }
  return certificates;
}

ReferencePlan build_plan(const ScenarioConfig& config, const SystemModel& model) {
  return make_reference_plan(model, config.tau_delta, config.plan_targets);
}

MpcProblem build_problem(const ScenarioConfig& config, const SystemModel& model,
                         const std::vector<ContractionCertificate>& certificates,
                         const std::vector<std::pair<double, int>>& segments) {
  MpcProblem problem;
  problem.schedule = build_schedule(config.tau_delta, segments);
  for (const auto& segment : problem.schedule.segments) {
    problem.models.push_back(model);
    const ContractionCertificate* found = nullptr;
    for (const auto& cert : certificates) {
      if (std::abs(cert.tau() - segment.tau) < 1e-12) {
        found = &cert;
        break;
      }
    }
    if (!found) throw ConfigError("no certificate for schedule timescale");
    problem.certificates.push_back(*found);
  }
  if (config.cost_type == "quadratic_tracking") {
    Matrix q = config.cost_q_diag.size() > 0
                   ? Matrix(config.cost_q_diag.asDiagonal())
                   : Matrix::Identity(model.state_dim, model.state_dim);
    Matrix r = config.cost_r_diag.size() > 0 ? Matrix(config.cost_r_diag.asDiagonal())
                                             : Matrix::Identity(model.input_dim, model.input_dim);
    problem.cost = quadratic_tracking_cost(std::move(q), std::move(r));
  } else {
    problem.cost = input_energy_cost();
  }
  problem.plan = build_plan(config, model);
  problem.state_box = model.state_box;
  problem.input_box = model.input_box;
  problem.options = config.solver;
  validate_problem(problem);
  return problem;
}

namespace {

// monomial keys: "1", "x1", "x2^3", "x1*x2^2"
void parse_monomial(const std::string& key, int nvars, std::vector<int>& exponents) {
  exponents.assign(nvars, 0);
  if (key == "1") return;
  std::stringstream stream(key);
  std::string factor;
  while (std::getline(stream, factor, '*')) {
    if (factor.empty() || factor[0] != 'x')
      throw ConfigError("polynomial model: bad monomial '" + key + "'");
    const size_t caret = factor.find('^');
    const std::string index_text = factor.substr(1, caret == std::string::npos
                                                        ? std::string::npos
                                                        : caret - 1);
    const int var = std::stoi(index_text);
    const int exponent = caret == std::string::npos ? 1 : std::stoi(factor.substr(caret + 1));
    if (var < 1 || var > nvars || exponent < 1)
      throw ConfigError("polynomial model: bad monomial '" + key + "'");
    exponents[var - 1] += exponent;
  }
}

}  // namespace

SystemModel load_polynomial_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& err) {
    throw ConfigError(std::string("model file parse error: ") + err.what());
  }

  const int n = doc.at("state_dim").get<int>();
  const int m = doc.at("input_dim").get<int>();
  const json& equations = doc.at("equations");
  if (static_cast<int>(equations.size()) != n)
    throw ConfigError("polynomial model: one equation per state required");

  std::vector<PolynomialMatrix> polys;
  MonomialBasis basis(n, 3);
  for (const json& eq : equations) {
    PolynomialMatrix poly(1, 1, n, 3, false);
    Vector coeffs = Vector::Zero(basis.size());
    std::vector<int> exponents;
    for (auto it = eq.begin(); it != eq.end(); ++it) {
      parse_monomial(it.key(), n, exponents);
      int total = 0;
      for (int e : exponents) total += e;
      if (total > 3) throw ConfigError("polynomial model: degree above 3 in '" + it.key() + "'");
      bool found = false;
      for (int k = 0; k < basis.size(); ++k) {
        if (basis.exponents(k) == exponents) {
          coeffs[k] += it.value().get<double>();
          found = true;
          break;
        }
      }
      if (!found) throw ConfigError("polynomial model: unsupported monomial '" + it.key() + "'");
    }
    poly.entry_coeffs(0, 0) = coeffs;
    polys.push_back(std::move(poly));
  }

  Matrix gain(n, m);
  const json& rows = doc.at("input_gain");
  if (static_cast<int>(rows.size()) != n) throw ConfigError("polynomial model: input_gain rows");
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != m)
      throw ConfigError("polynomial model: input_gain columns");
    for (int j = 0; j < m; ++j) gain(i, j) = rows[i][j].get<double>();
  }

  Box state_box(vec_from(doc.at("state_box").at("lo")), vec_from(doc.at("state_box").at("hi")));
  Box input_box(vec_from(doc.at("input_box").at("lo")), vec_from(doc.at("input_box").at("hi")));
  return make_polynomial_model(polys, gain, std::move(state_box), std::move(input_box));
}

void write_plot_script(const std::string& script_path, const std::string& csv_name) {
  std::ofstream out(script_path);
  if (!out) throw ConfigError("cannot write plot script: " + script_path);
  out << "# render with: gnuplot " << script_path.substr(script_path.find_last_of('/') + 1)
      << "\n"
      << "set datafile separator ','\n"
      << "set terminal pngcairo size 960,800\n"
      << "set output 'trace.png'\n"
      << "set multiplot layout 3,1\n"
      << "set xlabel 't [s]'\n"
      << "set ylabel 'level [cm]'\n"
      << "plot '" << csv_name << "' using 1:2 with lines lw 2 title 'x1', \\\n"
      << "     '' using 1:3 with lines lw 2 title 'x2', \\\n"
      << "     '' using 1:5 with lines dashtype 2 title 'x1 ref', \\\n"
      << "     '' using 1:6 with lines dashtype 2 title 'x2 ref'\n"
      << "set ylabel 'pump [V]'\n"
      << "plot '" << csv_name << "' using 1:4 with steps lw 2 title 'u', \\\n"
      << "     '' using 1:7 with lines dashtype 2 title 'u ref'\n"
      << "set ylabel 'residual'\n"
      << "plot '" << csv_name << "' using 1:8 with lines lw 2 title 'contraction residual'\n"
      << "unset multiplot\n";
}

}  // namespace ctmpc
