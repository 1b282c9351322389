#include "headneck/sim.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace headneck::sim {

RunOptions::RunOptions() { initial.q = plant::reference_posture(); }

SimulationLog run_closed_loop(const plant::PlantParams& params, sensory::IntegratorConfig integrators,
                              const mpc::MpcConfig& mpc_cfg, const mpc::WeightVector& weights,
                              const perturb::BaseTrajectory& base, double duration, double dt,
                              const RunOptions& options) {
  if (!(dt > 0.0)) throw InvalidArgument("simulation: dt must be positive");
  if (!(duration > 0.0)) throw InvalidArgument("simulation: duration must be positive");
  if (std::abs(base.dt - dt) > 1e-12) throw InvalidArgument("simulation: base trajectory dt differs from dt");
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  if (std::abs(static_cast<double>(steps) * dt - duration) > 1e-9) {
    throw InvalidArgument("simulation: duration must be a whole number of steps");
  }
  if (base.size() < steps + 1) throw InvalidArgument("simulation: duration exceeds the base trajectory");
  const auto hold = static_cast<std::size_t>(std::llround(mpc_cfg.control_period / dt));
  if (hold < 1 || std::abs(static_cast<double>(hold) * dt - mpc_cfg.control_period) > 1e-9) {
    throw InvalidArgument("simulation: control_period must be a whole number of steps");
  }
  integrators.validate();

  mpc::MpcController controller(params, mpc_cfg, weights);
  sensory::set_reference(integrators, options.initial, params);

  SimulationLog log;
  log.meta.config_hash = options.config_hash;
  log.meta.seed = options.seed;
  log.meta.dt = dt;
  log.meta.duration = duration;
  log.records.reserve(steps);

  const auto start = std::chrono::steady_clock::now();
  plant::PlantState state = options.initial;
  sensory::IntegratorState istate;
  JointTorques held;
  int failures = 0;
  for (std::size_t k = 0; k < steps; ++k) {
    StepRecord r;
    r.t = base.t[k];
    r.state = state;
    r.base_accel = base.ay[k];
    r.feedback = sensory::sense(state, params);
    r.kinematics = plant::head_kinematics(state, params);

    const sensory::IntegratorUpdate iu = sensory::integrator_update(istate, r.feedback, integrators, dt);
    istate = iu.state;
    r.integrator_torque = iu.torques;

    if (k % hold == 0) {
      const mpc::MpcSolution sol = controller.step(r.feedback, base.ay[k], &base, r.t);
      held = sol.u0;
      r.solver_iterations = sol.iterations;
      r.solver_converged = sol.converged;
      r.solver_cost = sol.cost;
      r.solve_time = sol.solve_time;
      failures = sol.converged ? 0 : failures + 1;
    }
    r.mpc_torque = held;
    r.applied_torque = r.mpc_torque + r.integrator_torque;
    log.records.push_back(r);

    if (failures > options.max_consecutive_failures) {
      log.meta.aborted = true;
      log.meta.diagnostic = "solver failed to converge on " + std::to_string(failures) +
                            " consecutive control steps (t = " + std::to_string(r.t) + " s)";
      break;
    }
    try {
      state = plant::step(state, r.applied_torque, base.step_sample(k), dt, params);
    } catch (const DivergenceError& e) {
      log.meta.aborted = true;
      log.meta.diagnostic = std::string(e.what()) + " (t = " + std::to_string(r.t + dt) + " s)";
      break;
    }
  }
  const auto stop = std::chrono::steady_clock::now();

  log.final_state = log.meta.aborted ? log.records.back().state : state;
  log.meta.simulated = static_cast<double>(log.records.size()) * dt;
  log.meta.wall_time = std::chrono::duration<double>(stop - start).count();
  // Clamp to one timer tick so the ratio stays positive.
  log.meta.rtf = std::max(log.meta.wall_time, 1e-9) / std::max(log.meta.simulated, dt);
  return log;
}

SteadyStateReport steady_state_report(const SimulationLog& log, const plant::PlantParams& params,
                                      double tolerance) {
  if (log.records.empty()) throw InvalidArgument("steady-state report: empty log");
  SteadyStateReport rep;
  const plant::PlantState& first = log.records.front().state;
  const plant::PlantState& last = log.final_state;
  auto quiet = [&](const plant::PlantState& s) { return s.qd.cwiseAbs().maxCoeff() < tolerance; };

  rep.settled = !log.meta.aborted && quiet(last);
  if (rep.settled) {
    // Last record above tolerance; settled from the next sample on.
    std::size_t k = log.records.size();
    while (k > 0 && quiet(log.records[k - 1].state)) --k;
    rep.settling_time = k == 0 ? log.records.front().t : log.records[k - 1].t + log.meta.dt;
  }

  const plant::HeadKinematics kin = plant::head_kinematics(last, params);
  rep.joint_errors = last.q - first.q;
  rep.head_pitch_error = kin.pitch - log.records.front().kinematics.pitch;
  rep.head_t1_angle = kin.head_t1_angle;
  rep.cg_t1_anterior = kin.cg_t1_anterior;
  return rep;
}

namespace {

constexpr std::array<const char*, kDofs> kDofNames = {"lower_roll", "lower_pitch", "upper_roll",
                                                      "upper_pitch", "upper_yaw"};

void append_dofs(std::vector<std::string>& cols, const std::string& prefix) {
  for (const char* n : kDofNames) cols.push_back(prefix + n);
}

}  // namespace

std::vector<std::string> csv_columns() {
  std::vector<std::string> c = {"t"};
  append_dofs(c, "q_");
  append_dofs(c, "qd_");
  c.insert(c.end(), {"base_y", "base_vy", "base_accel"});
  append_dofs(c, "tau_mpc_");
  append_dofs(c, "tau_int_");
  append_dofs(c, "tau_");
  c.insert(c.end(), {"head_roll", "head_pitch", "head_yaw", "head_y", "head_wroll", "head_wpitch",
                     "head_wyaw", "head_vy", "head_t1_angle", "cg_t1_anterior", "solver_iterations",
                     "solver_converged", "solver_cost"});
  return c;
}

void write_csv(const SimulationLog& log, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const auto cols = csv_columns();
  if (!log.meta.config_hash.empty()) std::fprintf(f, "# config_hash=%s\n", log.meta.config_hash.c_str());
  for (std::size_t i = 0; i < cols.size(); ++i) std::fprintf(f, "%s%s", i ? "," : "", cols[i].c_str());
  std::fputc('\n', f);
  auto num = [&](double v) { std::fprintf(f, ",%.17g", v); };
  auto vec = [&](const JointVector& v) {
    for (int i = 0; i < kDofs; ++i) num(v(i));
  };
  for (const StepRecord& r : log.records) {
    std::fprintf(f, "%.17g", r.t);
    vec(r.state.q);
    vec(r.state.qd);
    num(r.state.base_y);
    num(r.state.base_vy);
    num(r.base_accel);
    vec(r.mpc_torque.tau);
    vec(r.integrator_torque.tau);
    vec(r.applied_torque.tau);
    const auto& k = r.kinematics;
    for (double v : {k.roll, k.pitch, k.yaw, k.y, k.wroll, k.wpitch, k.wyaw, k.vy, k.head_t1_angle,
                     k.cg_t1_anterior}) {
      num(v);
    }
    std::fprintf(f, ",%d,%d", r.solver_iterations, r.solver_converged ? 1 : 0);
    num(r.solver_cost);
    std::fputc('\n', f);
  }
  const bool ok = std::ferror(f) == 0;
  if (std::fclose(f) != 0 || !ok) throw IoError("write failed: " + path.string());
}

void write_metadata(const SimulationLog& log, const std::filesystem::path& path) {
  const RunMetadata& m = log.meta;
  nlohmann::json j = {{"config_hash", m.config_hash}, {"seed", m.seed},       {"dt", m.dt},
                      {"duration", m.duration},       {"simulated", m.simulated},
                      {"wall_time", m.wall_time},     {"rtf", m.rtf},       {"aborted", m.aborted},
                      {"diagnostic", m.diagnostic},   {"steps", log.records.size()}};
  // Solver timing is wall-clock, so it stays out of the CSV.
  int solves = 0, failures = 0;
  double total = 0.0, worst = 0.0;
  for (const StepRecord& r : log.records) {
    if (r.solve_time <= 0.0) continue;
    ++solves;
    failures += r.solver_converged ? 0 : 1;
    total += r.solve_time;
    worst = std::max(worst, r.solve_time);
  }
  j["solver"] = {{"solves", solves}, {"not_converged", failures}, {"solve_time_total", total},
                 {"solve_time_max", worst}};
  std::vector<double> q(log.final_state.q.data(), log.final_state.q.data() + kDofs);
  std::vector<double> qd(log.final_state.qd.data(), log.final_state.qd.data() + kDofs);
  j["final_state"] = {{"q", q}, {"qd", qd}, {"base_y", log.final_state.base_y},
                      {"base_vy", log.final_state.base_vy}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setw(2) << j << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

SimulationLog read_log(const std::filesystem::path& csv, const std::filesystem::path& metadata) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open " + csv.string());
  const auto cols = csv_columns();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line) && ++lineno && line.starts_with('#')) {
  }
  {
    std::vector<std::string> header;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) header.push_back(c);
    if (header != cols) throw IoError(csv.string() + ": unexpected header");
  }
  SimulationLog log;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> v;
    v.reserve(cols.size());
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      v.push_back(std::strtod(p, &end));
      if (end == p) break;
      p = end;
      if (*p == ',') ++p;
    }
    if (v.size() != cols.size()) {
      throw IoError(csv.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(cols.size()) + " fields");
    }
    std::size_t i = 0;
    auto vec = [&] {
      JointVector x;
      for (int d = 0; d < kDofs; ++d) x(d) = v[i++];
      return x;
    };
    StepRecord r;
    r.t = v[i++];
    r.state.q = vec();
    r.state.qd = vec();
    r.state.base_y = v[i++];
    r.state.base_vy = v[i++];
    r.base_accel = v[i++];
    r.mpc_torque.tau = vec();
    r.integrator_torque.tau = vec();
    r.applied_torque.tau = vec();
    auto& k = r.kinematics;
    for (double* x : {&k.roll, &k.pitch, &k.yaw, &k.y, &k.wroll, &k.wpitch, &k.wyaw, &k.vy,
                      &k.head_t1_angle, &k.cg_t1_anterior}) {
      *x = v[i++];
    }
    r.solver_iterations = static_cast<int>(v[i++]);
    r.solver_converged = v[i++] != 0.0;
    r.solver_cost = v[i++];
    log.records.push_back(r);
  }
  if (!log.records.empty()) {
    log.final_state = log.records.back().state;
    if (log.records.size() > 1) log.meta.dt = log.records[1].t - log.records[0].t;
  }
  if (!metadata.empty()) {
    std::ifstream mi(metadata);
    if (!mi) throw IoError("cannot open " + metadata.string());
    nlohmann::json j;
    try {
      mi >> j;
      RunMetadata& m = log.meta;
      m.config_hash = j.at("config_hash").get<std::string>();
      m.seed = j.at("seed").get<std::uint64_t>();
      m.dt = j.at("dt").get<double>();
      m.duration = j.at("duration").get<double>();
      m.simulated = j.at("simulated").get<double>();
      m.wall_time = j.at("wall_time").get<double>();
      m.rtf = j.at("rtf").get<double>();
      m.aborted = j.at("aborted").get<bool>();
      m.diagnostic = j.at("diagnostic").get<std::string>();
      const auto& fs = j.at("final_state");
      const auto q = fs.at("q").get<std::vector<double>>();
      const auto qd = fs.at("qd").get<std::vector<double>>();
      if (q.size() != kDofs || qd.size() != kDofs) throw IoError("final_state has wrong size");
      log.final_state.q = Eigen::Map<const JointVector>(q.data());
      log.final_state.qd = Eigen::Map<const JointVector>(qd.data());
      log.final_state.base_y = fs.at("base_y").get<double>();
      log.final_state.base_vy = fs.at("base_vy").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(metadata.string() + ": " + e.what());
    }
  }
  return log;
}

}  // namespace headneck::sim
