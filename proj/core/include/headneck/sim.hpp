#pragma once

// Closed-loop simulation: plant, sensors, posture integrators and the MPC
// under a prescribed T1 trajectory.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "headneck/mpc.hpp"
#include "headneck/perturbation.hpp"
#include "headneck/plant.hpp"
#include "headneck/sensory.hpp"

namespace headneck::sim {

/// One control step: the state at t and the torques applied over [t, t + dt].
struct StepRecord {
  double t = 0.0;
  plant::PlantState state;
  double base_accel = 0.0;
  JointTorques mpc_torque;
  JointTorques integrator_torque;
  JointTorques applied_torque;  // mpc_torque + integrator_torque
  sensory::SensoryFeedback feedback;
  plant::HeadKinematics kinematics;
  int solver_iterations = 0;
  bool solver_converged = true;
  double solver_cost = 0.0;
  double solve_time = 0.0;  // s, zero on steps that reuse the held control
};

struct RunMetadata {
  std::string config_hash;
  std::uint64_t seed = 0;
  double dt = 0.01;
  double duration = 0.0;    // s, requested
  double simulated = 0.0;   // s, reached
  double wall_time = 0.0;   // s
  double rtf = 0.0;         // wall_time / simulated
  bool aborted = false;
  std::string diagnostic;
};

struct SimulationLog {
  std::vector<StepRecord> records;
  plant::PlantState final_state;
  RunMetadata meta;

  std::size_t size() const { return records.size(); }
};

struct RunOptions {
  plant::PlantState initial;          // default: the reference posture at rest
  std::string config_hash;
  std::uint64_t seed = 0;
  int max_consecutive_failures = 20;

  RunOptions();
};

/// Runs duration / dt steps of sense -> integrators -> MPC -> plant. The
/// integrator references are set to the initial posture. The MPC re-solves
/// every mpc.control_period and holds its torque in between. Divergence or
/// more than max_consecutive_failures non-converged solves in a row ends the
/// run early with meta.aborted set.
SimulationLog run_closed_loop(const plant::PlantParams& params, sensory::IntegratorConfig integrators,
                              const mpc::MpcConfig& mpc_cfg, const mpc::WeightVector& weights,
                              const perturb::BaseTrajectory& base, double duration, double dt,
                              const RunOptions& options = RunOptions());

struct SteadyStateReport {
  bool settled = false;
  double settling_time = 0.0;                     // s, first instant after which |qd| < tol
  JointVector joint_errors = JointVector::Zero();  // rad, final minus initial
  double head_pitch_error = 0.0;                  // rad, final minus initial head-in-space pitch
  double head_t1_angle = 0.0;                     // rad, final
  double cg_t1_anterior = 0.0;                    // m, final
};

/// Settling uses the largest joint rate against tolerance (rad/s). Errors are
/// measured against the first record.
SteadyStateReport steady_state_report(const SimulationLog& log, const plant::PlantParams& params,
                                      double tolerance = 0.01);

/// CSV column names in export order.
std::vector<std::string> csv_columns();

void write_csv(const SimulationLog& log, const std::filesystem::path& path);
void write_metadata(const SimulationLog& log, const std::filesystem::path& path);

/// Reads a log written by write_csv, plus write_metadata output when given.
/// The final state is taken from the last record.
SimulationLog read_log(const std::filesystem::path& csv, const std::filesystem::path& metadata = {});

}  // namespace headneck::sim
