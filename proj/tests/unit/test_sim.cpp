#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "headneck/sim.hpp"

using namespace headneck;
using namespace headneck::sim;

namespace {

perturb::BaseTrajectory short_multisine(double amplitude = 0.002) {
  perturb::MultisineDefaults d;
  d.period = 5.0;
  d.duration = 5.0;
  d.amplitude = amplitude;
  return perturb::generate_multisine(perturb::make_multisine_spec(d));
}

SimulationLog run_preset(const std::string& preset, double duration) {
  const plant::PlantParams p = plant::PlantParams::defaults();
  return run_closed_loop(p, sensory::preset_configuration(preset), mpc::MpcConfig{},
                         mpc::WeightVector::optimized(), perturb::stationary(duration, 0.01), duration,
                         0.01);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("headneck_test_sim_" + name);
}

}  // namespace

TEST(ClosedLoop, ZeroGravityEquilibriumStaysPut) {
  plant::PlantParams p = plant::PlantParams::defaults();
  p.gravity = 0.0;
  RunOptions opt;
  opt.initial.q = p.passive_rest;
  const SimulationLog log = run_closed_loop(p, sensory::preset_configuration("full_integrators"),
                                            mpc::MpcConfig{}, mpc::WeightVector::optimized(),
                                            perturb::stationary(1.0, 0.01), 1.0, 0.01, opt);
  ASSERT_EQ(log.size(), 100u);
  EXPECT_FALSE(log.meta.aborted);
  for (const StepRecord& r : log.records) {
    EXPECT_LT((r.state.q - opt.initial.q).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT(r.state.qd.cwiseAbs().maxCoeff(), 1e-6);
  }
  EXPECT_LT((log.final_state.q - opt.initial.q).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ClosedLoop, GridMetadataAndTorqueLedger) {
  const perturb::BaseTrajectory base = short_multisine();
  RunOptions opt;
  opt.config_hash = "abc";
  opt.seed = 7;
  const SimulationLog log = run_closed_loop(plant::PlantParams::defaults(),
                                            sensory::preset_configuration("full_integrators"),
                                            mpc::MpcConfig{}, mpc::WeightVector::optimized(), base, 1.0,
                                            0.01, opt);
  ASSERT_EQ(log.size(), 100u);
  for (std::size_t k = 0; k < log.size(); ++k) {
    const StepRecord& r = log.records[k];
    EXPECT_NEAR(r.t, 0.01 * static_cast<double>(k), 1e-12);
    EXPECT_EQ(r.applied_torque.tau, r.mpc_torque.tau + r.integrator_torque.tau);
    EXPECT_EQ(r.base_accel, base.ay[k]);
  }
  EXPECT_EQ(log.meta.config_hash, "abc");
  EXPECT_EQ(log.meta.seed, 7u);
  EXPECT_GT(log.meta.rtf, 0.0);
  EXPECT_NEAR(log.meta.simulated, 1.0, 1e-12);
  EXPECT_NEAR(log.meta.rtf, log.meta.wall_time / log.meta.simulated, 1e-9);
}

TEST(ClosedLoop, Deterministic) {
  const perturb::BaseTrajectory base = short_multisine();
  auto run = [&] {
    return run_closed_loop(plant::PlantParams::defaults(), sensory::preset_configuration("muscle"),
                           mpc::MpcConfig{}, mpc::WeightVector::optimized(), base, 0.5, 0.01);
  };
  const SimulationLog a = run();
  const SimulationLog b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& ra = a.records[k];
    const auto& rb = b.records[k];
    EXPECT_EQ(std::memcmp(ra.state.q.data(), rb.state.q.data(), sizeof(double) * kDofs), 0);
    EXPECT_EQ(std::memcmp(ra.state.qd.data(), rb.state.qd.data(), sizeof(double) * kDofs), 0);
    EXPECT_EQ(std::memcmp(ra.applied_torque.tau.data(), rb.applied_torque.tau.data(),
                          sizeof(double) * kDofs),
              0);
  }
}

// Lateral mirror: T1 moved the other way must give the mirrored response
// through sensing, integrators, optimizer and plant.
TEST(ClosedLoop, MirroredPerturbationMirrorsResponse) {
  const perturb::BaseTrajectory base = short_multisine(0.004);
  const auto p = plant::PlantParams::defaults();
  auto run = [&](const perturb::BaseTrajectory& b) {
    return run_closed_loop(p, sensory::preset_configuration("full_integrators"), mpc::MpcConfig{},
                           mpc::WeightVector::optimized(), b, 2.0, 0.01);
  };
  const SimulationLog a = run(base);
  const SimulationLog m = run(base.negated());
  ASSERT_EQ(a.size(), m.size());
  double worst_odd = 0.0;
  double worst_even = 0.0;
  double scale = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto& ka = a.records[k].kinematics;
    const auto& km = m.records[k].kinematics;
    for (auto [x, y] : {std::pair{ka.roll, km.roll}, {ka.yaw, km.yaw}, {ka.y, km.y}, {ka.wroll, km.wroll},
                        {ka.wyaw, km.wyaw}, {ka.vy, km.vy}}) {
      worst_odd = std::max(worst_odd, std::abs(x + y));
      scale = std::max(scale, std::abs(x));
    }
    for (auto [x, y] : {std::pair{ka.pitch, km.pitch}, {ka.wpitch, km.wpitch}}) {
      worst_even = std::max(worst_even, std::abs(x - y));
    }
  }
  EXPECT_GT(scale, 1e-4);  // the run is actually excited
  EXPECT_LT(worst_odd, 1e-9);
  EXPECT_LT(worst_even, 1e-9);
}

TEST(ClosedLoop, PersistentSolverFailureAborts) {
  mpc::MpcConfig cfg;
  cfg.max_iterations = 1;
  cfg.tolerance = 1e-14;
  RunOptions opt;
  opt.max_consecutive_failures = 3;
  const SimulationLog log = run_closed_loop(plant::PlantParams::defaults(),
                                            sensory::preset_configuration("muscle"), cfg,
                                            mpc::WeightVector::optimized(), perturb::stationary(1.0, 0.01),
                                            1.0, 0.01, opt);
  EXPECT_TRUE(log.meta.aborted);
  EXPECT_EQ(log.size(), 4u);
  EXPECT_NE(log.meta.diagnostic.find("converge"), std::string::npos);
  EXPECT_GT(log.meta.rtf, 0.0);
}

TEST(ClosedLoop, RejectsBadArguments) {
  const auto p = plant::PlantParams::defaults();
  const auto base = perturb::stationary(1.0, 0.01);
  const auto cfg = sensory::preset_configuration("muscle");
  const auto w = mpc::WeightVector::optimized();
  EXPECT_THROW(run_closed_loop(p, cfg, mpc::MpcConfig{}, w, base, 2.0, 0.01), InvalidArgument);
  EXPECT_THROW(run_closed_loop(p, cfg, mpc::MpcConfig{}, w, base, 0.5, 0.02), InvalidArgument);
  mpc::MpcConfig odd;
  odd.control_period = 0.015;
  EXPECT_THROW(run_closed_loop(p, cfg, odd, w, base, 0.5, 0.01), InvalidArgument);
}

TEST(ClosedLoop, ControlHeldBetweenSolves) {
  mpc::MpcConfig cfg;
  cfg.control_period = 0.04;
  const SimulationLog log = run_closed_loop(plant::PlantParams::defaults(),
                                            sensory::preset_configuration("muscle"), cfg,
                                            mpc::WeightVector::optimized(), short_multisine(), 0.4, 0.01);
  for (std::size_t k = 0; k < log.size(); ++k) {
    const std::size_t k0 = k - k % 4;
    EXPECT_EQ(log.records[k].mpc_torque.tau, log.records[k0].mpc_torque.tau);
    if (k % 4 == 0) {
      EXPECT_GT(log.records[k].solver_iterations, 0);
    } else {
      EXPECT_EQ(log.records[k].solver_iterations, 0);
    }
  }
}

TEST(SteadyState, ConstantLogIsSettledAtZero) {
  SimulationLog log;
  log.meta.dt = 0.01;
  plant::PlantState s;
  s.q = plant::reference_posture();
  const auto p = plant::PlantParams::defaults();
  for (int k = 0; k < 50; ++k) {
    StepRecord r;
    r.t = 0.01 * k;
    r.state = s;
    r.kinematics = plant::head_kinematics(s, p);
    log.records.push_back(r);
  }
  log.final_state = s;
  const SteadyStateReport rep = steady_state_report(log, p);
  EXPECT_TRUE(rep.settled);
  EXPECT_EQ(rep.settling_time, 0.0);
  EXPECT_EQ(rep.joint_errors.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rep.head_pitch_error, 0.0);
  EXPECT_NEAR(rep.cg_t1_anterior, plant::head_kinematics(s, p).cg_t1_anterior, 0.0);
}

TEST(SteadyState, MovingTailIsUnsettled) {
  SimulationLog log;
  log.meta.dt = 0.01;
  StepRecord r;
  log.records.push_back(r);
  log.final_state.qd(0) = 0.5;
  const SteadyStateReport rep = steady_state_report(log, plant::PlantParams::defaults());
  EXPECT_FALSE(rep.settled);
}

TEST(SteadyState, MusclePresetPosture) {
  const auto p = plant::PlantParams::defaults();
  const SteadyStateReport rep = steady_state_report(run_preset("muscle", 3.0), p);
  EXPECT_TRUE(rep.settled);
  EXPECT_LT(rep.settling_time, 2.0);
  EXPECT_GE(rep.cg_t1_anterior, 0.0265);
  EXPECT_LE(rep.cg_t1_anterior, 0.045);
  EXPECT_GT(std::abs(rep.joint_errors(1)), deg2rad(1.0));
}

TEST(SteadyState, UpperHeadInSpaceIntegratorOrdering) {
  const auto p = plant::PlantParams::defaults();
  const SteadyStateReport muscle = steady_state_report(run_preset("muscle", 4.0), p);
  const SteadyStateReport unhis = steady_state_report(run_preset("muscle_unhis", 4.0), p);
  EXPECT_LT(std::abs(unhis.head_pitch_error), deg2rad(0.5));
  EXPECT_GT(std::abs(unhis.joint_errors(1)), std::abs(muscle.joint_errors(1)));
}

TEST(LogIo, CsvAndMetadataRoundTrip) {
  RunOptions opt;
  opt.config_hash = "00ff";
  opt.seed = 42;
  const SimulationLog log = run_closed_loop(plant::PlantParams::defaults(),
                                            sensory::preset_configuration("full_integrators"),
                                            mpc::MpcConfig{}, mpc::WeightVector::optimized(),
                                            short_multisine(), 0.3, 0.01, opt);
  const auto csv = temp_path("log.csv");
  const auto meta = temp_path("meta.json");
  write_csv(log, csv);
  write_metadata(log, meta);
  {
    std::ifstream in(csv);
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first, "# config_hash=00ff");
  }
  const SimulationLog back = read_log(csv, meta);
  ASSERT_EQ(back.size(), log.size());
  for (std::size_t k = 0; k < log.size(); ++k) {
    const auto& a = log.records[k];
    const auto& b = back.records[k];
    EXPECT_EQ(a.t, b.t);
    EXPECT_EQ(a.state.q, b.state.q);
    EXPECT_EQ(a.state.qd, b.state.qd);
    EXPECT_EQ(a.state.base_y, b.state.base_y);
    EXPECT_EQ(a.applied_torque.tau, b.applied_torque.tau);
    EXPECT_EQ(a.integrator_torque.tau, b.integrator_torque.tau);
    EXPECT_EQ(a.kinematics.wroll, b.kinematics.wroll);
    EXPECT_EQ(a.kinematics.cg_t1_anterior, b.kinematics.cg_t1_anterior);
    EXPECT_EQ(a.solver_iterations, b.solver_iterations);
    EXPECT_EQ(a.solver_converged, b.solver_converged);
  }
  EXPECT_EQ(back.final_state.q, log.final_state.q);
  EXPECT_EQ(back.meta.config_hash, "00ff");
  EXPECT_EQ(back.meta.seed, 42u);
  EXPECT_EQ(back.meta.rtf, log.meta.rtf);
  std::filesystem::remove(csv);
  std::filesystem::remove(meta);
}

TEST(LogIo, MalformedInputsThrow) {
  const auto bad = temp_path("bad.csv");
  {
    std::FILE* f = std::fopen(bad.string().c_str(), "w");
    std::fputs("t,q_lower_roll\n0,1\n", f);
    std::fclose(f);
  }
  EXPECT_THROW(read_log(bad), IoError);
  EXPECT_THROW(read_log(temp_path("missing.csv")), IoError);
  std::filesystem::remove(bad);
}
