#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "headneck/mpc.hpp"
#include "lqr_oracle.hpp"

using namespace headneck;
using namespace headneck::mpc;

namespace {

Eigen::VectorXd stacked(const plant::PlantState& s) {
  Eigen::VectorXd x(2 * kDofs);
  x << s.q, s.qd;
  return x;
}

plant::PlantState reference_state() {
  plant::PlantState s;
  s.q = plant::reference_posture();
  return s;
}


}  // namespace

TEST(Cost, ZeroTorquesZeroRates) {
  MpcConfig cfg;
  const Eigen::MatrixXd u = Eigen::MatrixXd::Zero(kDofs, cfg.intervals);
  plant::PlantParams p = plant::PlantParams::defaults();
  p.gravity = 0.0;
  HeadNeckModel weightless(p);
  Predictor pw(weightless, cfg.scheme(), cfg.intervals, cfg.interval_length);
  plant::PlantState s;
  s.q = p.passive_rest;
  const Prediction traj = pw.predict(stacked(s), u, BaseForecast::hold(0.0), 0.0, false);
  EXPECT_EQ(cost(traj, u, WeightVector::optimized(), cfg.interval_length), 0.0);
}

TEST(Cost, SingleIntervalEffortHandValue) {
  Prediction traj;
  traj.times = {0.0, 0.04};
  traj.states = Eigen::MatrixXd::Zero(2 * kDofs, 2);
  traj.node_weights = Eigen::Vector2d(0.0, 0.04);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(kDofs, 1);
  u(0, 0) = 1.0;
  EXPECT_NEAR(cost(traj, u, WeightVector::optimized(), 0.040), 0.7072, 1e-12);
}

TEST(Cost, LinearInWeights) {
  MpcConfig cfg;
  HeadNeckModel model(plant::PlantParams::defaults());
  Predictor pr(model, cfg.scheme(), cfg.intervals, cfg.interval_length);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  Eigen::MatrixXd u(kDofs, cfg.intervals);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = ud(rng);
  const Prediction traj = pr.predict(stacked(reference_state()), u, BaseForecast::hold(0.3), 0.0, false);
  ASSERT_TRUE(traj.feasible);
  const WeightVector w = WeightVector::optimized();
  const double j = cost(traj, u, w, cfg.interval_length);
  EXPECT_GT(j, 0.0);
  EXPECT_NEAR(cost(traj, u, w.scaled(3.7), cfg.interval_length), 3.7 * j, 1e-12 * j);
}

TEST(Predict, EquilibriumIsConstant) {
  plant::PlantParams p = plant::PlantParams::defaults();
  p.gravity = 0.0;
  HeadNeckModel model(p);
  MpcConfig cfg;
  Predictor pr(model, cfg.scheme(), cfg.intervals, cfg.interval_length);
  plant::PlantState s;
  s.q = p.passive_rest;
  const Eigen::VectorXd x0 = stacked(s);
  const Prediction traj =
      pr.predict(x0, Eigen::MatrixXd::Zero(kDofs, cfg.intervals), BaseForecast::hold(0.0), 0.0, false);
  ASSERT_TRUE(traj.feasible);
  ASSERT_EQ(traj.nodes(), 41);
  for (int c = 0; c < traj.nodes(); ++c) {
    EXPECT_LT((traj.states.col(c) - x0).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Predict, MatchesFineStepSimulation) {
  const plant::PlantParams p = plant::PlantParams::defaults();
  HeadNeckModel model(p);
  MpcConfig cfg;
  Predictor pr(model, cfg.scheme(), cfg.intervals, cfg.interval_length);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  Eigen::MatrixXd u(kDofs, cfg.intervals);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = ud(rng);
  plant::PlantState s = reference_state();
  s.qd << 0.1, -0.2, 0.15, 0.3, -0.1;
  const double accel = 0.4;
  const Prediction traj = pr.predict(stacked(s), u, BaseForecast::hold(accel), 0.0, false);
  ASSERT_TRUE(traj.feasible);

  const plant::BaseStepSample base{accel, accel, accel, 0.0, 0.0};
  double worst = 0.0;
  for (int k = 0; k < cfg.intervals; ++k) {
    JointTorques tau;
    tau.tau = u.col(k);
    for (int i = 0; i < 40; ++i) s = plant::step(s, tau, base, 0.001, p);
    const int node = (k + 1) * cfg.collocation_nodes;
    worst = std::max(worst, (traj.states.col(node).head(kDofs) - s.q).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Predict, DivergenceIsInfeasible) {
  plant::PlantParams p = plant::PlantParams::defaults();
  p.passive_stiffness.setZero();
  HeadNeckModel model(p);
  MpcConfig cfg;
  Predictor pr(model, cfg.scheme(), cfg.intervals, cfg.interval_length);
  plant::PlantState s = reference_state();
  s.qd[1] = 20.0;
  const Prediction traj = pr.predict(stacked(s), Eigen::MatrixXd::Constant(kDofs, cfg.intervals, 20.0),
                                     BaseForecast::hold(0.0), 0.0, false);
  EXPECT_FALSE(traj.feasible);
}

TEST(Predict, PreviewNoneDiffersFromFull) {
  const perturb::BaseTrajectory base = perturb::generate_multisine(perturb::make_multisine_spec());
  MpcConfig none_cfg;
  MpcConfig full_cfg;
  full_cfg.preview = Preview::Full;
  MpcController none(plant::PlantParams::defaults(), none_cfg, WeightVector::optimized());
  MpcController full(plant::PlantParams::defaults(), full_cfg, WeightVector::optimized());
  const sensory::SensoryFeedback fb = sensory::sense(reference_state(), plant::PlantParams::defaults());
  const MpcSolution a = none.step(fb, base.ay[50], &base, 0.5);
  const MpcSolution b = full.step(fb, base.ay[50], &base, 0.5);
  EXPECT_GT((a.node_states - b.node_states).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_THROW(full.step(fb, 0.0, nullptr, 0.0), InvalidArgument);
}

TEST(Solve, ZeroGravityEquilibriumGivesZeroControl) {
  plant::PlantParams p = plant::PlantParams::defaults();
  p.gravity = 0.0;
  MpcController c(p, MpcConfig{}, WeightVector::optimized());
  plant::PlantState s;
  s.q = p.passive_rest;
  const MpcSolution sol = c.solve(s, BaseForecast::hold(0.0), 0.0);
  EXPECT_TRUE(sol.converged);
  EXPECT_LT(sol.u0.tau.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Solve, MatchesLqrOnUpperPitchLinearization) {
  const LinearModel m = upper_pitch_linearization(plant::PlantParams::defaults());
  MpcConfig cfg;
  const double wc = 41.40, we = 15.53;  // wy2, ty2
  NlpOptions opt;
  opt.tolerance = 1e-10;
  NlpSolver solver(m, cfg.scheme(), cfg.intervals, cfg.interval_length, Eigen::VectorXd::Constant(1, 1e3),
                   Eigen::VectorXd::Constant(1, 10.0), opt);
  CostWeights w;
  w.effort = Eigen::VectorXd::Constant(1, we);
  w.conflict = Eigen::VectorXd::Constant(1, wc);
  for (const Eigen::Vector2d x0 : {Eigen::Vector2d(0.05, 0.0), Eigen::Vector2d(0.0, 0.4),
                                   Eigen::Vector2d(-0.1, 0.2)}) {
    const NlpResult r = solver.solve(x0, BaseForecast::hold(0.0), 0.0, w);
    ASSERT_TRUE(r.converged);
    const double oracle = oracle::lqr_first_control(m, wc, we, cfg.interval_length, cfg.intervals, x0);
    EXPECT_NEAR(r.controls(0, 0), oracle, 0.05 * std::abs(oracle)) << x0.transpose();
  }
}

TEST(Solve, GradientMatchesCentralDifferences) {
  const plant::PlantParams p = plant::PlantParams::defaults();
  HeadNeckModel model(p);
  MpcConfig cfg;
  NlpSolver solver(model, cfg.scheme(), cfg.intervals, cfg.interval_length, cfg.torque_bounds,
                   cfg.joint_limits, NlpOptions{});
  const CostWeights w = CostWeights::from(WeightVector::optimized());
  plant::PlantState s = reference_state();
  s.q[0] = 0.7;  // beyond the lower roll limit, so the penalty is active
  s.qd << 0.2, -0.1, 0.3, 0.1, -0.2;
  const Eigen::VectorXd x0 = stacked(s);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  Eigen::MatrixXd u(kDofs, cfg.intervals);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = ud(rng);
  const BaseForecast fc = BaseForecast::hold(0.5);

  const NlpSolver::Evaluation e = solver.evaluate(x0, u, fc, 0.0, w, true);
  ASSERT_TRUE(e.feasible);
  const double step = 1e-6;
  Eigen::VectorXd fd(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    Eigen::MatrixXd up = u, um = u;
    up.data()[i] += step;
    um.data()[i] -= step;
    fd[i] = (solver.evaluate(x0, up, fc, 0.0, w, false).objective -
             solver.evaluate(x0, um, fc, 0.0, w, false).objective) /
            (2 * step);
  }
  EXPECT_LT((e.gradient - fd).cwiseAbs().maxCoeff() / e.gradient.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Solve, ArgminInvariantUnderWeightScaling) {
  plant::PlantState s = reference_state();
  s.qd << 0.3, 0.5, -0.2, 0.4, 0.1;
  const BaseForecast fc = BaseForecast::hold(0.8);
  MpcConfig cfg;
  cfg.tolerance = 1e-9;
  for (double c : {0.01, 3.0, 250.0}) {
    MpcController a(plant::PlantParams::defaults(), cfg, WeightVector::optimized());
    MpcController b(plant::PlantParams::defaults(), cfg, WeightVector::optimized().scaled(c));
    const MpcSolution ra = a.solve(s, fc, 0.0);
    const MpcSolution rb = b.solve(s, fc, 0.0);
    EXPECT_LT((ra.u0.tau - rb.u0.tau).cwiseAbs().maxCoeff(), 1e-5) << c;
    EXPECT_NEAR(rb.cost, c * ra.cost, 1e-6 * c * ra.cost) << c;
  }
}

TEST(Solve, ObjectiveHistoryIsNonIncreasing) {
  HeadNeckModel model(plant::PlantParams::defaults());
  MpcConfig cfg;
  NlpSolver solver(model, cfg.scheme(), cfg.intervals, cfg.interval_length, cfg.torque_bounds,
                   cfg.joint_limits, NlpOptions{});
  plant::PlantState s = reference_state();
  s.qd << 1.0, -1.5, 2.0, 1.0, -0.5;
  const NlpResult r = solver.solve(stacked(s), BaseForecast::hold(2.0), 0.0,
                                   CostWeights::from(WeightVector::optimized()));
  ASSERT_GE(r.objective_history.size(), 2u);
  for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
    EXPECT_LE(r.objective_history[i], r.objective_history[i - 1]);
  }
  EXPECT_GE(r.cost, 0.0);
}

TEST(Solve, FirstControlRespectsTorqueBounds) {
  MpcConfig cfg;
  cfg.torque_bounds.setConstant(0.2);
  MpcController c(plant::PlantParams::defaults(), cfg, WeightVector::optimized());
  plant::PlantState s = reference_state();
  s.qd << 3.0, -3.0, 3.0, 3.0, 3.0;
  const MpcSolution sol = c.solve(s, BaseForecast::hold(5.0), 0.0);
  EXPECT_LE(sol.u0.tau.cwiseAbs().maxCoeff(), 0.2);
  EXPECT_DOUBLE_EQ(sol.u0.tau.cwiseAbs().maxCoeff(), 0.2);  // some bound is active
  EXPECT_LE(sol.controls.cwiseAbs().maxCoeff(), 0.2);
}

TEST(Solve, RejectsInfeasibleStart) {
  MpcController c(plant::PlantParams::defaults(), MpcConfig{}, WeightVector::optimized());
  plant::PlantState s;
  s.q[1] = 4.0;
  EXPECT_THROW(c.solve(s, BaseForecast::hold(0.0), 0.0), InvalidArgument);
  s.q[1] = std::nan("");
  EXPECT_THROW(c.solve(s, BaseForecast::hold(0.0), 0.0), InvalidArgument);
}

TEST(Step, WarmStartNoWorseThanCold) {
  const plant::PlantParams p = plant::PlantParams::defaults();
  MpcConfig cfg;
  MpcController warm(p, cfg, WeightVector::optimized());
  const perturb::BaseTrajectory base = perturb::generate_multisine(perturb::make_multisine_spec());
  plant::PlantState s = reference_state();
  for (int k = 0; k < 30; ++k) {
    const MpcSolution sol = warm.step(sensory::sense(s, p), base.ay[static_cast<std::size_t>(k)], nullptr, k * 0.01);
    s = plant::step(s, sol.u0, base.step_sample(static_cast<std::size_t>(k)), 0.01, p);
  }
  MpcController cold(p, cfg, WeightVector::optimized());
  const double t = 0.3;
  const MpcSolution a = warm.step(sensory::sense(s, p), base.ay[30], nullptr, t);
  const MpcSolution b = cold.step(sensory::sense(s, p), base.ay[30], nullptr, t);
  EXPECT_LE(a.objective, b.objective + 1e-6);
}

TEST(Step, ShiftControlsResamplesMidpoints) {
  Eigen::MatrixXd prev(1, 3);
  prev << 1, 2, 3;
  const Eigen::MatrixXd s = MpcController::shift_controls(prev, 0.0, 0.01, 0.04);
  EXPECT_EQ(s(0, 0), 1.0);  // midpoint 0.03
  EXPECT_EQ(s(0, 1), 2.0);  // 0.07
  EXPECT_EQ(s(0, 2), 3.0);  // 0.11, held past the end
  const Eigen::MatrixXd t = MpcController::shift_controls(prev, 0.0, 0.04, 0.04);
  EXPECT_EQ(t(0, 0), 2.0);
  EXPECT_EQ(t(0, 2), 3.0);
}

// The CNS cannot anticipate: the control acting when an unexpected pulse
// starts equals the control without the pulse, unless the future is known.
TEST(Step, PreviewNoneCannotAnticipatePulse) {
  const plant::PlantParams p = plant::PlantParams::defaults();
  const double onset = 0.205;
  const perturb::BaseTrajectory pulse = perturb::step_pulse(0.02, onset, 0.2, 1.0, 0.01);
  const perturb::BaseTrajectory quiet = perturb::stationary(1.0, 0.01);

  auto control_at_onset = [&](const perturb::BaseTrajectory& base, Preview preview) {
    MpcConfig cfg;
    cfg.preview = preview;
    MpcController c(p, cfg, WeightVector::optimized());
    plant::PlantState s = reference_state();
    for (std::size_t k = 0;; ++k) {
      const MpcSolution sol = c.step(sensory::sense(s, p), base.ay[k], &base, base.t[k]);
      if (base.t[k] + base.dt > onset) return sol.u0.tau;
      s = plant::step(s, sol.u0, base.step_sample(k), 0.01, p);
    }
  };
  EXPECT_EQ(control_at_onset(pulse, Preview::None), control_at_onset(quiet, Preview::None));
  EXPECT_GT((control_at_onset(pulse, Preview::Full) - control_at_onset(quiet, Preview::Full))
                .cwiseAbs()
                .maxCoeff(),
            1e-6);
}

TEST(Weights, VectorsAndValidation) {
  const WeightVector w = WeightVector::optimized();
  EXPECT_EQ(w.effort[0], 17.68);
  EXPECT_EQ(w.conflict[4], 5.17);
  EXPECT_NEAR(w.lower_to_upper_roll_effort_ratio(), 17.68 / 63.77, 1e-15);
  EXPECT_EQ(WeightVector::from_flat(w.flat()).flat(), w.flat());
  const WeightVector prior = WeightVector::sagittal_prior();
  EXPECT_EQ(prior.effort[1], 76.96);
  EXPECT_EQ(prior.effort[3], 3.37);
  EXPECT_EQ(prior.conflict[1], 8.26);
  EXPECT_EQ(prior.conflict[3], 1.62);
  EXPECT_EQ(WeightVector::sagittal_retuned().flat(), w.flat());
  WeightVector bad = w;
  bad.conflict[2] = -1.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  EXPECT_THROW(MpcController(plant::PlantParams::defaults(), MpcConfig{}, bad), InvalidArgument);
}

TEST(QpSolver, MatchesUnconstrainedAndClampedOptima) {
  Eigen::Matrix2d h;
  h << 2, 0.5, 0.5, 1;
  const Eigen::Vector2d g(-1, -2);
  const Eigen::Vector2d lo(-10, -10), hi(10, 10);
  const Eigen::VectorXd free = solve_box_qp(h, g, lo, hi);
  EXPECT_LT((h * free + g).norm(), 1e-12);
  // Tight upper bound on x1: optimum clamps it and minimizes over x0.
  const Eigen::Vector2d hi2(10, 0.5);
  const Eigen::VectorXd x = solve_box_qp(h, g, lo, hi2);
  EXPECT_EQ(x[1], 0.5);
  EXPECT_NEAR(x[0], (1 - 0.5 * 0.5) / 2, 1e-12);
}

// KKT conditions: zero gradient on free entries, outward sign on active bounds.
TEST(QpSolver, RandomBoxProblemsSatisfyKkt) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 6;
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
    const Eigen::MatrixXd h = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n), lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      g[i] = 3 * nd(rng);
      lo[i] = -std::abs(nd(rng));
      hi[i] = std::abs(nd(rng));
    }
    const Eigen::VectorXd x = solve_box_qp(h, g, lo, hi);
    const Eigen::VectorXd grad = h * x + g;
    for (int i = 0; i < n; ++i) {
      ASSERT_GE(x[i], lo[i]);
      ASSERT_LE(x[i], hi[i]);
      if (x[i] > lo[i] && x[i] < hi[i]) ASSERT_NEAR(grad[i], 0.0, 1e-9);
      if (x[i] == lo[i]) ASSERT_GE(grad[i], -1e-9);
      if (x[i] == hi[i]) ASSERT_LE(grad[i], 1e-9);
    }
  }
}

TEST(Closed, MusclePresetSettles) {
  const plant::PlantParams p = plant::PlantParams::defaults();
  MpcController c(p, MpcConfig{}, WeightVector::optimized());
  plant::PlantState s = reference_state();
  const perturb::BaseTrajectory base = perturb::stationary(2.5, 0.01);
  double settled = -1.0;
  for (std::size_t k = 0; k + 1 < base.size(); ++k) {
    const MpcSolution sol = c.step(sensory::sense(s, p), 0.0, nullptr, base.t[k]);
    s = plant::step(s, sol.u0, base.step_sample(k), 0.01, p);
    if (s.qd.cwiseAbs().maxCoeff() >= 0.01) {
      settled = -1.0;
    } else if (settled < 0.0) {
      settled = base.t[k + 1];
    }
  }
  EXPECT_GE(settled, 0.4);
  EXPECT_LE(settled, 1.6);
}
