#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "headneck/plant.hpp"

using namespace headneck;
using namespace headneck::plant;

namespace {

JointVector reference_q() {
  JointVector q = JointVector::Zero();
  q[index(Dof::UpperPitch)] = deg2rad(11.36);
  return q;
}

// Weak tissue with upright rests, so gravity dominates and upright is an
// equilibrium.
PlantParams soft_tissue() {
  PlantParams p = PlantParams::defaults();
  p.passive_stiffness.setConstant(0.5);
  p.passive_damping.setConstant(0.1);
  p.passive_rest.setZero();
  return p;
}

// Upright is unstable under gravity, so free swings are run weightless on
// the soft springs.
PlantParams swing_params() {
  PlantParams p = soft_tissue();
  p.gravity = 0.0;
  p.passive_damping.setZero();
  return p;
}

PlantState swing_start() {
  PlantState s;
  s.q << 0.025, 0.04, -0.03, 0.05, 0.1;
  return s;
}

double total_energy(const PlantState& s, const PlantParams& p) {
  return kinetic_energy(s, p) + potential_energy(s.q, p);
}

JointVector random_q(std::mt19937_64& rng, const PlantParams& p) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  JointVector q;
  for (int i = 0; i < kDofs; ++i) q[i] = u(rng) * p.joint_limits[i];
  return q;
}

}  // namespace

TEST(PlantParams, DefaultsValidate) {
  const PlantParams p = PlantParams::defaults();
  EXPECT_NO_THROW(p.validate());
  EXPECT_NEAR(p.head_cg_distance, 0.0265 / std::sin(deg2rad(11.36)), 1e-12);
}

TEST(PlantParams, RejectsNonPositiveMass) {
  PlantParams p = PlantParams::defaults();
  p.head_mass = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = PlantParams::defaults();
  p.passive_damping[2] = -0.1;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(ForwardDynamics, ZeroGravityNoForcingIsAtRest) {
  PlantParams p = PlantParams::defaults();
  p.gravity = 0.0;
  p.passive_stiffness.setZero();
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    PlantState s;
    s.q = random_q(rng, p);
    const JointVector qdd = forward_dynamics(s, JointTorques::zero(), 0.0, p);
    EXPECT_LT(qdd.cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(ForwardDynamics, UprightStackBalances) {
  const PlantParams p = soft_tissue();
  const JointVector qdd = forward_dynamics(PlantState{}, JointTorques::zero(), 0.0, p);
  EXPECT_LT(qdd.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ForwardDynamics, RejectsNonFiniteInput) {
  PlantState s;
  s.q[1] = std::nan("");
  EXPECT_THROW(forward_dynamics(s, JointTorques::zero(), 0.0, PlantParams::defaults()),
               InvalidArgument);
}

TEST(ForwardDynamics, ReferencePostureFallsForward) {
  const PlantParams p = soft_tissue();
  PlantState s;
  s.q = reference_q();
  const JointVector qdd = forward_dynamics(s, JointTorques::zero(), 0.0, p);
  EXPECT_GT(qdd[index(Dof::UpperPitch)], 0.0);
  EXPECT_NEAR(qdd[index(Dof::LowerRoll)], 0.0, 1e-12);
  EXPECT_NEAR(qdd[index(Dof::UpperRoll)], 0.0, 1e-12);
  EXPECT_NEAR(qdd[index(Dof::UpperYaw)], 0.0, 1e-12);
}

// Power balance: dE/dt = tau . qd - qd' D qd along a trajectory.
TEST(ForwardDynamics, EnergyBalanceOracle) {
  const PlantParams p = soft_tissue();
  PlantState s;
  s.q = reference_q();
  s.q[0] = 0.05;
  s.qd << 0.3, -0.2, 0.4, 0.1, -0.5;
  JointTorques tau;
  tau.tau << 0.4, -1.0, 0.2, -0.3, 0.1;
  const double h = 1e-5;
  // E at t and t + 2h against the power at the midpoint t + h.
  PlantState mid = s;
  for (int i = 0; i < 10; ++i) mid = step(mid, tau, BaseStepSample::at_rest(), h / 10, p);
  PlantState end = mid;
  for (int i = 0; i < 10; ++i) end = step(end, tau, BaseStepSample::at_rest(), h / 10, p);
  const double de = (total_energy(end, p) - total_energy(s, p)) / (2 * h);
  const double power = tau.tau.dot(mid.qd) - mid.qd.dot(p.passive_damping.cwiseProduct(mid.qd));
  EXPECT_NEAR(de, power, 1e-6 * std::abs(power));
}

TEST(MassMatrix, SymmetricPositiveDefiniteAtRandomConfigurations) {
  const PlantParams p = PlantParams::defaults();
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto m = mass_matrix(random_q(rng, p), p);
    EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-14);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, kDofs, kDofs>> es(m);
    ASSERT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Step, CompensatedEquilibriumIsFixedPoint) {
  const PlantParams p = PlantParams::defaults();
  PlantState s;
  s.q = reference_q();
  s.q[1] = deg2rad(5.0);
  const JointTorques tau = gravity_compensation(s.q, p);
  PlantState x = s;
  for (int i = 0; i < 100; ++i) x = step(x, tau, BaseStepSample::at_rest(), 0.01, p);
  EXPECT_LT((x.q - s.q).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Step, TenMillisecondStepMatchesFineStepOracle) {
  const PlantParams p = swing_params();
  PlantState coarse = swing_start(), fine = swing_start();
  for (int i = 0; i < 100; ++i) coarse = step(coarse, JointTorques::zero(), BaseStepSample::at_rest(), 0.01, p);
  for (int i = 0; i < 1000; ++i) fine = step(fine, JointTorques::zero(), BaseStepSample::at_rest(), 0.001, p);
  EXPECT_LT((coarse.q - fine.q).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Step, UndampedEnergyDriftOverTenSeconds) {
  const PlantParams p = swing_params();
  PlantState s = swing_start();
  const double e0 = total_energy(s, p);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    s = step(s, JointTorques::zero(), BaseStepSample::at_rest(), 0.01, p);
    worst = std::max(worst, std::abs(total_energy(s, p) - e0) / e0);
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Step, MirroredBaseMotionMirrorsResponse) {
  const PlantParams p = PlantParams::defaults();
  PlantState a, b;
  a.q = b.q = reference_q();
  for (int i = 0; i < 300; ++i) {
    const double t = i * 0.01;
    const double amp = 0.5;
    BaseStepSample sa{amp * std::sin(3 * t), amp * std::sin(3 * (t + 0.005)),
                      amp * std::sin(3 * (t + 0.01)), 0.0, 0.0};
    BaseStepSample sb{-sa.accel_start, -sa.accel_mid, -sa.accel_end, 0.0, 0.0};
    // A stiff joint-space hold keeps the stack near the reference posture.
    JointTorques ta = gravity_compensation(a.q, p);
    ta.tau += -8.0 * (a.q - reference_q()) - 0.8 * a.qd;
    ta.tau[0] += 0.1 * std::cos(t);
    ta.tau[4] -= 0.05 * std::sin(2 * t);
    JointTorques tb = ta;
    for (int k = 0; k < kDofs; ++k) {
      if (is_lateral(k)) tb.tau[k] = -ta.tau[k];
    }
    a = step(a, ta, sa, 0.01, p);
    b = step(b, tb, sb, 0.01, p);
    for (int k = 0; k < kDofs; ++k) {
      const double sign = is_lateral(k) ? -1.0 : 1.0;
      ASSERT_NEAR(b.q[k], sign * a.q[k], 1e-12);
    }
    const HeadKinematics ka = head_kinematics(a, p), kb = head_kinematics(b, p);
    ASSERT_NEAR(kb.roll, -ka.roll, 1e-12);
    ASSERT_NEAR(kb.yaw, -ka.yaw, 1e-12);
    ASSERT_NEAR(kb.pitch, ka.pitch, 1e-12);
  }
}

TEST(Step, DivergenceBeyondRangeThrows) {
  PlantParams p = PlantParams::defaults();
  PlantState s;
  s.q[index(Dof::LowerPitch)] = p.joint_limits[1] + deg2rad(89.0);
  s.qd[index(Dof::LowerPitch)] = 50.0;
  EXPECT_THROW(step(s, JointTorques::zero(), BaseStepSample::at_rest(), 0.01, p), DivergenceError);
}

TEST(HeadKinematics, UprightStack) {
  const HeadKinematics k = head_kinematics(PlantState{}, PlantParams::defaults());
  EXPECT_DOUBLE_EQ(k.roll, 0.0);
  EXPECT_DOUBLE_EQ(k.yaw, 0.0);
  EXPECT_DOUBLE_EQ(k.y, 0.0);
  EXPECT_NEAR(k.cg_t1_anterior, 0.0, 1e-15);
}

TEST(HeadKinematics, ReferencePostureAnteriorDisplacement) {
  PlantState s;
  s.q = reference_q();
  const HeadKinematics k = head_kinematics(s, PlantParams::defaults());
  EXPECT_NEAR(k.cg_t1_anterior, 0.0265, 1e-4);
  EXPECT_NEAR(k.head_t1_angle, deg2rad(11.36), 1e-12);
}

TEST(HeadKinematics, RigidTranslation) {
  PlantState s;
  s.base_y = 0.1;
  EXPECT_NEAR(head_kinematics(s, PlantParams::defaults()).y, 0.1, 1e-15);
}

TEST(HeadKinematics, VelocitiesMatchCenteredDifferences) {
  const PlantParams p = PlantParams::defaults();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    PlantState s;
    s.q = 0.5 * random_q(rng, p);
    for (int i = 0; i < kDofs; ++i) s.qd[i] = u(rng);
    s.base_y = 0.01 * u(rng);
    s.base_vy = 0.2 * u(rng);
    const double h = 1e-3;
    PlantState f = s, b = s;
    f.q += h * s.qd;
    b.q -= h * s.qd;
    f.base_y += h * s.base_vy;
    b.base_y -= h * s.base_vy;
    const HeadKinematics k = head_kinematics(s, p), kf = head_kinematics(f, p),
                         kb = head_kinematics(b, p);
    // Centered differences carry O(h²) path-curvature error.
    EXPECT_NEAR(k.wroll, (kf.roll - kb.roll) / (2 * h), 1e-5 * (1 + std::abs(k.wroll)));
    EXPECT_NEAR(k.wpitch, (kf.pitch - kb.pitch) / (2 * h), 1e-5 * (1 + std::abs(k.wpitch)));
    EXPECT_NEAR(k.wyaw, (kf.yaw - kb.yaw) / (2 * h), 1e-5 * (1 + std::abs(k.wyaw)));
    EXPECT_NEAR(k.vy, (kf.y - kb.y) / (2 * h), 1e-6);
  }
}

TEST(GravityCompensation, UprightIsZero) {
  const JointTorques t = gravity_compensation(JointVector::Zero(), soft_tissue());
  EXPECT_LT(t.tau.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GravityCompensation, ClosesForwardDynamics) {
  const PlantParams p = PlantParams::defaults();
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    PlantState s;
    s.q = random_q(rng, p);
    const JointVector qdd = forward_dynamics(s, gravity_compensation(s.q, p), 0.0, p);
    EXPECT_LT(qdd.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(GravityCompensation, MatchesPotentialGradient) {
  const PlantParams p = soft_tissue();
  const JointVector q = reference_q();
  const JointTorques t = gravity_compensation(q, p);
  for (int i = 0; i < kDofs; ++i) {
    const double h = 1e-6;
    JointVector qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    const double grad = (potential_energy(qp, p) - potential_energy(qm, p)) / (2 * h);
    EXPECT_NEAR(t.tau[i], grad, 1e-7) << kDofNames[static_cast<std::size_t>(i)];
  }
  // Upper pitch: head weight times its anterior lever, plus the spring.
  const double lever = p.head_cg_distance * std::sin(q[3]);
  EXPECT_NEAR(t.tau[3], -p.head_mass * p.gravity * lever + p.passive_stiffness[3] * q[3], 1e-10);
}
