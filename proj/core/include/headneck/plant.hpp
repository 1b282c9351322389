#pragma once

// Rigid-body head-neck plant: a neck link on a 2-DoF lower joint (roll,
// pitch) at T1 and a head on a 3-DoF upper joint (roll, pitch, yaw), riding
// on a T1 base that is translated laterally along the world y axis.
//
// World frame: x anterior, y left, z up. Joint rotations compose
// intrinsically roll(x) -> pitch(y) -> yaw(z); positive pitch is flexion.

#include <Eigen/Core>

#include "headneck/types.hpp"

namespace headneck::plant {

struct PlantParams {
  double neck_mass = 1.1;          // kg
  double neck_length = 0.12;       // m, lower joint to upper joint
  double neck_cg_offset = 0.06;    // m, lower joint to neck CG along the neck axis
  double head_mass = 4.2;          // kg
  double head_cg_distance = 0.0;   // m, upper joint to head CG lever; see defaults()
  double head_cg_anterior_offset = 0.0;  // m, intrinsic anterior CG offset
  Vec3 neck_inertia{0.0020, 0.0020, 0.0014};  // kg·m², principal, about neck CG
  Vec3 head_inertia{0.0180, 0.0220, 0.0150};  // kg·m², principal, about head CG
  // Passive tissue. The rate-only MPC cost supplies no static holding torque,
  // so the springs alone set the unaided steady posture: stiffer than gravity
  // at both joints, with rests that let the head settle forward of the
  // reference posture while the upper joint extends slightly.
  JointVector passive_stiffness = (JointVector() << 20, 20, 15, 15, 1).finished();  // N·m/rad
  JointVector passive_damping = (JointVector() << 3, 3, 0.3, 0.3, 0.1).finished();  // N·m·s/rad
  JointVector passive_rest = (JointVector() << 0, 0.025, 0, 0.005, 0).finished();  // rad
  JointVector joint_limits = JointVector::Zero();              // rad, symmetric range of motion
  double gravity = 9.81;           // m/s²

  /// Defaults: the lever is sized so that the reference posture (lower pitch
  /// 0°, upper pitch 11.36°) puts the head CG 26.5 mm anterior of T1.
  static PlantParams defaults();

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// Reference posture used by the posture analysis and as the default
/// simulation start: lower joint 0°, upper pitch 11.36°.
JointVector reference_posture();

/// Anterior CG displacement the default lever is calibrated against [m].
inline constexpr double kReferenceAnteriorDisplacement = 0.0265;

struct PlantState {
  JointVector q = JointVector::Zero();   // rad
  JointVector qd = JointVector::Zero();  // rad/s
  double base_y = 0.0;                   // m, prescribed T1 lateral position
  double base_vy = 0.0;                  // m/s

  bool finite() const;
};

struct HeadKinematics {
  double roll = 0.0;   // rad, global head orientation
  double pitch = 0.0;  // rad
  double yaw = 0.0;    // rad
  double y = 0.0;      // m, global head CG lateral position
  double wroll = 0.0;  // rad/s, d(roll)/dt
  double wpitch = 0.0; // rad/s
  double wyaw = 0.0;   // rad/s
  double vy = 0.0;     // m/s
  double head_t1_angle = 0.0;   // rad, head pitch relative to the (non-rotating) T1
  double cg_t1_anterior = 0.0;  // m, head CG anterior of T1 (world x)
};

/// Mass matrix and the non-actuator generalized forces at one state:
/// M(q)·qdd = tau + forcing.
struct DynamicsTerms {
  Eigen::Matrix<double, kDofs, kDofs> mass;
  JointVector forcing;  // passive + gravity + base inertial - velocity products
};

DynamicsTerms dynamics_terms(const PlantState& state, double base_accel, const PlantParams& params);

Eigen::Matrix<double, kDofs, kDofs> mass_matrix(const JointVector& q, const PlantParams& params);

/// Accelerations and their derivatives at one state (unchecked).
struct AccelerationJacobian {
  JointVector qdd;
  Eigen::Matrix<double, kDofs, kDofs> dq;    // d qdd / d q
  Eigen::Matrix<double, kDofs, kDofs> dqd;   // d qdd / d qd
  Eigen::Matrix<double, kDofs, kDofs> gain;  // d qdd / d tau = M^-1
};

AccelerationJacobian acceleration_jacobian(const JointVector& q, const JointVector& qd,
                                           const JointVector& tau, double base_accel,
                                           const PlantParams& params);

/// Joint accelerations. Throws InvalidArgument on non-finite input.
JointVector forward_dynamics(const PlantState& state, const JointTorques& tau, double base_accel,
                             const PlantParams& params);

/// Unchecked variant for inner loops (prediction, Jacobians).
JointVector forward_dynamics_unchecked(const JointVector& q, const JointVector& qd,
                                       const JointVector& tau, double base_accel,
                                       const PlantParams& params);

/// Base motion over one integration step. Acceleration is sampled at the
/// start, midpoint and end of the step; the end position/velocity are copied
/// into the returned state.
struct BaseStepSample {
  double accel_start = 0.0;
  double accel_mid = 0.0;
  double accel_end = 0.0;
  double y_end = 0.0;
  double vy_end = 0.0;

  static BaseStepSample at_rest(double y = 0.0) { return {0.0, 0.0, 0.0, y, 0.0}; }
};

/// One classical RK4 step. Throws DivergenceError if any joint exceeds its
/// range of motion by more than 90°.
PlantState step(const PlantState& state, const JointTorques& tau, const BaseStepSample& base,
                double dt, const PlantParams& params);

HeadKinematics head_kinematics(const PlantState& state, const PlantParams& params);

/// Torques that hold q static: forward_dynamics(q, 0, tau, 0) == 0.
JointTorques gravity_compensation(const JointVector& q, const PlantParams& params);

double kinetic_energy(const PlantState& state, const PlantParams& params);

/// Gravitational plus passive-spring potential, zero at the T1 height.
double potential_energy(const JointVector& q, const PlantParams& params);

/// Gravitational potential only.
double gravitational_potential(const JointVector& q, const PlantParams& params);

}  // namespace headneck::plant
