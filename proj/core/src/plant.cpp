#include "headneck/plant.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Geometry>
#include <Eigen/LU>

namespace headneck::plant {
namespace {

using Mat5 = Eigen::Matrix<double, kDofs, kDofs>;
using Jac = Eigen::Matrix<double, 3, kDofs>;

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

// Positions are relative to the T1 point; the base translation only enters
// through the effective gravity vector.
struct Chain {
  Mat3 r_neck, r_head;
  std::array<Vec3, kDofs> axis;
  Vec3 upper_joint, neck_cg, head_cg;
  Jac jv_neck, jw_neck, jv_head, jw_head;
};

Chain chain_geometry(const JointVector& q, const PlantParams& p) {
  Chain c;
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
  const Mat3 r0 = rot_x(q[0]);
  c.r_neck = r0 * rot_y(q[1]);
  const Mat3 r2 = c.r_neck * rot_x(q[2]);
  const Mat3 r3 = r2 * rot_y(q[3]);
  c.r_head = r3 * rot_z(q[4]);

  c.axis[0] = ex;
  c.axis[1] = r0 * ey;
  c.axis[2] = c.r_neck * ex;
  c.axis[3] = r2 * ey;
  c.axis[4] = r3 * ez;

  c.upper_joint = c.r_neck * Vec3(0, 0, p.neck_length);
  c.neck_cg = c.r_neck * Vec3(0, 0, p.neck_cg_offset);
  c.head_cg = c.upper_joint + c.r_head * Vec3(p.head_cg_anterior_offset, 0, p.head_cg_distance);

  c.jv_neck.setZero();
  c.jw_neck.setZero();
  c.jv_head.setZero();
  c.jw_head.setZero();
  const Vec3 head_rel = c.head_cg - c.upper_joint;
  for (int j = 0; j < kDofs; ++j) {
    c.jw_head.col(j) = c.axis[j];
    if (j < 2) {
      c.jw_neck.col(j) = c.axis[j];
      c.jv_neck.col(j) = c.axis[j].cross(c.neck_cg);
      c.jv_head.col(j) = c.axis[j].cross(c.head_cg);
    } else {
      c.jv_head.col(j) = c.axis[j].cross(head_rel);
    }
  }
  return c;
}

Mat3 world_inertia(const Mat3& r, const Vec3& principal) {
  return r * principal.asDiagonal() * r.transpose();
}

Mat5 assemble_mass(const Chain& c, const PlantParams& p, const Mat3& i_neck, const Mat3& i_head) {
  Mat5 m = p.neck_mass * c.jv_neck.transpose() * c.jv_neck +
           c.jw_neck.transpose() * i_neck * c.jw_neck +
           p.head_mass * c.jv_head.transpose() * c.jv_head +
           c.jw_head.transpose() * i_head * c.jw_head;
  return 0.5 * (m + m.transpose());
}

void require_finite(const JointVector& v, const char* what) {
  if (!v.allFinite()) {
    std::ostringstream os;
    os << "non-finite " << what << ": [" << v.transpose() << "]";
    throw InvalidArgument(os.str());
  }
}

}  // namespace

PlantParams PlantParams::defaults() {
  PlantParams p;
  const JointVector ref = reference_posture();
  p.head_cg_distance = kReferenceAnteriorDisplacement / std::sin(ref[index(Dof::UpperPitch)]);
  p.joint_limits << deg2rad(45), deg2rad(45), deg2rad(70), deg2rad(70), deg2rad(70);
  return p;
}

void PlantParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument(std::string("plant.") + name + " must be a finite positive value");
    }
  };
  positive(neck_mass, "neck_mass");
  positive(neck_length, "neck_length");
  positive(neck_cg_offset, "neck_cg_offset");
  positive(head_mass, "head_mass");
  positive(head_cg_distance, "head_cg_distance");
  if (!(gravity >= 0.0) || !std::isfinite(gravity)) {
    throw InvalidArgument("plant.gravity must be finite and non-negative");
  }
  if (!std::isfinite(head_cg_anterior_offset)) {
    throw InvalidArgument("plant.head_cg_anterior_offset must be finite");
  }
  for (int i = 0; i < 3; ++i) {
    positive(neck_inertia[i], "neck_inertia");
    positive(head_inertia[i], "head_inertia");
  }
  for (int i = 0; i < kDofs; ++i) {
    if (!(passive_stiffness[i] >= 0.0) || !std::isfinite(passive_stiffness[i])) {
      throw InvalidArgument("plant.passive_stiffness must be non-negative");
    }
    if (!(passive_damping[i] >= 0.0) || !std::isfinite(passive_damping[i])) {
      throw InvalidArgument("plant.passive_damping must be non-negative");
    }
    if (!std::isfinite(passive_rest[i])) {
      throw InvalidArgument("plant.passive_rest must be finite");
    }
    positive(joint_limits[i], "joint_limits");
  }
}

JointVector reference_posture() {
  JointVector q = JointVector::Zero();
  q[index(Dof::UpperPitch)] = deg2rad(11.36);
  return q;
}

bool PlantState::finite() const {
  return q.allFinite() && qd.allFinite() && std::isfinite(base_y) && std::isfinite(base_vy);
}

Mat5 mass_matrix(const JointVector& q, const PlantParams& params) {
  const Chain c = chain_geometry(q, params);
  return assemble_mass(c, params, world_inertia(c.r_neck, params.neck_inertia),
                       world_inertia(c.r_head, params.head_inertia));
}

namespace {

// Velocity-product (qdd = 0) generalized forces; quadratic in qd.
JointVector velocity_products(const Chain& c, const Mat3& i_neck, const Mat3& i_head,
                              const JointVector& qd, const PlantParams& p) {
  // Each axis is fixed in the frame of the preceding sub-joint, so
  // d(axis_i)/dt = w_{i-1} x axis_i.
  std::array<Vec3, kDofs> w;
  std::array<Vec3, kDofs> alpha;
  w[0] = c.axis[0] * qd[0];
  alpha[0].setZero();
  for (int j = 1; j < kDofs; ++j) {
    const Vec3 spin = c.axis[j] * qd[j];
    alpha[j] = alpha[j - 1] + w[j - 1].cross(spin);
    w[j] = w[j - 1] + spin;
  }
  const Vec3& w_neck = w[1];
  const Vec3& alpha_neck = alpha[1];
  const Vec3& w_head = w[4];
  const Vec3& alpha_head = alpha[4];

  const Vec3 a_neck = alpha_neck.cross(c.neck_cg) + w_neck.cross(w_neck.cross(c.neck_cg));
  const Vec3 a_upper =
      alpha_neck.cross(c.upper_joint) + w_neck.cross(w_neck.cross(c.upper_joint));
  const Vec3 head_rel = c.head_cg - c.upper_joint;
  const Vec3 a_head = a_upper + alpha_head.cross(head_rel) + w_head.cross(w_head.cross(head_rel));

  return p.neck_mass * c.jv_neck.transpose() * a_neck +
         c.jw_neck.transpose() * (i_neck * alpha_neck + w_neck.cross(i_neck * w_neck)) +
         p.head_mass * c.jv_head.transpose() * a_head +
         c.jw_head.transpose() * (i_head * alpha_head + w_head.cross(i_head * w_head));
}

struct Terms {
  Mat5 mass;
  JointVector forcing;
  Chain chain;
  Mat3 i_neck, i_head;
};

Terms terms_at(const JointVector& q, const JointVector& qd, double base_accel, const PlantParams& p) {
  Terms t;
  t.chain = chain_geometry(q, p);
  const Chain& c = t.chain;
  t.i_neck = world_inertia(c.r_neck, p.neck_inertia);
  t.i_head = world_inertia(c.r_head, p.head_inertia);

  // Gravity and the inertial load of the accelerating base act together.
  const Vec3 g_eff(0.0, -base_accel, -p.gravity);
  const JointVector body_forces = p.neck_mass * c.jv_neck.transpose() * g_eff +
                                  p.head_mass * c.jv_head.transpose() * g_eff;
  const JointVector passive = -p.passive_stiffness.cwiseProduct(q - p.passive_rest) -
                              p.passive_damping.cwiseProduct(qd);

  t.mass = assemble_mass(c, p, t.i_neck, t.i_head);
  t.forcing = passive + body_forces - velocity_products(c, t.i_neck, t.i_head, qd, p);
  return t;
}

}  // namespace

DynamicsTerms dynamics_terms(const PlantState& state, double base_accel, const PlantParams& p) {
  const Terms t = terms_at(state.q, state.qd, base_accel, p);
  DynamicsTerms out;
  out.mass = t.mass;
  out.forcing = t.forcing;
  return out;
}

AccelerationJacobian acceleration_jacobian(const JointVector& q, const JointVector& qd,
                                           const JointVector& tau, double base_accel,
                                           const PlantParams& p) {
  const Terms t = terms_at(q, qd, base_accel, p);
  const Eigen::LLT<Mat5> llt(t.mass);
  AccelerationJacobian out;
  out.qdd = llt.solve(tau + t.forcing);
  out.gain = llt.solve(Mat5::Identity());

  // Rates: the velocity products are quadratic, so the central difference
  // with a unit step is exact.
  Mat5 dforce;
  for (int i = 0; i < kDofs; ++i) {
    JointVector e = JointVector::Zero();
    e[i] = 1.0;
    dforce.col(i) = -0.5 * (velocity_products(t.chain, t.i_neck, t.i_head, qd + e, p) -
                            velocity_products(t.chain, t.i_neck, t.i_head, qd - e, p));
    dforce(i, i) -= p.passive_damping[i];
  }
  out.dqd = llt.solve(dforce);

  // Angles: M(q) qdd = tau + F(q) differentiated by central differences of
  // the residual at the nominal qdd. One-sided steps would break the exact
  // lateral mirror symmetry of the closed loop.
  for (int i = 0; i < kDofs; ++i) {
    const double h = 6e-6 * std::max(1.0, std::abs(q[i]));
    JointVector qp = q;
    JointVector qm = q;
    qp[i] += h;
    qm[i] -= h;
    const Terms tp = terms_at(qp, qd, base_accel, p);
    const Terms tm = terms_at(qm, qd, base_accel, p);
    dforce.col(i) = ((tp.forcing - tp.mass * out.qdd) - (tm.forcing - tm.mass * out.qdd)) / (2.0 * h);
  }
  out.dq = llt.solve(dforce);
  return out;
}

JointVector forward_dynamics_unchecked(const JointVector& q, const JointVector& qd,
                                       const JointVector& tau, double base_accel,
                                       const PlantParams& params) {
  PlantState s;
  s.q = q;
  s.qd = qd;
  const DynamicsTerms t = dynamics_terms(s, base_accel, params);
  return t.mass.llt().solve(tau + t.forcing);
}

JointVector forward_dynamics(const PlantState& state, const JointTorques& tau, double base_accel,
                             const PlantParams& params) {
  require_finite(state.q, "joint angles");
  require_finite(state.qd, "joint rates");
  require_finite(tau.tau, "joint torques");
  if (!std::isfinite(base_accel)) throw InvalidArgument("non-finite base acceleration");
  const DynamicsTerms t = dynamics_terms(state, base_accel, params);
  Eigen::LLT<Mat5> llt(t.mass);
  if (llt.info() != Eigen::Success) {
    throw Error("mass matrix is not positive definite");
  }
  return llt.solve(tau.tau + t.forcing);
}

PlantState step(const PlantState& s, const JointTorques& tau, const BaseStepSample& base,
                double dt, const PlantParams& p) {
  if (!(dt > 0.0)) throw InvalidArgument("integration step must be positive");
  require_finite(s.q, "joint angles");
  require_finite(s.qd, "joint rates");
  require_finite(tau.tau, "joint torques");

  auto accel = [&](const JointVector& q, const JointVector& qd, double a) {
    return forward_dynamics_unchecked(q, qd, tau.tau, a, p);
  };
  const double h = dt;
  const JointVector k1q = s.qd;
  const JointVector k1v = accel(s.q, s.qd, base.accel_start);
  const JointVector k2q = s.qd + 0.5 * h * k1v;
  const JointVector k2v = accel(s.q + 0.5 * h * k1q, k2q, base.accel_mid);
  const JointVector k3q = s.qd + 0.5 * h * k2v;
  const JointVector k3v = accel(s.q + 0.5 * h * k2q, k3q, base.accel_mid);
  const JointVector k4q = s.qd + h * k3v;
  const JointVector k4v = accel(s.q + h * k3q, k4q, base.accel_end);

  PlantState out;
  out.q = s.q + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
  out.qd = s.qd + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  out.base_y = base.y_end;
  out.base_vy = base.vy_end;

  if (!out.finite()) throw DivergenceError("plant state became non-finite");
  for (int i = 0; i < kDofs; ++i) {
    if (std::abs(out.q[i]) > p.joint_limits[i] + kPi / 2) {
      std::ostringstream os;
      os << "plant diverged: " << kDofNames[i] << " = " << rad2deg(out.q[i])
         << " deg exceeds its range of motion by more than 90 deg";
      throw DivergenceError(os.str());
    }
  }
  return out;
}

HeadKinematics head_kinematics(const PlantState& s, const PlantParams& p) {
  const Chain c = chain_geometry(s.q, p);
  const Mat3& r = c.r_head;
  HeadKinematics k;
  // r = Rx(roll) Ry(pitch) Rz(yaw)
  k.pitch = std::asin(std::clamp(r(0, 2), -1.0, 1.0));
  k.roll = std::atan2(-r(1, 2), r(2, 2));
  k.yaw = std::atan2(-r(0, 1), r(0, 0));

  const Vec3 w_head = c.jw_head * s.qd;
  Mat3 e;
  e.col(0) = Vec3::UnitX();
  e.col(1) = rot_x(k.roll) * Vec3::UnitY();
  e.col(2) = rot_x(k.roll) * rot_y(k.pitch) * Vec3::UnitZ();
  const Vec3 rates = e.partialPivLu().solve(w_head);
  k.wroll = rates[0];
  k.wpitch = rates[1];
  k.wyaw = rates[2];

  const Vec3 v_head = c.jv_head * s.qd;
  k.y = s.base_y + c.head_cg.y();
  k.vy = s.base_vy + v_head.y();
  k.head_t1_angle = k.pitch;
  k.cg_t1_anterior = c.head_cg.x();
  return k;
}

JointTorques gravity_compensation(const JointVector& q, const PlantParams& params) {
  PlantState s;
  s.q = q;
  const DynamicsTerms t = dynamics_terms(s, 0.0, params);
  JointTorques out;
  out.tau = -t.forcing;
  return out;
}

double kinetic_energy(const PlantState& s, const PlantParams& params) {
  return 0.5 * s.qd.dot(mass_matrix(s.q, params) * s.qd);
}

double gravitational_potential(const JointVector& q, const PlantParams& p) {
  const Chain c = chain_geometry(q, p);
  return p.gravity * (p.neck_mass * c.neck_cg.z() + p.head_mass * c.head_cg.z());
}

double potential_energy(const JointVector& q, const PlantParams& p) {
  const JointVector dq = q - p.passive_rest;
  return gravitational_potential(q, p) + 0.5 * dq.dot(p.passive_stiffness.cwiseProduct(dq));
}

}  // namespace headneck::plant
