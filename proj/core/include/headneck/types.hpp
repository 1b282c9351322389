#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace headneck {

/// Number of actuated neck DoF. The lower-joint yaw is locked.
inline constexpr int kDofs = 5;

/// Generalized coordinate ordering shared by states, torques and weights.
enum class Dof : int {
  LowerRoll = 0,
  LowerPitch = 1,
  UpperRoll = 2,
  UpperPitch = 3,
  UpperYaw = 4,
};

inline constexpr std::array<std::string_view, kDofs> kDofNames = {
    "lower_roll", "lower_pitch", "upper_roll", "upper_pitch", "upper_yaw"};

inline constexpr int index(Dof d) { return static_cast<int>(d); }

/// True for DoFs that lie outside the sagittal plane (they flip sign under a
/// left/right mirror).
inline constexpr bool is_lateral(int dof) {
  return dof == index(Dof::LowerRoll) || dof == index(Dof::UpperRoll) ||
         dof == index(Dof::UpperYaw);
}

using JointVector = Eigen::Matrix<double, kDofs, 1>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Joint torques in DoF order [N·m].
struct JointTorques {
  JointVector tau = JointVector::Zero();

  static JointTorques zero() { return {}; }
  JointTorques& operator+=(const JointTorques& o) {
    tau += o.tau;
    return *this;
  }
  friend JointTorques operator+(JointTorques a, const JointTorques& b) { return a += b; }
};

/// Base error for all library diagnostics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input values or configuration.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Simulation left the physically meaningful range.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable or malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace headneck
