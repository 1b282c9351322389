#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "headneck/plant.hpp"

namespace headneck::sensory {

/// Exact (noise- and delay-free) sensory signals for one plant state.
struct SensoryFeedback {
  JointVector joint_rates = JointVector::Zero();   // somatosensory
  Vec3 head_in_space_angles = Vec3::Zero();        // vestibular roll, pitch, yaw
  Vec3 head_in_space_rates = Vec3::Zero();
  JointVector head_on_trunk_angles = JointVector::Zero();
};

SensoryFeedback sense(const plant::PlantState& state, const plant::PlantParams& params);

enum Joint : int { kLowerJoint = 0, kUpperJoint = 1 };

/// Joint a DoF belongs to.
inline constexpr int joint_of(int dof) { return dof < 2 ? kLowerJoint : kUpperJoint; }

/// Head-in-space axis (0 roll, 1 pitch, 2 yaw) a DoF rotates about.
inline constexpr int axis_of(int dof) {
  constexpr std::array<int, kDofs> axes = {0, 1, 0, 1, 2};
  return axes[static_cast<std::size_t>(dof)];
}

/// Head-in-space (HiS) and head-on-trunk (HoT) posture integrators.
///
/// A HiS channel on a joint integrates, for each DoF of that joint, the
/// head-in-space angle about the same axis; a HoT channel integrates the
/// DoF's own angle. Both integrate the deviation from a reference posture
/// and feed back -gain * integral.
struct IntegratorConfig {
  std::array<bool, 2> his_enabled{false, false};  // [lower, upper]
  std::array<bool, 2> hot_enabled{false, false};
  std::array<double, 2> his_gain{4.0, 4.0};       // N·m/(rad·s)
  std::array<double, 2> hot_gain{4.0, 4.0};
  double windup_limit = 1.0;                      // rad·s
  Vec3 his_reference = Vec3::Zero();              // rad
  JointVector hot_reference = JointVector::Zero();

  bool any_enabled() const;
  void validate() const;
};

struct IntegratorState {
  JointVector his_integral = JointVector::Zero();  // rad·s per DoF channel
  JointVector hot_integral = JointVector::Zero();
};

struct IntegratorUpdate {
  IntegratorState state;
  JointTorques torques;
};

IntegratorUpdate integrator_update(const IntegratorState& istate, const SensoryFeedback& fb,
                                   const IntegratorConfig& cfg, double dt);

inline constexpr std::array<std::string_view, 3> kPresetNames = {"muscle", "muscle_unhis",
                                                                 "full_integrators"};

/// "muscle": no integrators; "muscle_unhis": HiS at the upper joint only;
/// "full_integrators": HiS and HoT at both joints.
IntegratorConfig preset_configuration(std::string_view name);

/// Sets HiS/HoT references to the posture of the given state.
void set_reference(IntegratorConfig& cfg, const plant::PlantState& state,
                   const plant::PlantParams& params);

}  // namespace headneck::sensory
