#include "headneck/sensory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace headneck::sensory {

SensoryFeedback sense(const plant::PlantState& state, const plant::PlantParams& params) {
  const plant::HeadKinematics k = plant::head_kinematics(state, params);
  SensoryFeedback fb;
  fb.joint_rates = state.qd;
  fb.head_in_space_angles = Vec3(k.roll, k.pitch, k.yaw);
  fb.head_in_space_rates = Vec3(k.wroll, k.wpitch, k.wyaw);
  fb.head_on_trunk_angles = state.q;
  return fb;
}

bool IntegratorConfig::any_enabled() const {
  return his_enabled[0] || his_enabled[1] || hot_enabled[0] || hot_enabled[1];
}

void IntegratorConfig::validate() const {
  for (int j = 0; j < 2; ++j) {
    if (!(his_gain[j] >= 0.0) || !(hot_gain[j] >= 0.0) || !std::isfinite(his_gain[j]) ||
        !std::isfinite(hot_gain[j])) {
      throw InvalidArgument("integrators: gains must be finite and non-negative");
    }
  }
  if (!(windup_limit > 0.0) || !std::isfinite(windup_limit)) {
    throw InvalidArgument("integrators.windup_limit must be positive");
  }
}

IntegratorUpdate integrator_update(const IntegratorState& istate, const SensoryFeedback& fb,
                                   const IntegratorConfig& cfg, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("integrator step must be positive");
  IntegratorUpdate out;
  out.state = istate;
  const double lim = cfg.windup_limit;
  for (int dof = 0; dof < kDofs; ++dof) {
    const int joint = joint_of(dof);
    double torque = 0.0;
    if (cfg.his_enabled[joint]) {
      const int axis = axis_of(dof);
      const double err = fb.head_in_space_angles[axis] - cfg.his_reference[axis];
      double& integral = out.state.his_integral[dof];
      integral = std::clamp(integral + err * dt, -lim, lim);
      torque -= cfg.his_gain[joint] * integral;
    }
    if (cfg.hot_enabled[joint]) {
      const double err = fb.head_on_trunk_angles[dof] - cfg.hot_reference[dof];
      double& integral = out.state.hot_integral[dof];
      integral = std::clamp(integral + err * dt, -lim, lim);
      torque -= cfg.hot_gain[joint] * integral;
    }
    out.torques.tau[dof] = torque;
  }
  return out;
}

IntegratorConfig preset_configuration(std::string_view name) {
  IntegratorConfig cfg;
  if (name == "muscle") return cfg;
  if (name == "muscle_unhis") {
    cfg.his_enabled[kUpperJoint] = true;
    return cfg;
  }
  if (name == "full_integrators") {
    cfg.his_enabled = {true, true};
    cfg.hot_enabled = {true, true};
    return cfg;
  }
  std::string msg = "unknown integrator preset '" + std::string(name) + "'; valid presets:";
  for (auto p : kPresetNames) msg += " " + std::string(p);
  throw InvalidArgument(msg);
}

void set_reference(IntegratorConfig& cfg, const plant::PlantState& state,
                   const plant::PlantParams& params) {
  const SensoryFeedback fb = sense(state, params);
  cfg.his_reference = fb.head_in_space_angles;
  cfg.hot_reference = fb.head_on_trunk_angles;
}

}  // namespace headneck::sensory
