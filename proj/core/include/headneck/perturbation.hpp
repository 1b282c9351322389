#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "headneck/plant.hpp"

namespace headneck::perturb {

enum class SignalKind { Position, Acceleration };

/// Periodic multisine: y(t) = sum_i A_i sin(2 pi f_i t + phi_i).
///
/// Every excited frequency is an integer multiple of 1/period and the
/// duration holds a whole number of periods, so each period window of the
/// record contains integer cycles of every component.
struct MultisineSpec {
  std::vector<double> frequencies;  // Hz
  std::vector<double> amplitudes;   // m (Position) or m/s² (Acceleration)
  std::uint64_t phase_seed = 1;
  std::optional<std::vector<double>> phases;  // rad; overrides the seeded draw
  double period = 20.0;    // s
  double duration = 60.0;  // s
  double dt = 0.01;        // s
  SignalKind signal_kind = SignalKind::Position;

  void validate() const;
};

struct MultisineDefaults {
  double band_low = 0.25;      // Hz
  double band_high = 8.0;      // Hz
  int bins = 20;
  double amplitude = 0.001;    // m, flat up to the corner
  double corner = 2.0;         // Hz, amplitude falls as 1/f above
  double period = 20.0;
  double duration = 60.0;
  double dt = 0.01;
  std::uint64_t phase_seed = 1;
};

/// Log-spaced excited bins snapped onto the 1/period grid (collisions are
/// pushed to the next free bin), amplitudes flat below the corner and
/// proportional to 1/f above it.
MultisineSpec make_multisine_spec(const MultisineDefaults& d = {});

/// Sampled prescribed T1 lateral motion. vy and ay are analytic derivatives.
struct BaseTrajectory {
  double dt = 0.01;
  std::vector<double> t;
  std::vector<double> y;
  std::vector<double> vy;
  std::vector<double> ay;
  std::vector<double> ay_mid;  // acceleration at step midpoints (size n-1)

  // Populated for multisine trajectories; required by FRF estimation.
  std::vector<double> excited_frequencies;
  double period = 0.0;

  std::size_t size() const { return t.size(); }
  double duration() const { return t.empty() ? 0.0 : t.back(); }

  /// Base motion for the step from sample i to i+1.
  plant::BaseStepSample step_sample(std::size_t i) const;

  /// Linearly interpolated acceleration (held beyond the ends).
  double accel_at(double time) const;

  /// Lateral mirror image.
  BaseTrajectory negated() const;
};

BaseTrajectory generate_multisine(const MultisineSpec& spec);

/// Return-to-rest raised-cosine displacement bump of the given amplitude,
/// starting at onset and lasting width seconds.
BaseTrajectory step_pulse(double amplitude, double onset, double width, double duration, double dt);

BaseTrajectory stationary(double duration, double dt);

/// Phases drawn for a seed (uniform on [0, 2 pi)).
std::vector<double> draw_phases(std::uint64_t seed, std::size_t count);

}  // namespace headneck::perturb
