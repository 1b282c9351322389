#pragma once

// Run configuration: a strict JSON document whose sections all default.
// Unknown keys are errors. The hash of the effective configuration tags
// every output.

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "headneck/forest.hpp"
#include "headneck/mpc.hpp"
#include "headneck/perturbation.hpp"
#include "headneck/plant.hpp"
#include "headneck/sensory.hpp"
#include "headneck/tuning.hpp"

namespace headneck::config {

/// Malformed or inconsistent configuration; the message names section.key.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class PerturbationKind { Multisine, Stationary, Pulse };

struct PerturbationConfig {
  PerturbationKind kind = PerturbationKind::Multisine;
  perturb::MultisineDefaults multisine;  // dt is taken from the simulation section
  double pulse_onset = 0.5;              // s
  double pulse_width = 0.3;              // s

  /// Base trajectory sampled at dt. Pulses use multisine.amplitude.
  perturb::BaseTrajectory build(double dt) const;
};

struct SimulationConfig {
  double duration = 10.0;  // s
  double dt = 0.01;        // s
};

enum class TuneProblem { ClosedLoop, Toy };

struct GaSection {
  tuning::GaConfig ga;
  TuneProblem problem = TuneProblem::ClosedLoop;
  std::string reference_weights = "optimized";  // vector that generates the synthetic reference
  std::string reference_series;                 // optional measured reference files
  std::string reference_frf;
};

struct IoConfig {
  std::string out_dir = "out";
  std::uint64_t seed = 1;  // drives the GA and the forest
  bool plot = false;
};

struct RunConfig {
  plant::PlantParams plant = plant::PlantParams::defaults();
  PerturbationConfig perturbation;
  std::string integrator_preset = "full_integrators";
  sensory::IntegratorConfig integrators = sensory::preset_configuration("full_integrators");
  mpc::MpcConfig mpc;
  std::string weight_preset = "optimized";
  mpc::WeightVector weights = mpc::WeightVector::optimized();
  GaSection ga;
  forest::ForestConfig forest;
  IoConfig io;
  SimulationConfig simulation;

  /// Cross-section checks (duration within the perturbation, dt grid, ...).
  void validate() const;

  /// Seed from io copied into the GA and forest settings.
  tuning::GaConfig ga_config() const;
  forest::ForestConfig forest_config() const;
};

/// Named weight vectors: optimized, sagittal_prior, sagittal_retuned.
mpc::WeightVector named_weights(const std::string& name);

RunConfig from_json(const nlohmann::json& j);
RunConfig load(const std::filesystem::path& path);
/// Effective configuration, every key present.
nlohmann::json to_json(const RunConfig& cfg);

/// FNV-1a 64 of the canonical dump of to_json without io.out_dir and
/// io.plot, as 16 hex digits.
std::string hash(const RunConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace headneck::config
