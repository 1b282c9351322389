#pragma once

// Multi-objective genetic search (NSGA-II) over real vectors with a Pareto
// archive of everything evaluated.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "headneck/analysis.hpp"
#include "headneck/mpc.hpp"

namespace headneck::tuning {

using Genome = std::vector<double>;
using Objectives = std::vector<double>;

/// a <= b everywhere and a < b somewhere.
bool dominates(const Objectives& a, const Objectives& b);

struct GaConfig {
  int population = 32;
  int generations = 20;  // including the initial random population
  double crossover_probability = 0.9;
  double crossover_eta = 15.0;
  double mutation_probability = -1.0;  // per gene; negative means 1 / dimension
  double mutation_eta = 20.0;
  std::vector<double> lower = std::vector<double>(mpc::kWeightCount, 0.1);
  std::vector<double> upper = std::vector<double>(mpc::kWeightCount, 100.0);
  bool log_space = false;  // operators act on log(x); requires lower > 0
  std::uint64_t seed = 1;
  int threads = 1;
  std::size_t objectives = analysis::kFevals;
  double penalty = 1e3;  // every objective of a candidate whose evaluation throws

  std::size_t dimension() const { return lower.size(); }
  void validate() const;
};

struct Evaluation {
  Genome x;
  Objectives f;
  int generation = 0;
};

/// Mutually non-dominated evaluations. Entries whose objectives equal an
/// existing entry's are not added.
class ParetoArchive {
 public:
  /// Returns true when e entered the archive.
  bool insert(const Evaluation& e);
  const std::vector<Evaluation>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<Evaluation> entries_;
};

/// O(n^2) filter returning the indices of non-dominated points (duplicates
/// kept once, first occurrence).
std::vector<std::size_t> non_dominated_indices(const std::vector<Objectives>& points);

/// Fronts of fast non-dominated sorting, best first.
std::vector<std::vector<std::size_t>> non_dominated_sort(const std::vector<Objectives>& points);

/// Crowding distance of each member of one front (boundary points infinite).
std::vector<double> crowding_distance(const std::vector<Objectives>& points, const std::vector<std::size_t>& front);

/// Entry nearest the per-objective minima after scaling each objective by its
/// range over the archive. Ties go to the first entry.
const Evaluation& select_knee(const ParetoArchive& archive);

/// Must be safe to call concurrently from several threads.
using Evaluator = std::function<Objectives(const Genome&)>;

struct GaResult {
  ParetoArchive archive;
  std::vector<Evaluation> samples;  // every evaluation, in order
  std::vector<Evaluation> population;  // final parent population
};

/// Called after each generation with its index and the state so far.
using GenerationCallback = std::function<void(int generation, const GaResult& state)>;

/// Deterministic per (cfg, evaluator). When resume holds samples of an
/// earlier run with the same cfg, those generations are replayed instead of
/// re-evaluated and the search continues where it stopped.
GaResult run_ga(const GaConfig& cfg, const Evaluator& evaluator, const std::vector<Evaluation>& resume = {},
                const GenerationCallback& on_generation = {});

/// CSV with columns x_names..., f_names..., generation.
void write_evaluations(const std::filesystem::path& path, const std::vector<Evaluation>& evals,
                       const std::vector<std::string>& x_names, const std::vector<std::string>& f_names,
                       const std::string& config_hash = {});
std::vector<Evaluation> read_evaluations(const std::filesystem::path& path, const std::vector<std::string>& x_names,
                                         const std::vector<std::string>& f_names);

/// JSON document {"config_hash", "x_names", "f_names", "entries": [{"x", "f", "generation"}], "knee"}.
void write_archive_json(const std::filesystem::path& path, const ParetoArchive& archive,
                        const std::vector<std::string>& x_names, const std::vector<std::string>& f_names,
                        const std::string& config_hash);

std::vector<std::string> weight_names();
std::vector<std::string> feval_names();

/// Closed-loop objective: simulate with candidate weights and compare with
/// the reference. Aborted runs score the feval penalty.
struct ClosedLoopProblem {
  plant::PlantParams plant;
  sensory::IntegratorConfig integrators;
  mpc::MpcConfig mpc;
  perturb::BaseTrajectory base;
  double duration = 20.0;
  analysis::ReferenceSet reference;
  analysis::FevalOptions fevals;

  Objectives evaluate(const Genome& weights) const;
  Evaluator evaluator() const;
};

}  // namespace headneck::tuning
