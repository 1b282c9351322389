#pragma once

// Subcommands of the headneck tool. Each writes its artifacts under the
// output directory and returns an exit code; errors propagate as exceptions
// and are mapped to exit codes by run().

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "headneck/config.hpp"

namespace headneck::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;  // config, usage or input-file errors
inline constexpr int kExitAbort = 3;  // simulation aborted or diverged

struct GlobalOptions {
  std::string config;  // empty: all defaults
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool plot = false;
};

/// Loads the config file and applies the global overrides.
config::RunConfig resolve(const GlobalOptions& g);

struct SimulateOptions {
  std::optional<std::string> preset;   // integrator preset
  std::optional<std::string> weights;  // named weight vector
  std::optional<double> duration;
};
int cmd_simulate(const config::RunConfig& cfg, const SimulateOptions& o, std::ostream& out);

struct PostureOptions {
  std::string presets = "all";
  double duration = 10.0;
};
int cmd_posture(const config::RunConfig& cfg, const PostureOptions& o, std::ostream& out);

struct FrfOptions {
  std::string log;   // log.csv with meta.json beside it; empty: simulate from the config
  std::string meta;  // overrides the sibling meta.json
  std::string reference_series;
  std::string reference_frf;
};
int cmd_frf(const config::RunConfig& cfg, const FrfOptions& o, std::ostream& out);

struct TuneOptions {
  std::string resume;  // samples.csv of an interrupted run
};
int cmd_tune(const config::RunConfig& cfg, const TuneOptions& o, std::ostream& out);

struct ImportanceOptions {
  std::string samples;
};
int cmd_importance(const config::RunConfig& cfg, const ImportanceOptions& o, std::ostream& out);

/// Full command line: parse, dispatch and map exceptions to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace headneck::cli
