#pragma once

// Objectives comparing a simulated run with a reference: time-domain RMSEs
// and errors of the T1-to-head frequency responses.

#include <array>
#include <complex>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "headneck/sim.hpp"

namespace headneck::analysis {

/// Time-domain channels, in objective order.
inline constexpr std::array<std::string_view, 6> kSeriesNames = {"roll",  "yaw",  "y",
                                                                 "wroll", "wyaw", "vy"};
/// FRF output channels (input is T1 lateral velocity), in objective order.
inline constexpr std::array<std::string_view, 3> kFrfNames = {"vy", "wroll", "wyaw"};

inline constexpr std::size_t kFevals = 12;
using FevalVector = std::array<double, kFevals>;
/// {roll, yaw, y, wroll, wyaw, vy, gain vy, gain wroll, gain wyaw, phase vy,
/// phase wroll, phase wyaw}
extern const std::array<std::string_view, kFevals> kFevalNames;

struct ChannelFrf {
  std::vector<std::complex<double>> response;  // output / input per bin
  std::vector<double> gain;                    // |response|, output units per input unit
  std::vector<double> phase;                   // rad, unwrapped across bins
};

struct FrfEstimate {
  std::vector<double> frequencies;  // Hz
  std::array<ChannelFrf, 3> channels;
};

/// DFT ratio at each frequency over the whole periods after the first one.
/// Every frequency must sit on the 1/period grid and the series must cover
/// at least two periods.
ChannelFrf estimate_frf(std::span<const double> input, std::span<const double> output, double dt,
                        double period, std::span<const double> frequencies);

/// Head vy, wroll and wyaw against the logged T1 velocity.
FrfEstimate estimate_frf(const sim::SimulationLog& log, double period, std::span<const double> frequencies);

/// sqrt(mean((a - b)^2)).
double time_domain_rmse(std::span<const double> a, std::span<const double> b);

/// Unwraps a phase sequence so consecutive jumps stay within pi.
std::vector<double> unwrap(std::vector<double> phase);

struct ReferenceSet {
  std::vector<double> t;
  std::array<std::vector<double>, 6> series;  // kSeriesNames order
  FrfEstimate frf;
  double period = 20.0;  // s, multisine period used for the FRF

  static ReferenceSet from_log(const sim::SimulationLog& log, double period,
                               std::span<const double> frequencies);
};

std::array<std::vector<double>, 6> log_series(const sim::SimulationLog& log);

/// Two files: time series (t,roll,yaw,y,wroll,wyaw,vy) and FRF
/// (f,g_vy,p_vy,g_wroll,p_wroll,g_wyaw,p_wyaw), gains linear, phases in rad.
void write_reference(const ReferenceSet& ref, const std::filesystem::path& series_csv,
                     const std::filesystem::path& frf_csv, const std::string& config_hash = {});
ReferenceSet read_reference(const std::filesystem::path& series_csv, const std::filesystem::path& frf_csv,
                            double period);

struct FevalOptions {
  double penalty = 1e3;  // every objective of an aborted run
};

/// Gains compared in dB, phases in degrees with the per-bin difference
/// wrapped to [-180, 180).
FevalVector evaluate_fevals(const sim::SimulationLog& log, const ReferenceSet& ref,
                            const FevalOptions& options = {});

}  // namespace headneck::analysis
