#include "headneck/analysis.hpp"

#include <cmath>
#include <numbers>

#include "table_io.hpp"

namespace headneck::analysis {

const std::array<std::string_view, kFevals> kFevalNames = {
    "roll",    "yaw",        "y",          "wroll",   "wyaw",       "vy",
    "gain_vy", "gain_wroll", "gain_wyaw", "phase_vy", "phase_wroll", "phase_wyaw"};

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::complex<double> dft_bin(std::span<const double> x, std::size_t first, std::size_t count,
                             std::size_t period_samples, long bin) {
  // Angles reduced modulo the period so long windows keep full precision.
  std::complex<double> acc = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const auto m = static_cast<long>((n * static_cast<std::size_t>(bin)) % period_samples);
    const double a = -kTwoPi * static_cast<double>(m) / static_cast<double>(period_samples);
    acc += x[first + n] * std::complex<double>(std::cos(a), std::sin(a));
  }
  return acc;
}

}  // namespace

std::vector<double> unwrap(std::vector<double> phase) {
  for (std::size_t i = 1; i < phase.size(); ++i) {
    const double d = phase[i] - phase[i - 1];
    phase[i] -= kTwoPi * std::round(d / kTwoPi);
  }
  return phase;
}

ChannelFrf estimate_frf(std::span<const double> input, std::span<const double> output, double dt,
                        double period, std::span<const double> frequencies) {
  if (input.size() != output.size()) throw InvalidArgument("frf: input and output lengths differ");
  if (!(dt > 0.0) || !(period > 0.0)) throw InvalidArgument("frf: dt and period must be positive");
  const double ps = period / dt;
  const auto p = static_cast<std::size_t>(std::llround(ps));
  if (p < 2 || std::abs(ps - static_cast<double>(p)) > 1e-6) {
    throw InvalidArgument("frf: period is not a whole number of samples");
  }
  const std::size_t periods = input.size() / p;
  if (periods < 2) throw InvalidArgument("frf: need at least two full periods, the first is discarded");
  const std::size_t count = (periods - 1) * p;

  ChannelFrf out;
  for (double f : frequencies) {
    const double kb = f * period;
    const long bin = std::lround(kb);
    if (bin < 1 || std::abs(kb - static_cast<double>(bin)) > 1e-6 || 2 * static_cast<std::size_t>(bin) >= p) {
      throw InvalidArgument("frf: " + std::to_string(f) + " Hz is not a periodic bin of the analysis window");
    }
    const std::complex<double> u = dft_bin(input, p, count, p, bin);
    const std::complex<double> y = dft_bin(output, p, count, p, bin);
    if (std::abs(u) == 0.0) {
      throw InvalidArgument("frf: input carries no energy at " + std::to_string(f) + " Hz");
    }
    const std::complex<double> h = y / u;
    out.response.push_back(h);
    out.gain.push_back(std::abs(h));
    out.phase.push_back(std::arg(h));
  }
  out.phase = unwrap(std::move(out.phase));
  return out;
}

std::array<std::vector<double>, 6> log_series(const sim::SimulationLog& log) {
  std::array<std::vector<double>, 6> s;
  for (auto& v : s) v.reserve(log.size());
  for (const auto& r : log.records) {
    const auto& k = r.kinematics;
    s[0].push_back(k.roll);
    s[1].push_back(k.yaw);
    s[2].push_back(k.y);
    s[3].push_back(k.wroll);
    s[4].push_back(k.wyaw);
    s[5].push_back(k.vy);
  }
  return s;
}

FrfEstimate estimate_frf(const sim::SimulationLog& log, double period, std::span<const double> frequencies) {
  std::vector<double> input;
  input.reserve(log.size());
  for (const auto& r : log.records) input.push_back(r.state.base_vy);
  const auto s = log_series(log);
  FrfEstimate e;
  e.frequencies.assign(frequencies.begin(), frequencies.end());
  e.channels[0] = estimate_frf(input, s[5], log.meta.dt, period, frequencies);
  e.channels[1] = estimate_frf(input, s[3], log.meta.dt, period, frequencies);
  e.channels[2] = estimate_frf(input, s[4], log.meta.dt, period, frequencies);
  return e;
}

double time_domain_rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("rmse: lengths differ (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw InvalidArgument("rmse: empty series");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

ReferenceSet ReferenceSet::from_log(const sim::SimulationLog& log, double period,
                                    std::span<const double> frequencies) {
  if (log.meta.aborted) throw InvalidArgument("reference: log is from an aborted run");
  ReferenceSet ref;
  for (const auto& r : log.records) ref.t.push_back(r.t);
  ref.series = log_series(log);
  ref.frf = estimate_frf(log, period, frequencies);
  ref.period = period;
  return ref;
}

void write_reference(const ReferenceSet& ref, const std::filesystem::path& series_csv,
                     const std::filesystem::path& frf_csv, const std::string& config_hash) {
  std::vector<std::string> header = {"t"};
  for (auto n : kSeriesNames) header.emplace_back(n);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < ref.t.size(); ++i) {
    std::vector<double> row = {ref.t[i]};
    for (const auto& s : ref.series) row.push_back(s[i]);
    rows.push_back(std::move(row));
  }
  detail::write_numeric_csv(series_csv, header, rows, config_hash);

  header = {"f"};
  for (auto n : kFrfNames) {
    header.push_back("g_" + std::string(n));
    header.push_back("p_" + std::string(n));
  }
  rows.clear();
  for (std::size_t i = 0; i < ref.frf.frequencies.size(); ++i) {
    std::vector<double> row = {ref.frf.frequencies[i]};
    for (const auto& c : ref.frf.channels) {
      row.push_back(c.gain[i]);
      row.push_back(c.phase[i]);
    }
    rows.push_back(std::move(row));
  }
  detail::write_numeric_csv(frf_csv, header, rows, config_hash);
}

ReferenceSet read_reference(const std::filesystem::path& series_csv, const std::filesystem::path& frf_csv,
                            double period) {
  ReferenceSet ref;
  ref.period = period;
  const auto ts = detail::read_numeric_csv(series_csv);
  ref.t = ts.values(ts.column("t"));
  for (std::size_t i = 0; i < kSeriesNames.size(); ++i) {
    ref.series[i] = ts.values(ts.column(std::string(kSeriesNames[i])));
  }
  const auto fs = detail::read_numeric_csv(frf_csv);
  ref.frf.frequencies = fs.values(fs.column("f"));
  for (std::size_t c = 0; c < kFrfNames.size(); ++c) {
    auto& ch = ref.frf.channels[c];
    ch.gain = fs.values(fs.column("g_" + std::string(kFrfNames[c])));
    ch.phase = fs.values(fs.column("p_" + std::string(kFrfNames[c])));
    for (std::size_t i = 0; i < ch.gain.size(); ++i) ch.response.push_back(std::polar(ch.gain[i], ch.phase[i]));
  }
  return ref;
}

FevalVector evaluate_fevals(const sim::SimulationLog& log, const ReferenceSet& ref, const FevalOptions& options) {
  FevalVector f;
  if (log.meta.aborted) {
    f.fill(options.penalty);
    return f;
  }
  if (log.size() != ref.t.size()) {
    throw InvalidArgument("fevals: log has " + std::to_string(log.size()) + " samples, reference " +
                          std::to_string(ref.t.size()));
  }
  for (std::size_t i = 0; i < ref.t.size(); ++i) {
    if (std::abs(log.records[i].t - ref.t[i]) > 1e-9) {
      throw InvalidArgument("fevals: log and reference time grids differ");
    }
  }
  const auto s = log_series(log);
  for (std::size_t i = 0; i < 6; ++i) f[i] = time_domain_rmse(s[i], ref.series[i]);

  const FrfEstimate e = estimate_frf(log, ref.period, ref.frf.frequencies);
  const std::size_t bins = ref.frf.frequencies.size();
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> gs(bins), gr(bins), dp(bins, 0.0);
    for (std::size_t i = 0; i < bins; ++i) {
      gs[i] = 20.0 * std::log10(e.channels[c].gain[i]);
      gr[i] = 20.0 * std::log10(ref.frf.channels[c].gain[i]);
      const double d = e.channels[c].phase[i] - ref.frf.channels[c].phase[i];
      dp[i] = (d - kTwoPi * std::floor((d + std::numbers::pi) / kTwoPi)) * 180.0 / std::numbers::pi;
    }
    f[6 + c] = time_domain_rmse(gs, gr);
    f[9 + c] = time_domain_rmse(dp, std::vector<double>(bins, 0.0));
  }
  for (double& v : f) {
    if (!std::isfinite(v)) v = options.penalty;
  }
  return f;
}

}  // namespace headneck::analysis
