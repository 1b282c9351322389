#include "headneck/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace headneck::perturb {
namespace {

bool is_integer_multiple(double value, double unit) {
  const double ratio = value / unit;
  return std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, std::abs(ratio));
}

std::size_t sample_count(double duration, double dt) {
  return static_cast<std::size_t>(std::llround(duration / dt)) + 1;
}

}  // namespace

void MultisineSpec::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("perturbation.dt must be positive");
  if (!(period > 0.0)) throw InvalidArgument("perturbation.period must be positive");
  if (!(duration >= period)) throw InvalidArgument("perturbation.duration must cover one period");
  if (!is_integer_multiple(duration, period)) {
    throw InvalidArgument("perturbation.duration must be a whole number of periods");
  }
  if (!is_integer_multiple(duration, dt)) {
    throw InvalidArgument("perturbation.dt must divide the duration");
  }
  if (!is_integer_multiple(period, dt)) {
    throw InvalidArgument("perturbation.dt must divide the period");
  }
  if (frequencies.size() != amplitudes.size()) {
    throw InvalidArgument("perturbation: frequencies and amplitudes differ in length");
  }
  if (phases && phases->size() != frequencies.size()) {
    throw InvalidArgument("perturbation: phases and frequencies differ in length");
  }
  std::set<long long> bins;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    const double f = frequencies[i];
    std::ostringstream os;
    if (!(f > 0.0) || !std::isfinite(f)) {
      os << "perturbation: excited bin " << i << " (" << f << " Hz) must be positive";
      throw InvalidArgument(os.str());
    }
    if (!is_integer_multiple(f, 1.0 / period)) {
      os << "perturbation: excited bin " << i << " (" << f
         << " Hz) is not an integer multiple of 1/period = " << 1.0 / period << " Hz";
      throw InvalidArgument(os.str());
    }
    if (f >= 0.5 / dt) {
      os << "perturbation: excited bin " << i << " (" << f << " Hz) is above Nyquist";
      throw InvalidArgument(os.str());
    }
    if (!bins.insert(std::llround(f * period)).second) {
      os << "perturbation: excited bin " << i << " (" << f << " Hz) is duplicated";
      throw InvalidArgument(os.str());
    }
    if (!std::isfinite(amplitudes[i])) throw InvalidArgument("perturbation: non-finite amplitude");
  }
}

MultisineSpec make_multisine_spec(const MultisineDefaults& d) {
  if (d.bins < 1 || !(d.band_high > d.band_low) || !(d.band_low > 0.0)) {
    throw InvalidArgument("perturbation: invalid band or bin count");
  }
  MultisineSpec spec;
  spec.period = d.period;
  spec.duration = d.duration;
  spec.dt = d.dt;
  spec.phase_seed = d.phase_seed;
  const double resolution = 1.0 / d.period;
  std::set<long long> used;
  for (int i = 0; i < d.bins; ++i) {
    const double frac = d.bins == 1 ? 0.0 : static_cast<double>(i) / (d.bins - 1);
    const double f = d.band_low * std::pow(d.band_high / d.band_low, frac);
    long long k = std::max<long long>(1, std::llround(f / resolution));
    while (used.count(k) != 0) ++k;
    used.insert(k);
  }
  for (long long k : used) {
    const double f = static_cast<double>(k) * resolution;
    spec.frequencies.push_back(f);
    spec.amplitudes.push_back(f <= d.corner ? d.amplitude : d.amplitude * d.corner / f);
  }
  return spec;
}

std::vector<double> draw_phases(std::uint64_t seed, std::size_t count) {
  std::mt19937_64 rng(seed);
  std::vector<double> phases(count);
  for (auto& p : phases) {
    // 53 random mantissa bits; avoids distribution implementation differences.
    p = 2.0 * kPi * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  }
  return phases;
}

BaseTrajectory generate_multisine(const MultisineSpec& spec) {
  spec.validate();
  const std::size_t n = sample_count(spec.duration, spec.dt);
  const std::vector<double> phases =
      spec.phases ? *spec.phases : draw_phases(spec.phase_seed, spec.frequencies.size());

  BaseTrajectory traj;
  traj.dt = spec.dt;
  traj.period = spec.period;
  traj.excited_frequencies = spec.frequencies;
  traj.t.resize(n);
  traj.y.assign(n, 0.0);
  traj.vy.assign(n, 0.0);
  traj.ay.assign(n, 0.0);
  traj.ay_mid.assign(n - 1, 0.0);

  for (std::size_t k = 0; k < n; ++k) traj.t[k] = static_cast<double>(k) * spec.dt;

  for (std::size_t i = 0; i < spec.frequencies.size(); ++i) {
    const double w = 2.0 * kPi * spec.frequencies[i];
    // Position amplitude of this component.
    const double a = spec.signal_kind == SignalKind::Position ? spec.amplitudes[i]
                                                              : -spec.amplitudes[i] / (w * w);
    for (std::size_t k = 0; k < n; ++k) {
      const double arg = w * traj.t[k] + phases[i];
      const double s = std::sin(arg), c = std::cos(arg);
      traj.y[k] += a * s;
      traj.vy[k] += a * w * c;
      traj.ay[k] -= a * w * w * s;
      if (k + 1 < n) {
        traj.ay_mid[k] -= a * w * w * std::sin(w * (traj.t[k] + 0.5 * spec.dt) + phases[i]);
      }
    }
  }
  return traj;
}

BaseTrajectory step_pulse(double amplitude, double onset, double width, double duration,
                          double dt) {
  if (!(dt > 0.0) || !(duration > 0.0)) throw InvalidArgument("pulse: dt and duration must be positive");
  if (!(width > 0.0)) throw InvalidArgument("pulse: width must be positive");
  if (width > duration) throw InvalidArgument("pulse: width exceeds duration");
  if (!(onset >= 0.0)) throw InvalidArgument("pulse: onset must be non-negative");

  const std::size_t n = sample_count(duration, dt);
  const double w = 2.0 * kPi / width;
  auto eval = [&](double time, double& y, double& v, double& a) {
    const double s = time - onset;
    if (s < 0.0 || s > width) {
      y = v = a = 0.0;
      return;
    }
    y = 0.5 * amplitude * (1.0 - std::cos(w * s));
    v = 0.5 * amplitude * w * std::sin(w * s);
    a = 0.5 * amplitude * w * w * std::cos(w * s);
  };

  BaseTrajectory traj;
  traj.dt = dt;
  traj.t.resize(n);
  traj.y.resize(n);
  traj.vy.resize(n);
  traj.ay.resize(n);
  traj.ay_mid.resize(n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    traj.t[k] = static_cast<double>(k) * dt;
    eval(traj.t[k], traj.y[k], traj.vy[k], traj.ay[k]);
    if (k + 1 < n) {
      double y, v;
      eval(traj.t[k] + 0.5 * dt, y, v, traj.ay_mid[k]);
    }
  }
  return traj;
}

BaseTrajectory stationary(double duration, double dt) {
  if (!(dt > 0.0) || !(duration > 0.0)) throw InvalidArgument("trajectory: dt and duration must be positive");
  const std::size_t n = sample_count(duration, dt);
  BaseTrajectory traj;
  traj.dt = dt;
  traj.t.resize(n);
  for (std::size_t k = 0; k < n; ++k) traj.t[k] = static_cast<double>(k) * dt;
  traj.y.assign(n, 0.0);
  traj.vy.assign(n, 0.0);
  traj.ay.assign(n, 0.0);
  traj.ay_mid.assign(n - 1, 0.0);
  return traj;
}

plant::BaseStepSample BaseTrajectory::step_sample(std::size_t i) const {
  if (i + 1 >= t.size()) throw InvalidArgument("trajectory: step beyond the last sample");
  plant::BaseStepSample s;
  s.accel_start = ay[i];
  s.accel_end = ay[i + 1];
  s.accel_mid = ay_mid.size() == t.size() - 1 ? ay_mid[i] : 0.5 * (ay[i] + ay[i + 1]);
  s.y_end = y[i + 1];
  s.vy_end = vy[i + 1];
  return s;
}

double BaseTrajectory::accel_at(double time) const {
  if (t.empty()) return 0.0;
  if (time <= t.front()) return ay.front();
  if (time >= t.back()) return ay.back();
  const double pos = (time - t.front()) / dt;
  const auto i = std::min(static_cast<std::size_t>(pos), t.size() - 2);
  const double frac = pos - static_cast<double>(i);
  return ay[i] + frac * (ay[i + 1] - ay[i]);
}

BaseTrajectory BaseTrajectory::negated() const {
  BaseTrajectory m = *this;
  for (auto* v : {&m.y, &m.vy, &m.ay, &m.ay_mid}) {
    for (double& x : *v) x = -x;
  }
  return m;
}

}  // namespace headneck::perturb
