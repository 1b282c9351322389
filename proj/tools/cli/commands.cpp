#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "headneck/analysis.hpp"
#include "headneck/forest.hpp"
#include "headneck/sim.hpp"
#include "headneck/tuning.hpp"
#include "svg.hpp"

namespace headneck::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path out_dir(const config::RunConfig& cfg) {
  fs::path d = cfg.io.out_dir;
  fs::create_directories(d);
  return d;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setw(2) << j << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

sensory::IntegratorConfig preset_or_config_error(const std::string& name) {
  try {
    return sensory::preset_configuration(name);
  } catch (const InvalidArgument& e) {
    throw config::ConfigError(std::string("unknown preset: ") + e.what());
  }
}

sim::SimulationLog simulate(const config::RunConfig& c, const perturb::BaseTrajectory& base,
                            const std::string& hash) {
  sim::RunOptions ro;
  ro.config_hash = hash;
  ro.seed = c.io.seed;
  return sim::run_closed_loop(c.plant, c.integrators, c.mpc, c.weights, base, c.simulation.duration,
                              c.simulation.dt, ro);
}

// meta.json plus what FRF estimation needs later and the effective config.
void write_run_metadata(const sim::SimulationLog& log, const perturb::BaseTrajectory& base,
                        const config::RunConfig& c, const fs::path& path) {
  sim::write_metadata(log, path);
  json j = read_json(path);
  j["perturbation"] = {{"period", base.period}, {"excited_frequencies", base.excited_frequencies}};
  j["config"] = config::to_json(c);
  write_json(path, j);
}

std::vector<double> column(const sim::SimulationLog& log, double (*f)(const sim::StepRecord&)) {
  std::vector<double> v;
  v.reserve(log.size());
  for (const auto& r : log.records) v.push_back(f(r));
  return v;
}

double db(double g) { return 20.0 * std::log10(std::max(g, 1e-300)); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double sum(const std::vector<double>& f) { return std::accumulate(f.begin(), f.end(), 0.0); }

}  // namespace

config::RunConfig resolve(const GlobalOptions& g) {
  config::RunConfig c = g.config.empty() ? config::from_json(json::object()) : config::load(g.config);
  if (g.seed) c.io.seed = *g.seed;
  if (g.out) c.io.out_dir = *g.out;
  if (g.plot) c.io.plot = true;
  return c;
}

int cmd_simulate(const config::RunConfig& cfg, const SimulateOptions& o, std::ostream& out) {
  config::RunConfig c = cfg;
  if (o.preset) {
    c.integrator_preset = *o.preset;
    c.integrators = preset_or_config_error(*o.preset);
  }
  if (o.weights) {
    c.weight_preset = *o.weights;
    c.weights = config::named_weights(*o.weights);
  }
  if (o.duration) c.simulation.duration = *o.duration;
  c.validate();
  const std::string hash = config::hash(c);
  const fs::path dir = out_dir(c);
  const perturb::BaseTrajectory base = c.perturbation.build(c.simulation.dt);
  const sim::SimulationLog log = simulate(c, base, hash);
  sim::write_csv(log, dir / "log.csv");
  write_run_metadata(log, base, c, dir / "meta.json");

  if (c.io.plot) {
    auto t = column(log, [](const sim::StepRecord& r) { return r.t; });
    svg::Panel base_p{"T1 lateral motion", "t (s)", "mm", {}};
    base_p.series.push_back({"y", t, column(log, [](const sim::StepRecord& r) { return 1e3 * r.state.base_y; })});
    svg::Panel head{"Head in space", "t (s)", "deg", {}};
    head.series.push_back({"roll", t, column(log, [](const sim::StepRecord& r) { return rad2deg(r.kinematics.roll); })});
    head.series.push_back({"pitch", t, column(log, [](const sim::StepRecord& r) { return rad2deg(r.kinematics.pitch); })});
    head.series.push_back({"yaw", t, column(log, [](const sim::StepRecord& r) { return rad2deg(r.kinematics.yaw); })});
    svg::Panel joints{"Joint angles", "t (s)", "deg", {}};
    for (int d = 0; d < kDofs; ++d) {
      std::vector<double> q;
      for (const auto& r : log.records) q.push_back(rad2deg(r.state.q(d)));
      joints.series.push_back({std::string(kDofNames[static_cast<std::size_t>(d)]), t, q});
    }
    svg::write(dir / "timeseries.svg", svg::line_chart({base_p, head, joints}, "Closed-loop response", hash));
  }

  const auto& m = log.meta;
  out << "simulated " << m.simulated << " s in " << fmt("%.3f", m.wall_time) << " s wall, RTF "
      << fmt("%.3f", m.rtf) << " (wall/simulated)\n";
  out << "wrote " << (dir / "log.csv").string() << " and " << (dir / "meta.json").string() << '\n';
  if (m.aborted) {
    out << "run aborted: " << m.diagnostic << '\n';
    return kExitAbort;
  }
  return kExitOk;
}

int cmd_posture(const config::RunConfig& cfg, const PostureOptions& o, std::ostream& out) {
  std::vector<std::string> presets;
  if (o.presets == "all") {
    for (auto p : sensory::kPresetNames) presets.emplace_back(p);
  } else {
    std::stringstream ss(o.presets);
    for (std::string p; std::getline(ss, p, ',');) presets.push_back(p);
  }
  if (presets.empty()) throw config::ConfigError("posture: no presets given");
  if (!(o.duration > 0.0)) throw config::ConfigError("posture: --duration must be positive");
  config::RunConfig c = cfg;
  c.validate();
  const std::string hash = config::hash(c);
  const fs::path dir = out_dir(c);
  const perturb::BaseTrajectory still = perturb::stationary(o.duration, c.simulation.dt);

  struct Row {
    std::string preset;
    sim::SimulationLog log;
    sim::SteadyStateReport rep;
  };
  std::vector<Row> rows;
  for (const auto& p : presets) {
    c.integrators = preset_or_config_error(p);
    sim::RunOptions ro;
    ro.config_hash = hash;
    ro.seed = c.io.seed;
    Row r{p, sim::run_closed_loop(c.plant, c.integrators, c.mpc, c.weights, still, o.duration, c.simulation.dt, ro),
          {}};
    r.rep = sim::steady_state_report(r.log, c.plant);
    rows.push_back(std::move(r));
  }

  std::ofstream csv(dir / "posture.csv");
  if (!csv) throw IoError("cannot open " + (dir / "posture.csv").string() + " for writing");
  csv << "# config_hash=" << hash << "\npreset,settled,settling_time_s";
  for (auto n : kDofNames) csv << ",err_" << n << "_deg";
  csv << ",head_pitch_error_deg,head_t1_angle_deg,cg_t1_anterior_mm,aborted\n";
  out << std::left << std::setw(18) << "preset" << std::right << std::setw(9) << "settle_s" << std::setw(11)
      << "lower_p" << std::setw(11) << "upper_p" << std::setw(11) << "head_p" << std::setw(11) << "cg_mm" << '\n';
  bool aborted = false;
  for (const Row& r : rows) {
    csv << r.preset << ',' << (r.rep.settled ? 1 : 0) << ',' << fmt("%.17g", r.rep.settling_time);
    for (int d = 0; d < kDofs; ++d) csv << ',' << fmt("%.17g", rad2deg(r.rep.joint_errors(d)));
    csv << ',' << fmt("%.17g", rad2deg(r.rep.head_pitch_error)) << ',' << fmt("%.17g", rad2deg(r.rep.head_t1_angle))
        << ',' << fmt("%.17g", 1e3 * r.rep.cg_t1_anterior) << ',' << (r.log.meta.aborted ? 1 : 0) << '\n';
    out << std::left << std::setw(18) << r.preset << std::right << std::setw(9)
        << (r.rep.settled ? fmt("%.2f", r.rep.settling_time) : std::string("-")) << std::setw(11)
        << fmt("%.3f", rad2deg(r.rep.joint_errors(1))) << std::setw(11) << fmt("%.3f", rad2deg(r.rep.joint_errors(3)))
        << std::setw(11) << fmt("%.3f", rad2deg(r.rep.head_pitch_error)) << std::setw(11)
        << fmt("%.2f", 1e3 * r.rep.cg_t1_anterior) << '\n';
    if (r.log.meta.aborted) {
      out << r.preset << " aborted: " << r.log.meta.diagnostic << '\n';
      aborted = true;
    }
  }
  csv.close();
  if (!csv) throw IoError("write failed: " + (dir / "posture.csv").string());
  out << "errors in deg (final minus initial); wrote " << (dir / "posture.csv").string() << '\n';

  if (c.io.plot) {
    svg::Panel lower{"Lower neck pitch", "t (s)", "deg", {}}, upper{"Upper neck pitch", "t (s)", "deg", {}},
        head{"Head-in-space pitch", "t (s)", "deg", {}}, cg{"Head CG anterior of T1", "t (s)", "mm", {}};
    for (const Row& r : rows) {
      auto t = column(r.log, [](const sim::StepRecord& s) { return s.t; });
      lower.series.push_back({r.preset, t, column(r.log, [](const sim::StepRecord& s) { return rad2deg(s.state.q(1)); })});
      upper.series.push_back({r.preset, t, column(r.log, [](const sim::StepRecord& s) { return rad2deg(s.state.q(3)); })});
      head.series.push_back({r.preset, t, column(r.log, [](const sim::StepRecord& s) { return rad2deg(s.kinematics.pitch); })});
      cg.series.push_back({r.preset, t, column(r.log, [](const sim::StepRecord& s) { return 1e3 * s.kinematics.cg_t1_anterior; })});
    }
    svg::write(dir / "posture.svg", svg::line_chart({lower, upper, head, cg}, "Unperturbed posture", hash));
  }
  return aborted ? kExitAbort : kExitOk;
}

int cmd_frf(const config::RunConfig& cfg, const FrfOptions& o, std::ostream& out) {
  config::RunConfig c = cfg;
  c.validate();
  std::string hash = config::hash(c);
  const fs::path dir = out_dir(c);
  sim::SimulationLog log;
  double period = 0.0;
  std::vector<double> freqs;
  if (!o.log.empty()) {
    const fs::path meta = o.meta.empty() ? fs::path(o.log).parent_path() / "meta.json" : fs::path(o.meta);
    const std::string missing = o.log + ": missing excited-bin metadata (perturbation.period and "
                                "perturbation.excited_frequencies in " + meta.string() + ")";
    if (!fs::exists(meta)) throw IoError(missing);
    log = sim::read_log(o.log, meta);
    const json j = read_json(meta);
    const json* p = j.contains("perturbation") ? &j.at("perturbation") : nullptr;
    if (!p || !p->contains("period") || !p->contains("excited_frequencies") ||
        !p->at("excited_frequencies").is_array() || p->at("excited_frequencies").empty()) {
      throw IoError(missing);
    }
    try {
      period = p->at("period").get<double>();
      freqs = p->at("excited_frequencies").get<std::vector<double>>();
    } catch (const json::exception&) {
      throw IoError(missing);
    }
    if (!log.meta.config_hash.empty()) hash = log.meta.config_hash;
  } else {
    if (c.perturbation.kind != config::PerturbationKind::Multisine) {
      throw config::ConfigError("config: perturbation.kind: FRF estimation needs a multisine");
    }
    const perturb::BaseTrajectory base = c.perturbation.build(c.simulation.dt);
    log = simulate(c, base, hash);
    sim::write_csv(log, dir / "log.csv");
    write_run_metadata(log, base, c, dir / "meta.json");
    if (log.meta.aborted) {
      out << "run aborted: " << log.meta.diagnostic << '\n';
      return kExitAbort;
    }
    period = base.period;
    freqs = base.excited_frequencies;
  }

  const analysis::ReferenceSet set = analysis::ReferenceSet::from_log(log, period, freqs);
  analysis::write_reference(set, dir / "series.csv", dir / "frf.csv", hash);
  out << std::setw(8) << "f_hz";
  for (auto n : analysis::kFrfNames) out << std::setw(12) << ("g_" + std::string(n) + "_db") << std::setw(12)
                                         << ("p_" + std::string(n) + "_deg");
  out << '\n';
  for (std::size_t i = 0; i < set.frf.frequencies.size(); ++i) {
    out << std::setw(8) << fmt("%.3f", set.frf.frequencies[i]);
    for (const auto& ch : set.frf.channels) {
      out << std::setw(12) << fmt("%.2f", db(ch.gain[i])) << std::setw(12) << fmt("%.1f", rad2deg(ch.phase[i]));
    }
    out << '\n';
  }
  out << "wrote " << (dir / "frf.csv").string() << " and " << (dir / "series.csv").string() << '\n';

  const std::string rs = o.reference_series.empty() ? c.ga.reference_series : o.reference_series;
  const std::string rf = o.reference_frf.empty() ? c.ga.reference_frf : o.reference_frf;
  if (rs.empty() != rf.empty()) throw config::ConfigError("frf: give both reference files or neither");
  if (!rs.empty()) {
    const analysis::ReferenceSet ref = analysis::read_reference(rs, rf, period);
    const analysis::FevalVector f = analysis::evaluate_fevals(log, ref, {c.ga.ga.penalty});
    std::ofstream fe(dir / "fevals.csv");
    if (!fe) throw IoError("cannot open " + (dir / "fevals.csv").string() + " for writing");
    fe << "# config_hash=" << hash << "\nfeval,value\n";
    out << "Feval        value\n";
    for (std::size_t k = 0; k < analysis::kFevals; ++k) {
      fe << analysis::kFevalNames[k] << ',' << fmt("%.17g", f[k]) << '\n';
      out << std::left << std::setw(13) << analysis::kFevalNames[k] << std::right << fmt("%.6g", f[k]) << '\n';
    }
    if (!fe) throw IoError("write failed: " + (dir / "fevals.csv").string());
  }

  if (c.io.plot) {
    svg::Panel gain{"Gain", "f (Hz)", "dB", {}, true}, phase{"Phase", "f (Hz)", "deg", {}, true};
    for (std::size_t k = 0; k < set.frf.channels.size(); ++k) {
      const auto& ch = set.frf.channels[k];
      std::vector<double> g, p;
      for (std::size_t i = 0; i < ch.gain.size(); ++i) {
        g.push_back(db(ch.gain[i]));
        p.push_back(rad2deg(ch.phase[i]));
      }
      const std::string name(analysis::kFrfNames[k]);
      gain.series.push_back({name, set.frf.frequencies, g});
      phase.series.push_back({name, set.frf.frequencies, p});
    }
    svg::write(dir / "frf.svg", svg::line_chart({gain, phase}, "Frequency response from T1 velocity", hash));
  }
  return kExitOk;
}

int cmd_tune(const config::RunConfig& cfg, const TuneOptions& o, std::ostream& out) {
  config::RunConfig c = cfg;
  c.validate();
  const std::string hash = config::hash(c);
  const fs::path dir = out_dir(c);
  const tuning::GaConfig gcfg = c.ga_config();
  const bool toy = c.ga.problem == config::TuneProblem::Toy;
  const std::vector<std::string> xn = toy ? std::vector<std::string>{"x"} : tuning::weight_names();
  const std::vector<std::string> fn = toy ? std::vector<std::string>{"f1", "f2"} : tuning::feval_names();

  tuning::ClosedLoopProblem problem;
  tuning::Evaluator evaluator;
  if (toy) {
    // Front is the interval [0.2, 0.8].
    evaluator = [](const tuning::Genome& x) {
      return tuning::Objectives{std::pow(x[0] - 0.2, 2), std::pow(x[0] - 0.8, 2)};
    };
  } else {
    if (c.perturbation.kind != config::PerturbationKind::Multisine) {
      throw config::ConfigError("config: perturbation.kind: tuning needs a multisine");
    }
    problem.plant = c.plant;
    problem.integrators = c.integrators;
    problem.mpc = c.mpc;
    problem.base = c.perturbation.build(c.simulation.dt);
    problem.duration = c.simulation.duration;
    problem.fevals.penalty = gcfg.penalty;
    if (!c.ga.reference_series.empty()) {
      problem.reference = analysis::read_reference(c.ga.reference_series, c.ga.reference_frf, problem.base.period);
      out << "reference: " << c.ga.reference_series << ", " << c.ga.reference_frf << '\n';
    } else {
      config::RunConfig rc = c;
      rc.weights = config::named_weights(c.ga.reference_weights);
      const sim::SimulationLog ref_log = simulate(rc, problem.base, hash);
      if (ref_log.meta.aborted) {
        out << "reference run aborted: " << ref_log.meta.diagnostic << '\n';
        return kExitAbort;
      }
      problem.reference =
          analysis::ReferenceSet::from_log(ref_log, problem.base.period, problem.base.excited_frequencies);
      out << "reference: synthetic, weights '" << c.ga.reference_weights << "'\n";
    }
    analysis::write_reference(problem.reference, dir / "reference_series.csv", dir / "reference_frf.csv", hash);
    evaluator = problem.evaluator();
  }

  std::vector<tuning::Evaluation> resume;
  if (!o.resume.empty()) {
    resume = tuning::read_evaluations(o.resume, xn, fn);
    out << "resuming from " << resume.size() << " samples\n";
  }
  auto checkpoint = [&](int g, const tuning::GaResult& s) {
    tuning::write_evaluations(dir / "samples.csv", s.samples, xn, fn, hash);
    tuning::write_evaluations(dir / "archive.csv", s.archive.entries(), xn, fn, hash);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : s.samples) {
      if (e.generation == g) best = std::min(best, sum(e.f));
    }
    out << "generation " << g + 1 << '/' << gcfg.generations << ": archive " << s.archive.size()
        << ", best sum " << fmt("%.6g", best) << std::endl;
  };
  const tuning::GaResult r = tuning::run_ga(gcfg, evaluator, resume, checkpoint);
  tuning::write_evaluations(dir / "samples.csv", r.samples, xn, fn, hash);
  tuning::write_evaluations(dir / "archive.csv", r.archive.entries(), xn, fn, hash);

  double initial = std::numeric_limits<double>::infinity(), final_best = initial;
  for (const auto& e : r.samples) {
    if (e.generation == 0) initial = std::min(initial, sum(e.f));
    final_best = std::min(final_best, sum(e.f));
  }
  json k = {{"config_hash", hash}, {"archive_size", r.archive.size()}, {"samples", r.samples.size()},
            {"best_initial_sum", initial}, {"best_sum", final_best}};
  if (!r.archive.empty()) {
    const tuning::Evaluation& knee = tuning::select_knee(r.archive);
    json x = json::object(), f = json::object();
    for (std::size_t i = 0; i < xn.size(); ++i) x[xn[i]] = knee.x[i];
    for (std::size_t i = 0; i < fn.size(); ++i) f[fn[i]] = knee.f[i];
    k["knee"] = {{"generation", knee.generation}, {"x", x}, {"f", f}};
  }
  write_json(dir / "knee.json", k);
  out << "archive " << r.archive.size() << " entries from " << r.samples.size() << " samples; best sum "
      << fmt("%.6g", initial) << " (initial population) -> " << fmt("%.6g", final_best) << '\n';
  out << "wrote " << (dir / "archive.csv").string() << ", samples.csv, knee.json\n";
  return kExitOk;
}

int cmd_importance(const config::RunConfig& cfg, const ImportanceOptions& o, std::ostream& out) {
  config::RunConfig c = cfg;
  c.validate();
  const std::string hash = config::hash(c);
  if (o.samples.empty()) throw config::ConfigError("importance: a samples file is required");
  const auto samples = tuning::read_evaluations(o.samples, tuning::weight_names(), tuning::feval_names());
  if (samples.empty()) throw IoError(o.samples + ": no samples");
  const fs::path dir = out_dir(c);
  const forest::ImportanceMatrix m = forest::importance_matrix(samples, c.forest_config());
  forest::write_importance_csv(dir / "importance.csv", m, hash);

  out << std::left << std::setw(13) << "feval" << std::right;
  for (const auto& col : m.columns) out << std::setw(7) << col;
  out << '\n';
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    out << std::left << std::setw(13) << m.rows[r] << std::right;
    for (Eigen::Index col = 0; col < m.values.cols(); ++col) {
      out << std::setw(7) << fmt("%.3f", m.values(static_cast<Eigen::Index>(r), col));
    }
    if (!m.errors[r].empty()) {
      out << "  (" << m.errors[r] << ')';
    } else if (m.zero_row[r]) {
      out << "  (no split)";
    }
    out << '\n';
  }
  out << "wrote " << (dir / "importance.csv").string() << '\n';
  if (c.io.plot) {
    svg::write(dir / "importance.svg",
               svg::heatmap(m.rows, m.columns, m.values, m.zero_row, "Feature importance", hash));
  }
  return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Head-neck postural control model: closed-loop simulation, FRF analysis, weight tuning and "
               "feature importance.",
               "headneck"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed = 0;
  std::string out_path;
  bool print_defaults = false;
  app.add_option("--config", g.config, "JSON run configuration (all sections optional)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "seed for the GA and the forest (overrides io.seed)");
  auto* out_opt = app.add_option("--out", out_path, "output directory (overrides io.out_dir)");
  app.add_flag("--plot", g.plot, "also write SVG plots");
  app.add_flag("--print-defaults", print_defaults, "print the default configuration and exit");

  SimulateOptions so;
  auto* sim_cmd = app.add_subcommand("simulate", "closed-loop run: log.csv, meta.json, timeseries.svg");
  std::string preset, weights;
  double duration = 0.0;
  auto* preset_opt = sim_cmd->add_option("--preset", preset, "integrator preset: muscle, muscle_unhis, full_integrators");
  auto* weights_opt = sim_cmd->add_option("--weights", weights, "weight vector: optimized, sagittal_prior, sagittal_retuned");
  auto* duration_opt = sim_cmd->add_option("--duration", duration, "simulated time in s");

  PostureOptions po;
  auto* posture_cmd = app.add_subcommand("posture", "unperturbed runs per preset: posture.csv, posture.svg");
  posture_cmd->add_option("--presets", po.presets, "all, or a comma-separated list of presets")->capture_default_str();
  posture_cmd->add_option("--duration", po.duration, "simulated time per preset in s")->capture_default_str();

  FrfOptions fo;
  auto* frf_cmd = app.add_subcommand("frf", "FRF from a log (or a fresh run): frf.csv, series.csv, fevals.csv");
  frf_cmd->add_option("--log", fo.log, "log.csv written by simulate")->check(CLI::ExistingFile);
  frf_cmd->add_option("--meta", fo.meta, "metadata of the log (default: meta.json beside it)");
  frf_cmd->add_option("--reference-series", fo.reference_series, "reference time series CSV");
  frf_cmd->add_option("--reference-frf", fo.reference_frf, "reference FRF CSV");

  TuneOptions to;
  auto* tune_cmd = app.add_subcommand("tune", "GA weight tuning: archive.csv, samples.csv, knee.json");
  tune_cmd->add_option("--resume", to.resume, "samples.csv of an interrupted run")->check(CLI::ExistingFile);

  ImportanceOptions io;
  auto* imp_cmd = app.add_subcommand("importance", "forest importance: importance.csv, importance.svg");
  imp_cmd->add_option("samples", io.samples, "samples.csv written by tune")->required()->check(CLI::ExistingFile);

  std::vector<const char*> argv;
  argv.push_back("headneck");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (seed_opt->count()) g.seed = seed;
    if (out_opt->count()) g.out = out_path;
    if (print_defaults) {
      out << std::setw(2) << config::to_json(config::RunConfig{}) << '\n';
      return kExitOk;
    }
    if (app.get_subcommands().empty()) {
      err << app.help();
      return kExitUsage;
    }
    const config::RunConfig cfg = resolve(g);
    if (sim_cmd->parsed()) {
      if (preset_opt->count()) so.preset = preset;
      if (weights_opt->count()) so.weights = weights;
      if (duration_opt->count()) so.duration = duration;
      return cmd_simulate(cfg, so, out);
    }
    if (posture_cmd->parsed()) return cmd_posture(cfg, po, out);
    if (frf_cmd->parsed()) return cmd_frf(cfg, fo, out);
    if (tune_cmd->parsed()) return cmd_tune(cfg, to, out);
    if (imp_cmd->parsed()) return cmd_importance(cfg, io, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitAbort;
  }
  return kExitUsage;
}

}  // namespace headneck::cli
