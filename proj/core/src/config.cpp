#include "headneck/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace headneck::config {

using nlohmann::json;

namespace {

// Reads one object section, remembering which keys were used so leftovers
// can be reported.
class Section {
 public:
  Section(const json& parent, std::string name) : name_(std::move(name)) {
    const json* j = &parent;
    if (!name_.empty()) {
      const auto it = parent.find(name_.substr(name_.rfind('.') + 1));
      j = it == parent.end() ? nullptr : &*it;
    }
    if (j && !j->is_object()) throw ConfigError("config: " + name_ + ": expected an object");
    j_ = j;
  }

  bool has(const std::string& key) const { return j_ && j_->contains(key); }
  std::string where(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  const json* raw(const std::string& key) {
    if (!has(key)) return nullptr;
    used_.insert(key);
    return &j_->at(key);
  }

  void number(const std::string& key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) fail(key, "must be finite");
    }
  }
  void integer(const std::string& key, int& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      out = v->get<int>();
    }
  }
  void unsigned64(const std::string& key, std::uint64_t& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        fail(key, "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void size(const std::string& key, std::size_t& out) {
    std::uint64_t v = out;
    unsigned64(key, v);
    out = static_cast<std::size_t>(v);
  }
  void boolean(const std::string& key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const std::string& key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  std::vector<double> numbers(const json& v, const std::string& key) {
    if (!v.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) fail(key, "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  void vector(const std::string& key, std::vector<double>& out) {
    if (const json* v = raw(key)) out = numbers(*v, key);
  }
  template <int N>
  void fixed(const std::string& key, Eigen::Matrix<double, N, 1>& out) {
    if (const json* v = raw(key)) {
      const auto x = numbers(*v, key);
      if (x.size() != static_cast<std::size_t>(N)) fail(key, "expected " + std::to_string(N) + " numbers");
      for (int i = 0; i < N; ++i) out[i] = x[static_cast<std::size_t>(i)];
    }
  }
  void pair(const std::string& key, std::array<double, 2>& out) {
    if (const json* v = raw(key)) {
      const auto x = numbers(*v, key);
      if (x.size() != 2) fail(key, "expected 2 numbers [lower, upper joint]");
      out = {x[0], x[1]};
    }
  }
  void flags(const std::string& key, std::array<bool, 2>& out) {
    if (const json* v = raw(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_boolean() || !(*v)[1].is_boolean()) {
        fail(key, "expected 2 booleans [lower, upper joint]");
      }
      out = {(*v)[0].get<bool>(), (*v)[1].get<bool>()};
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config: " + where(key) + ": " + what);
  }

  void finish(const std::set<std::string>& subsections = {}) const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items()) {
      if (used_.count(k) || subsections.count(k)) continue;
      const std::string scope = name_.empty() ? "top level" : "section '" + name_ + "'";
      throw ConfigError("config: unknown key '" + k + "' in " + scope);
    }
  }

 private:
  std::string name_;
  const json* j_ = nullptr;
  std::set<std::string> used_;
};

const char* kind_name(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::Multisine: return "multisine";
    case PerturbationKind::Stationary: return "stationary";
    case PerturbationKind::Pulse: return "pulse";
  }
  return "multisine";
}

json vec_json(const JointVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
json vec_json(const Vec3& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

perturb::BaseTrajectory PerturbationConfig::build(double dt) const {
  switch (kind) {
    case PerturbationKind::Multisine: {
      perturb::MultisineDefaults d = multisine;
      d.dt = dt;
      return perturb::generate_multisine(perturb::make_multisine_spec(d));
    }
    case PerturbationKind::Stationary: return perturb::stationary(multisine.duration, dt);
    case PerturbationKind::Pulse:
      return perturb::step_pulse(multisine.amplitude, pulse_onset, pulse_width, multisine.duration, dt);
  }
  throw ConfigError("config: perturbation.kind: unsupported");
}

mpc::WeightVector named_weights(const std::string& name) {
  if (name == "optimized") return mpc::WeightVector::optimized();
  if (name == "sagittal_prior") return mpc::WeightVector::sagittal_prior();
  if (name == "sagittal_retuned") return mpc::WeightVector::sagittal_retuned();
  throw ConfigError("config: unknown weight vector '" + name +
                    "'; valid: optimized sagittal_prior sagittal_retuned");
}

void RunConfig::validate() const {
  auto wrap = [](const char* section, auto&& check) {
    try {
      check();
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config: ") + section + ": " + e.what());
    }
  };
  wrap("plant", [&] { plant.validate(); });
  wrap("mpc", [&] { mpc.validate(); });
  wrap("integrators", [&] { integrators.validate(); });
  wrap("weights", [&] { weights.validate(); });
  wrap("ga", [&] { ga_config().validate(); });
  wrap("forest", [&] { forest_config().validate(); });
  if (!(simulation.dt > 0.0)) throw ConfigError("config: simulation.dt: must be positive");
  if (!(simulation.duration > 0.0)) throw ConfigError("config: simulation.duration: must be positive");
  if (simulation.duration > perturbation.multisine.duration + 1e-9) {
    throw ConfigError("config: simulation.duration: exceeds perturbation.duration");
  }
  if (ga.problem == TuneProblem::ClosedLoop && ga.ga.dimension() != static_cast<std::size_t>(mpc::kWeightCount)) {
    throw ConfigError("config: ga.lower/ga.upper: the closed-loop problem needs " +
                      std::to_string(mpc::kWeightCount) + " bounds");
  }
  if (ga.problem == TuneProblem::Toy && ga.ga.dimension() != 1) {
    throw ConfigError("config: ga.lower/ga.upper: the toy problem has one variable");
  }
  if (ga.reference_series.empty() != ga.reference_frf.empty()) {
    throw ConfigError("config: ga.reference_series and ga.reference_frf must be given together");
  }
  if (ga.reference_series.empty()) named_weights(ga.reference_weights);
}

tuning::GaConfig RunConfig::ga_config() const {
  tuning::GaConfig g = ga.ga;
  g.seed = io.seed;
  g.objectives = ga.problem == TuneProblem::Toy ? 2 : analysis::kFevals;
  return g;
}

forest::ForestConfig RunConfig::forest_config() const {
  forest::ForestConfig f = forest;
  f.seed = io.seed;
  return f;
}

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig c;
  Section top(j, "");
  const std::set<std::string> sections = {"plant", "perturbation", "integrators", "mpc", "weights",
                                          "ga", "forest", "io", "simulation"};

  {
    Section s(j, "plant");
    auto& p = c.plant;
    s.number("neck_mass", p.neck_mass);
    s.number("neck_length", p.neck_length);
    s.number("neck_cg_offset", p.neck_cg_offset);
    s.number("head_mass", p.head_mass);
    s.number("head_cg_distance", p.head_cg_distance);
    s.number("head_cg_anterior_offset", p.head_cg_anterior_offset);
    s.fixed("neck_inertia", p.neck_inertia);
    s.fixed("head_inertia", p.head_inertia);
    s.fixed("passive_stiffness", p.passive_stiffness);
    s.fixed("passive_damping", p.passive_damping);
    s.fixed("passive_rest", p.passive_rest);
    s.fixed("joint_limits", p.joint_limits);
    s.number("gravity", p.gravity);
    s.finish();
  }
  {
    Section s(j, "perturbation");
    auto& p = c.perturbation;
    std::string kind = kind_name(p.kind);
    s.string("kind", kind);
    if (kind == "multisine") {
      p.kind = PerturbationKind::Multisine;
    } else if (kind == "stationary") {
      p.kind = PerturbationKind::Stationary;
    } else if (kind == "pulse") {
      p.kind = PerturbationKind::Pulse;
    } else {
      s.fail("kind", "expected multisine, stationary or pulse");
    }
    auto& m = p.multisine;
    s.number("band_low", m.band_low);
    s.number("band_high", m.band_high);
    s.integer("bins", m.bins);
    s.number("amplitude", m.amplitude);
    s.number("corner", m.corner);
    s.number("period", m.period);
    s.number("duration", m.duration);
    s.unsigned64("phase_seed", m.phase_seed);
    s.number("pulse_onset", p.pulse_onset);
    s.number("pulse_width", p.pulse_width);
    s.finish();
  }
  {
    Section s(j, "integrators");
    s.string("preset", c.integrator_preset);
    try {
      c.integrators = sensory::preset_configuration(c.integrator_preset);
    } catch (const InvalidArgument& e) {
      s.fail("preset", e.what());
    }
    auto& g = c.integrators;
    s.flags("his_enabled", g.his_enabled);
    s.flags("hot_enabled", g.hot_enabled);
    s.pair("his_gain", g.his_gain);
    s.pair("hot_gain", g.hot_gain);
    s.number("windup_limit", g.windup_limit);
    s.finish();
  }
  {
    Section s(j, "mpc");
    auto& m = c.mpc;
    s.integer("intervals", m.intervals);
    s.number("interval_length", m.interval_length);
    s.integer("collocation_nodes", m.collocation_nodes);
    s.vector("node_fractions", m.node_fractions);
    s.fixed("torque_bounds", m.torque_bounds);
    s.fixed("joint_limits", m.joint_limits);
    s.number("limit_penalty", m.limit_penalty);
    s.integer("max_iterations", m.max_iterations);
    s.number("tolerance", m.tolerance);
    s.boolean("warm_start", m.warm_start);
    std::string preview = m.preview == mpc::Preview::Full ? "full" : "none";
    s.string("preview", preview);
    if (preview == "none") {
      m.preview = mpc::Preview::None;
    } else if (preview == "full") {
      m.preview = mpc::Preview::Full;
    } else {
      s.fail("preview", "expected none or full");
    }
    s.number("control_period", m.control_period);
    s.finish();
  }
  {
    Section s(j, "weights");
    s.string("preset", c.weight_preset);
    try {
      c.weights = named_weights(c.weight_preset);
    } catch (const ConfigError& e) {
      s.fail("preset", e.what());
    }
    mpc::FlatWeights w = c.weights.flat();
    for (int i = 0; i < mpc::kWeightCount; ++i) s.number(std::string(mpc::kWeightNames[static_cast<std::size_t>(i)]), w[i]);
    c.weights = mpc::WeightVector::from_flat(w);
    s.finish();
  }
  {
    Section s(j, "ga");
    auto& g = c.ga;
    std::string problem = g.problem == TuneProblem::Toy ? "toy" : "closed_loop";
    s.string("problem", problem);
    if (problem == "closed_loop") {
      g.problem = TuneProblem::ClosedLoop;
    } else if (problem == "toy") {
      g.problem = TuneProblem::Toy;
      g.ga.lower = {0.0};
      g.ga.upper = {1.0};
    } else {
      s.fail("problem", "expected closed_loop or toy");
    }
    s.integer("population", g.ga.population);
    s.integer("generations", g.ga.generations);
    s.number("crossover_probability", g.ga.crossover_probability);
    s.number("crossover_eta", g.ga.crossover_eta);
    s.number("mutation_probability", g.ga.mutation_probability);
    s.number("mutation_eta", g.ga.mutation_eta);
    // Bounds: one number for every variable or one per variable.
    for (const char* key : {"lower", "upper"}) {
      auto& dst = std::string(key) == "lower" ? g.ga.lower : g.ga.upper;
      if (const json* v = s.raw(key)) {
        if (v->is_number()) {
          dst.assign(dst.size(), v->get<double>());
        } else {
          dst = s.numbers(*v, key);
        }
      }
    }
    s.boolean("log_space", g.ga.log_space);
    s.integer("threads", g.ga.threads);
    s.number("penalty", g.ga.penalty);
    s.string("reference_weights", g.reference_weights);
    s.string("reference_series", g.reference_series);
    s.string("reference_frf", g.reference_frf);
    s.finish();
  }
  {
    Section s(j, "forest");
    auto& f = c.forest;
    s.integer("trees", f.trees);
    s.integer("max_depth", f.max_depth);
    s.integer("min_samples_leaf", f.min_samples_leaf);
    s.boolean("bootstrap", f.bootstrap);
    s.number("bootstrap_fraction", f.bootstrap_fraction);
    s.integer("features_per_split", f.features_per_split);
    s.integer("threads", f.threads);
    s.finish();
  }
  {
    Section s(j, "io");
    s.string("out_dir", c.io.out_dir);
    s.unsigned64("seed", c.io.seed);
    s.boolean("plot", c.io.plot);
    s.finish();
  }
  {
    Section s(j, "simulation");
    s.number("duration", c.simulation.duration);
    s.number("dt", c.simulation.dt);
    s.finish();
  }
  top.finish(sections);
  c.validate();
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

json to_json(const RunConfig& c) {
  const auto& p = c.plant;
  json j;
  j["plant"] = {{"neck_mass", p.neck_mass},
                {"neck_length", p.neck_length},
                {"neck_cg_offset", p.neck_cg_offset},
                {"head_mass", p.head_mass},
                {"head_cg_distance", p.head_cg_distance},
                {"head_cg_anterior_offset", p.head_cg_anterior_offset},
                {"neck_inertia", vec_json(p.neck_inertia)},
                {"head_inertia", vec_json(p.head_inertia)},
                {"passive_stiffness", vec_json(p.passive_stiffness)},
                {"passive_damping", vec_json(p.passive_damping)},
                {"passive_rest", vec_json(p.passive_rest)},
                {"joint_limits", vec_json(p.joint_limits)},
                {"gravity", p.gravity}};
  const auto& m = c.perturbation.multisine;
  j["perturbation"] = {{"kind", kind_name(c.perturbation.kind)},
                       {"band_low", m.band_low},
                       {"band_high", m.band_high},
                       {"bins", m.bins},
                       {"amplitude", m.amplitude},
                       {"corner", m.corner},
                       {"period", m.period},
                       {"duration", m.duration},
                       {"phase_seed", m.phase_seed},
                       {"pulse_onset", c.perturbation.pulse_onset},
                       {"pulse_width", c.perturbation.pulse_width}};
  const auto& g = c.integrators;
  j["integrators"] = {{"preset", c.integrator_preset},
                      {"his_enabled", g.his_enabled},
                      {"hot_enabled", g.hot_enabled},
                      {"his_gain", g.his_gain},
                      {"hot_gain", g.hot_gain},
                      {"windup_limit", g.windup_limit}};
  const auto& mp = c.mpc;
  j["mpc"] = {{"intervals", mp.intervals},
              {"interval_length", mp.interval_length},
              {"collocation_nodes", mp.collocation_nodes},
              {"node_fractions", mp.node_fractions},
              {"torque_bounds", vec_json(mp.torque_bounds)},
              {"joint_limits", vec_json(mp.joint_limits)},
              {"limit_penalty", mp.limit_penalty},
              {"max_iterations", mp.max_iterations},
              {"tolerance", mp.tolerance},
              {"warm_start", mp.warm_start},
              {"preview", mp.preview == mpc::Preview::Full ? "full" : "none"},
              {"control_period", mp.control_period}};
  json w = {{"preset", c.weight_preset}};
  const mpc::FlatWeights fw = c.weights.flat();
  for (int i = 0; i < mpc::kWeightCount; ++i) w[std::string(mpc::kWeightNames[static_cast<std::size_t>(i)])] = fw[i];
  j["weights"] = w;
  const auto& ga = c.ga;
  j["ga"] = {{"problem", ga.problem == TuneProblem::Toy ? "toy" : "closed_loop"},
             {"population", ga.ga.population},
             {"generations", ga.ga.generations},
             {"crossover_probability", ga.ga.crossover_probability},
             {"crossover_eta", ga.ga.crossover_eta},
             {"mutation_probability", ga.ga.mutation_probability},
             {"mutation_eta", ga.ga.mutation_eta},
             {"lower", ga.ga.lower},
             {"upper", ga.ga.upper},
             {"log_space", ga.ga.log_space},
             {"threads", ga.ga.threads},
             {"penalty", ga.ga.penalty},
             {"reference_weights", ga.reference_weights},
             {"reference_series", ga.reference_series},
             {"reference_frf", ga.reference_frf}};
  const auto& f = c.forest;
  j["forest"] = {{"trees", f.trees},
                 {"max_depth", f.max_depth},
                 {"min_samples_leaf", f.min_samples_leaf},
                 {"bootstrap", f.bootstrap},
                 {"bootstrap_fraction", f.bootstrap_fraction},
                 {"features_per_split", f.features_per_split},
                 {"threads", f.threads}};
  j["io"] = {{"out_dir", c.io.out_dir}, {"seed", c.io.seed}, {"plot", c.io.plot}};
  j["simulation"] = {{"duration", c.simulation.duration}, {"dt", c.simulation.dt}};
  return j;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash(const RunConfig& cfg) {
  // Where outputs go and whether plots are drawn do not change any result.
  json j = to_json(cfg);
  j["io"].erase("out_dir");
  j["io"].erase("plot");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace headneck::config
