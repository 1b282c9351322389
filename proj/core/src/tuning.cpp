#include "headneck/tuning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "table_io.hpp"

namespace headneck::tuning {

bool dominates(const Objectives& a, const Objectives& b) {
  if (a.size() != b.size()) throw InvalidArgument("dominates: objective counts differ");
  bool strictly = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strictly = true;
  }
  return strictly;
}

void GaConfig::validate() const {
  if (population < 4 || population % 2 != 0) throw InvalidArgument("ga: population must be even and at least 4");
  if (generations < 1) throw InvalidArgument("ga: generations must be at least 1");
  if (lower.empty() || lower.size() != upper.size()) throw InvalidArgument("ga: bounds must be non-empty and paired");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(std::isfinite(lower[i]) && std::isfinite(upper[i]) && lower[i] < upper[i])) {
      throw InvalidArgument("ga: bound " + std::to_string(i) + " needs lower < upper");
    }
    if (log_space && !(lower[i] > 0.0)) throw InvalidArgument("ga: log_space needs positive lower bounds");
  }
  if (!(crossover_probability >= 0.0 && crossover_probability <= 1.0)) {
    throw InvalidArgument("ga: crossover_probability must lie in [0, 1]");
  }
  if (mutation_probability > 1.0) throw InvalidArgument("ga: mutation_probability must not exceed 1");
  if (!(crossover_eta >= 0.0) || !(mutation_eta >= 0.0)) throw InvalidArgument("ga: distribution indices must be >= 0");
  if (threads < 1) throw InvalidArgument("ga: threads must be at least 1");
  if (objectives < 1) throw InvalidArgument("ga: at least one objective");
}

bool ParetoArchive::insert(const Evaluation& e) {
  for (const Evaluation& a : entries_) {
    if (a.f == e.f || dominates(a.f, e.f)) return false;
  }
  std::erase_if(entries_, [&](const Evaluation& a) { return dominates(e.f, a.f); });
  entries_.push_back(e);
  return true;
}

std::vector<std::size_t> non_dominated_indices(const std::vector<Objectives>& points) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < points.size() && keep; ++j) {
      if (j == i) continue;
      if (dominates(points[j], points[i]) || (j < i && points[j] == points[i])) keep = false;
    }
    if (keep) out.push_back(i);
  }
  return out;
}

std::vector<std::vector<std::size_t>> non_dominated_sort(const std::vector<Objectives>& points) {
  const std::size_t n = points.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<int> count(n, 0);
  std::vector<std::vector<std::size_t>> fronts(1);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      if (dominates(points[p], points[q])) {
        dominated[p].push_back(q);
      } else if (dominates(points[q], points[p])) {
        ++count[p];
      }
    }
    if (count[p] == 0) fronts[0].push_back(p);
  }
  while (!fronts.back().empty()) {
    std::vector<std::size_t> next;
    for (std::size_t p : fronts.back()) {
      for (std::size_t q : dominated[p]) {
        if (--count[q] == 0) next.push_back(q);
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(next));
  }
  fronts.pop_back();
  return fronts;
}

std::vector<double> crowding_distance(const std::vector<Objectives>& points, const std::vector<std::size_t>& front) {
  const std::size_t n = front.size();
  std::vector<double> d(n, 0.0);
  if (n <= 2) {
    std::fill(d.begin(), d.end(), std::numeric_limits<double>::infinity());
    return d;
  }
  std::vector<std::size_t> order(n);
  for (std::size_t m = 0; m < points[front[0]].size(); ++m) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return points[front[a]][m] < points[front[b]][m]; });
    const double lo = points[front[order.front()]][m];
    const double hi = points[front[order.back()]][m];
    d[order.front()] = d[order.back()] = std::numeric_limits<double>::infinity();
    if (!(hi > lo)) continue;
    for (std::size_t k = 1; k + 1 < n; ++k) {
      d[order[k]] += (points[front[order[k + 1]]][m] - points[front[order[k - 1]]][m]) / (hi - lo);
    }
  }
  return d;
}

const Evaluation& select_knee(const ParetoArchive& archive) {
  if (archive.empty()) throw InvalidArgument("knee: archive is empty");
  const auto& e = archive.entries();
  const std::size_t m = e.front().f.size();
  std::vector<double> lo(m, std::numeric_limits<double>::infinity());
  std::vector<double> hi(m, -std::numeric_limits<double>::infinity());
  for (const auto& x : e) {
    for (std::size_t j = 0; j < m; ++j) {
      lo[j] = std::min(lo[j], x.f[j]);
      hi[j] = std::max(hi[j], x.f[j]);
    }
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < e.size(); ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (hi[j] > lo[j]) d += std::pow((e[i].f[j] - lo[j]) / (hi[j] - lo[j]), 2);
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return e[best];
}

namespace {

struct Ranked {
  std::vector<int> rank;
  std::vector<double> crowding;
};

Ranked rank_population(const std::vector<Evaluation>& pop) {
  std::vector<Objectives> f;
  for (const auto& e : pop) f.push_back(e.f);
  Ranked r{std::vector<int>(pop.size()), std::vector<double>(pop.size())};
  const auto fronts = non_dominated_sort(f);
  for (std::size_t k = 0; k < fronts.size(); ++k) {
    const auto d = crowding_distance(f, fronts[k]);
    for (std::size_t i = 0; i < fronts[k].size(); ++i) {
      r.rank[fronts[k][i]] = static_cast<int>(k);
      r.crowding[fronts[k][i]] = d[i];
    }
  }
  return r;
}

// Best n of the merged set by front, then crowding within the last front.
std::vector<Evaluation> environmental_selection(std::vector<Evaluation> merged, std::size_t n) {
  std::vector<Objectives> f;
  for (const auto& e : merged) f.push_back(e.f);
  std::vector<Evaluation> next;
  for (const auto& front : non_dominated_sort(f)) {
    if (next.size() + front.size() <= n) {
      for (std::size_t i : front) next.push_back(merged[i]);
      if (next.size() == n) break;
      continue;
    }
    const auto d = crowding_distance(f, front);
    std::vector<std::size_t> order(front.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
    for (std::size_t k = 0; next.size() < n; ++k) next.push_back(merged[front[order[k]]]);
    break;
  }
  return next;
}

class Operators {
 public:
  Operators(const GaConfig& cfg) : cfg_(cfg) {
    for (std::size_t i = 0; i < cfg.dimension(); ++i) {
      lo_.push_back(cfg.log_space ? std::log(cfg.lower[i]) : cfg.lower[i]);
      hi_.push_back(cfg.log_space ? std::log(cfg.upper[i]) : cfg.upper[i]);
    }
    pm_ = cfg.mutation_probability < 0.0 ? 1.0 / static_cast<double>(cfg.dimension()) : cfg.mutation_probability;
  }

  Genome random(std::mt19937_64& rng) const {
    Genome g(lo_.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::uniform_real_distribution<double>(lo_[i], hi_[i])(rng);
    return to_user(g);
  }

  std::pair<Genome, Genome> offspring(const Genome& pa, const Genome& pb, std::mt19937_64& rng) const {
    Genome a = to_internal(pa), b = to_internal(pb);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) <= cfg_.crossover_probability) sbx(a, b, rng);
    mutate(a, rng);
    mutate(b, rng);
    return {to_user(a), to_user(b)};
  }

 private:
  Genome to_internal(Genome g) const {
    if (cfg_.log_space) {
      for (double& x : g) x = std::log(x);
    }
    return g;
  }
  Genome to_user(Genome g) const {
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = std::clamp(g[i], lo_[i], hi_[i]);
      if (cfg_.log_space) g[i] = std::clamp(std::exp(g[i]), cfg_.lower[i], cfg_.upper[i]);
    }
    return g;
  }

  void sbx(Genome& a, Genome& b, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double eta = cfg_.crossover_eta;
    for (std::size_t i = 0; i < a.size(); ++i) {
      // Draw unconditionally so the stream does not depend on the values.
      const double swap_gene = u(rng);
      const double r = u(rng);
      const double flip = u(rng);
      if (swap_gene > 0.5 || std::abs(a[i] - b[i]) <= 1e-14) continue;
      const double y1 = std::min(a[i], b[i]);
      const double y2 = std::max(a[i], b[i]);
      auto betaq = [&](double beta) {
        const double alpha = 2.0 - std::pow(beta, -(eta + 1.0));
        return r <= 1.0 / alpha ? std::pow(r * alpha, 1.0 / (eta + 1.0))
                                : std::pow(1.0 / (2.0 - r * alpha), 1.0 / (eta + 1.0));
      };
      double c1 = 0.5 * ((y1 + y2) - betaq(1.0 + 2.0 * (y1 - lo_[i]) / (y2 - y1)) * (y2 - y1));
      double c2 = 0.5 * ((y1 + y2) + betaq(1.0 + 2.0 * (hi_[i] - y2) / (y2 - y1)) * (y2 - y1));
      c1 = std::clamp(c1, lo_[i], hi_[i]);
      c2 = std::clamp(c2, lo_[i], hi_[i]);
      if (flip < 0.5) std::swap(c1, c2);
      a[i] = c1;
      b[i] = c2;
    }
  }

  void mutate(Genome& g, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double pow_ = 1.0 / (cfg_.mutation_eta + 1.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double p = u(rng);
      const double r = u(rng);
      if (p >= pm_) continue;
      const double span = hi_[i] - lo_[i];
      const double d1 = (g[i] - lo_[i]) / span;
      const double d2 = (hi_[i] - g[i]) / span;
      double dq;
      if (r < 0.5) {
        const double v = 2.0 * r + (1.0 - 2.0 * r) * std::pow(1.0 - d1, cfg_.mutation_eta + 1.0);
        dq = std::pow(v, pow_) - 1.0;
      } else {
        const double v = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * std::pow(1.0 - d2, cfg_.mutation_eta + 1.0);
        dq = 1.0 - std::pow(v, pow_);
      }
      g[i] = std::clamp(g[i] + dq * span, lo_[i], hi_[i]);
    }
  }

  const GaConfig& cfg_;
  std::vector<double> lo_, hi_;
  double pm_ = 0.0;
};

std::mt19937_64 generation_rng(std::uint64_t seed, int generation) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(generation)};
  return std::mt19937_64(seq);
}

std::vector<Evaluation> evaluate_all(const std::vector<Genome>& genomes, int generation, const GaConfig& cfg,
                                     const Evaluator& evaluator) {
  std::vector<Evaluation> out(genomes.size());
  auto one = [&](std::size_t i) {
    out[i].x = genomes[i];
    out[i].generation = generation;
    try {
      out[i].f = evaluator(genomes[i]);
    } catch (const std::exception&) {
      out[i].f.assign(cfg.objectives, cfg.penalty);
    }
  };
  const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), genomes.size());
  if (width <= 1) {
    for (std::size_t i = 0; i < genomes.size(); ++i) one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < width; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < genomes.size(); i = next++) one(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : out) {
    if (e.f.size() != cfg.objectives) {
      throw InvalidArgument("ga: evaluator returned " + std::to_string(e.f.size()) + " objectives, expected " +
                            std::to_string(cfg.objectives));
    }
    for (double& v : e.f) {
      if (!std::isfinite(v)) v = cfg.penalty;
    }
  }
  return out;
}

std::vector<Genome> make_offspring(const std::vector<Evaluation>& pop, const Operators& ops, std::mt19937_64& rng) {
  const Ranked r = rank_population(pop);
  std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
  auto tournament = [&] {
    const std::size_t a = pick(rng);
    const std::size_t b = pick(rng);
    if (r.rank[a] != r.rank[b]) return r.rank[a] < r.rank[b] ? a : b;
    if (r.crowding[a] != r.crowding[b]) return r.crowding[a] > r.crowding[b] ? a : b;
    return std::min(a, b);
  };
  std::vector<Genome> kids;
  while (kids.size() < pop.size()) {
    const std::size_t a = tournament();
    const std::size_t b = tournament();
    auto [c1, c2] = ops.offspring(pop[a].x, pop[b].x, rng);
    kids.push_back(std::move(c1));
    kids.push_back(std::move(c2));
  }
  return kids;
}

}  // namespace

GaResult run_ga(const GaConfig& cfg, const Evaluator& evaluator, const std::vector<Evaluation>& resume,
                const GenerationCallback& on_generation) {
  cfg.validate();
  const Operators ops(cfg);
  const auto n = static_cast<std::size_t>(cfg.population);

  // Complete generations from an earlier run, in order.
  std::map<int, std::vector<Evaluation>> previous;
  for (const auto& e : resume) {
    if (e.x.size() != cfg.dimension() || e.f.size() != cfg.objectives) {
      throw InvalidArgument("ga resume: sample dimensions do not match the configuration");
    }
    previous[e.generation].push_back(e);
  }

  GaResult state;
  for (int g = 0; g < cfg.generations; ++g) {
    std::mt19937_64 rng = generation_rng(cfg.seed, g);
    std::vector<Evaluation> batch;
    const auto it = previous.find(g);
    if (it != previous.end() && it->second.size() == n) {
      batch = it->second;
    } else {
      std::vector<Genome> genomes;
      if (g == 0) {
        for (std::size_t i = 0; i < n; ++i) genomes.push_back(ops.random(rng));
      } else {
        genomes = make_offspring(state.population, ops, rng);
      }
      batch = evaluate_all(genomes, g, cfg, evaluator);
      previous.erase(previous.upper_bound(g - 1), previous.end());
    }

    for (const auto& e : batch) {
      state.archive.insert(e);
      state.samples.push_back(e);
    }
    if (g == 0) {
      state.population = batch;
    } else {
      std::vector<Evaluation> merged = state.population;
      merged.insert(merged.end(), batch.begin(), batch.end());
      state.population = environmental_selection(std::move(merged), n);
    }
    if (on_generation) on_generation(g, state);
  }
  return state;
}

void write_evaluations(const std::filesystem::path& path, const std::vector<Evaluation>& evals,
                       const std::vector<std::string>& x_names, const std::vector<std::string>& f_names,
                       const std::string& config_hash) {
  std::vector<std::string> header = x_names;
  header.insert(header.end(), f_names.begin(), f_names.end());
  header.emplace_back("generation");
  std::vector<std::vector<double>> rows;
  for (const auto& e : evals) {
    if (e.x.size() != x_names.size() || e.f.size() != f_names.size()) {
      throw InvalidArgument("write_evaluations: entry size does not match the column names");
    }
    std::vector<double> row = e.x;
    row.insert(row.end(), e.f.begin(), e.f.end());
    row.push_back(e.generation);
    rows.push_back(std::move(row));
  }
  detail::write_numeric_csv(path, header, rows, config_hash);
}

std::vector<Evaluation> read_evaluations(const std::filesystem::path& path, const std::vector<std::string>& x_names,
                                         const std::vector<std::string>& f_names) {
  const auto t = detail::read_numeric_csv(path);
  std::vector<std::size_t> xc, fc;
  for (const auto& n : x_names) xc.push_back(t.column(n));
  for (const auto& n : f_names) fc.push_back(t.column(n));
  const std::size_t gc = t.column("generation");
  std::vector<Evaluation> out;
  for (const auto& r : t.rows) {
    Evaluation e;
    for (std::size_t c : xc) e.x.push_back(r[c]);
    for (std::size_t c : fc) e.f.push_back(r[c]);
    e.generation = static_cast<int>(r[gc]);
    out.push_back(std::move(e));
  }
  return out;
}

void write_archive_json(const std::filesystem::path& path, const ParetoArchive& archive,
                        const std::vector<std::string>& x_names, const std::vector<std::string>& f_names,
                        const std::string& config_hash) {
  nlohmann::json j = {{"config_hash", config_hash}, {"x_names", x_names}, {"f_names", f_names}};
  j["entries"] = nlohmann::json::array();
  for (const auto& e : archive.entries()) {
    j["entries"].push_back({{"x", e.x}, {"f", e.f}, {"generation", e.generation}});
  }
  if (!archive.empty()) {
    const Evaluation& k = select_knee(archive);
    j["knee"] = {{"x", k.x}, {"f", k.f}, {"generation", k.generation}};
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setw(2) << j << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> weight_names() { return {mpc::kWeightNames.begin(), mpc::kWeightNames.end()}; }

std::vector<std::string> feval_names() {
  return {analysis::kFevalNames.begin(), analysis::kFevalNames.end()};
}

Objectives ClosedLoopProblem::evaluate(const Genome& weights) const {
  if (weights.size() != static_cast<std::size_t>(mpc::kWeightCount)) {
    throw InvalidArgument("closed-loop problem: expected " + std::to_string(mpc::kWeightCount) + " weights");
  }
  const mpc::WeightVector w = mpc::WeightVector::from_flat(Eigen::Map<const mpc::FlatWeights>(weights.data()));
  const sim::SimulationLog log = sim::run_closed_loop(plant, integrators, mpc, w, base, duration, base.dt);
  const analysis::FevalVector f = analysis::evaluate_fevals(log, reference, fevals);
  return {f.begin(), f.end()};
}

Evaluator ClosedLoopProblem::evaluator() const {
  return [this](const Genome& g) { return evaluate(g); };
}

}  // namespace headneck::tuning
