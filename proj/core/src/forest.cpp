#include "headneck/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace headneck::forest {

void ForestConfig::validate() const {
  if (trees < 1) throw InvalidArgument("forest: trees must be at least 1");
  if (max_depth < 0) throw InvalidArgument("forest: max_depth must be >= 0");
  if (min_samples_leaf < 1) throw InvalidArgument("forest: min_samples_leaf must be at least 1");
  if (!(bootstrap_fraction > 0.0 && bootstrap_fraction <= 1.0)) {
    throw InvalidArgument("forest: bootstrap_fraction must lie in (0, 1]");
  }
  if (features_per_split < 0) throw InvalidArgument("forest: features_per_split must be >= 0");
  if (threads < 1) throw InvalidArgument("forest: threads must be at least 1");
}

double Tree::predict(std::span<const double> x) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].feature < 0) continue;
    d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
    d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    deepest = std::max(deepest, d[i] + 1);
  }
  return deepest;
}

Forest::Forest(std::vector<Tree> trees, std::size_t features, double oob_r2)
    : trees_(std::move(trees)), features_(features), oob_r2_(oob_r2) {}

double Forest::predict(std::span<const double> x) const {
  if (x.size() != features_) throw InvalidArgument("forest: feature count mismatch");
  double s = 0.0;
  for (const Tree& t : trees_) s += t.predict(x);
  return s / static_cast<double>(trees_.size());
}

std::vector<double> Forest::raw_importance() const {
  std::vector<double> imp(features_, 0.0);
  for (const Tree& t : trees_) {
    for (std::size_t f = 0; f < features_; ++f) imp[f] += t.impurity_decrease[f];
  }
  for (double& v : imp) v /= static_cast<double>(trees_.size());
  return imp;
}

std::vector<double> Forest::importance() const {
  std::vector<double> imp = raw_importance();
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (!(total > 0.0)) return std::vector<double>(features_, 0.0);
  for (double& v : imp) v /= total;
  return imp;
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg, std::mt19937_64& rng)
      : x_(x), y_(y), cfg_(cfg), rng_(rng) {
    const auto p = static_cast<int>(x.cols());
    mtry_ = cfg.features_per_split == 0 ? (p + 2) / 3 : std::min(cfg.features_per_split, p);
  }

  Tree build(std::vector<int> rows) {
    tree_ = Tree{};
    tree_.impurity_decrease.assign(static_cast<std::size_t>(x_.cols()), 0.0);
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    std::vector<int> features;  // every feature inducing the chosen partition
    double threshold = 0.0;     // for features.front()
    double gain = 0.0;
  };

  int grow(std::vector<int>& rows, int depth) {
    const auto id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const double mean = mean_of(rows);
    tree_.nodes.back().value = mean;
    const double sse = sse_of(rows, mean);

    const auto n = static_cast<int>(rows.size());
    if (depth >= cfg_.max_depth || n < 2 * cfg_.min_samples_leaf || !(sse > 0.0)) return id;
    const Split s = best_split(rows, sse);
    if (s.features.empty()) return id;

    const int f = s.features.front();
    std::vector<int> left, right;
    for (int r : rows) (x_(r, f) <= s.threshold ? left : right).push_back(r);
    for (int g : s.features) {
      tree_.impurity_decrease[static_cast<std::size_t>(g)] += s.gain / static_cast<double>(s.features.size());
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(left, depth + 1);
    const int rr = grow(right, depth + 1);
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = f;
    node.threshold = s.threshold;
    node.left = l;
    node.right = rr;
    return id;
  }

  double mean_of(const std::vector<int>& rows) const {
    double sum = 0.0;
    for (int r : rows) sum += y_[r];
    return sum / static_cast<double>(rows.size());
  }
  double sse_of(const std::vector<int>& rows, double mean) const {
    double sse = 0.0;
    for (int r : rows) sse += (y_[r] - mean) * (y_[r] - mean);
    return sse;
  }

  // Ties between features are common in small nodes (different columns
  // inducing the same row partition). They are resolved from the rows alone,
  // never the column order, so relabelling the features only relabels the
  // importances.
  Split best_split(const std::vector<int>& rows, double parent_sse) {
    const auto p = static_cast<int>(x_.cols());
    std::vector<int> features(static_cast<std::size_t>(p));
    std::iota(features.begin(), features.end(), 0);
    // Partial Fisher-Yates: the first mtry entries are the candidates.
    for (int i = 0; i < mtry_; ++i) {
      std::uniform_int_distribution<int> pick(i, p - 1);
      std::swap(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(pick(rng_))]);
    }
    const auto n = static_cast<int>(rows.size());
    const int leaf = cfg_.min_samples_leaf;
    struct Candidate {
      int feature;
      double threshold;
      double gain;
    };
    std::vector<Candidate> cands;
    std::vector<int> order;
    for (int k = 0; k < mtry_; ++k) {
      const int f = features[static_cast<std::size_t>(k)];
      order = rows;
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x_(a, f) < x_(b, f); });
      double total = 0.0, total_sq = 0.0;
      for (int r : order) {
        total += y_[r];
        total_sq += y_[r] * y_[r];
      }
      Candidate best{f, 0.0, 0.0};
      double ls = 0.0, lsq = 0.0;
      for (int i = 0; i + 1 < n; ++i) {
        const int r = order[static_cast<std::size_t>(i)];
        ls += y_[r];
        lsq += y_[r] * y_[r];
        const int nl = i + 1, nr = n - nl;
        if (nl < leaf || nr < leaf) continue;
        const double a = x_(r, f), b = x_(order[static_cast<std::size_t>(i + 1)], f);
        if (!(b > a)) continue;
        const double rs = total - ls, rsq = total_sq - lsq;
        const double gain = parent_sse - ((lsq - ls * ls / nl) + (rsq - rs * rs / nr));
        if (gain > best.gain) {
          best.threshold = 0.5 * (a + b);
          // Guard against a midpoint rounding onto the upper value.
          if (!(best.threshold < b)) best.threshold = a;
          best.gain = gain;
        }
      }
      if (best.gain > 1e-12 * parent_sse) cands.push_back(best);
    }
    Split out;
    if (cands.empty()) return out;

    double top = 0.0;
    for (const auto& c : cands) top = std::max(top, c.gain);
    const double tol = 1e-9 * parent_sse;
    auto left_rows = [&](const Candidate& c) {
      std::vector<int> l;
      for (int r : rows) {
        if (x_(r, c.feature) <= c.threshold) l.push_back(r);
      }
      std::sort(l.begin(), l.end());
      return l;
    };
    std::vector<int> chosen;
    for (const auto& c : cands) {
      if (c.gain < top - tol) continue;
      std::vector<int> l = left_rows(c);
      if (out.features.empty() || l < chosen) {
        chosen = std::move(l);
        out.features = {c.feature};
        out.threshold = c.threshold;
      } else if (l == chosen) {
        out.features.push_back(c.feature);
      }
    }
    std::vector<int> sorted_rows = rows;
    std::sort(sorted_rows.begin(), sorted_rows.end());
    std::vector<int> right;
    std::set_difference(sorted_rows.begin(), sorted_rows.end(), chosen.begin(), chosen.end(),
                        std::back_inserter(right));
    // Gain from the partition in row order, identical for every tied feature.
    out.gain = parent_sse - sse_of(chosen, mean_of(chosen)) - sse_of(right, mean_of(right));
    return out;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  const ForestConfig& cfg_;
  std::mt19937_64& rng_;
  int mtry_ = 1;
  Tree tree_;
};

}  // namespace

Forest fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  if (static_cast<std::size_t>(y.size()) != n) throw InvalidArgument("forest: X and y have different sample counts");
  if (n < kMinSamples) {
    throw InvalidArgument("forest: " + std::to_string(n) + " samples, at least " + std::to_string(kMinSamples) +
                          " required");
  }
  if (x.cols() < 1) throw InvalidArgument("forest: no features");
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("forest: non-finite values in the samples");

  std::vector<Tree> trees(static_cast<std::size_t>(cfg.trees));
  auto fit_one = [&](std::size_t t) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::vector<int> rows;
    std::vector<bool> in_bag(n, false);
    if (cfg.bootstrap) {
      const auto draws = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.bootstrap_fraction * n)));
      std::uniform_int_distribution<int> pick(0, static_cast<int>(n) - 1);
      for (std::size_t i = 0; i < draws; ++i) {
        const int r = pick(rng);
        rows.push_back(r);
        in_bag[static_cast<std::size_t>(r)] = true;
      }
    } else {
      rows.resize(n);
      std::iota(rows.begin(), rows.end(), 0);
      in_bag.assign(n, true);
    }
    TreeBuilder b(x, y, cfg, rng);
    trees[t] = b.build(std::move(rows));
    trees[t].in_bag = std::move(in_bag);
  };
  const std::size_t width = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), trees.size());
  if (width <= 1) {
    for (std::size_t t = 0; t < trees.size(); ++t) fit_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < width; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < trees.size(); t = next++) fit_one(t);
      });
    }
    for (auto& th : pool) th.join();
  }

  // Out-of-bag predictions.
  const double ymean = y.mean();
  double ss_res = 0.0, ss_tot = 0.0;
  std::size_t used = 0;
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    int c = 0;
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    for (const Tree& t : trees) {
      if (!t.in_bag[i]) {
        s += t.predict(row);
        ++c;
      }
    }
    if (c == 0) continue;
    ++used;
    ss_res += std::pow(y[static_cast<Eigen::Index>(i)] - s / c, 2);
    ss_tot += std::pow(y[static_cast<Eigen::Index>(i)] - ymean, 2);
  }
  double r2 = std::numeric_limits<double>::quiet_NaN();
  if (used > 0) r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return Forest(std::move(trees), static_cast<std::size_t>(x.cols()), r2);
}

Eigen::MatrixXi ImportanceMatrix::bands() const {
  std::vector<double> v;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    if (zero_row[static_cast<std::size_t>(r)]) continue;
    for (Eigen::Index c = 0; c < values.cols(); ++c) v.push_back(values(r, c));
  }
  Eigen::MatrixXi b = Eigen::MatrixXi::Zero(values.rows(), values.cols());
  if (v.empty()) return b;
  std::sort(v.begin(), v.end());
  // Linear-interpolated quartiles.
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double q1 = quantile(0.25), q2 = quantile(0.5), q3 = quantile(0.75);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    if (zero_row[static_cast<std::size_t>(r)]) continue;
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double x = values(r, c);
      b(r, c) = x <= q1 ? 1 : x <= q2 ? 2 : x <= q3 ? 3 : 4;
    }
  }
  return b;
}

ImportanceMatrix importance_matrix(const std::vector<tuning::Evaluation>& samples, const ForestConfig& cfg) {
  ImportanceMatrix m;
  m.rows = tuning::feval_names();
  const auto names = tuning::weight_names();
  std::vector<std::size_t> col_of;
  for (auto c : kTableColumns) {
    m.columns.emplace_back(c);
    col_of.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), c) - names.begin()));
  }
  const std::size_t nr = m.rows.size(), nc = m.columns.size();
  m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
  m.zero_row.assign(nr, true);
  m.errors.assign(nr, "");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(nc));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != names.size() || samples[i].f.size() != nr) {
      throw InvalidArgument("importance: sample " + std::to_string(i) + " has the wrong shape");
    }
    for (std::size_t c = 0; c < nc; ++c) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = samples[i].x[col_of[c]];
    }
  }
  for (std::size_t r = 0; r < nr; ++r) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) y[static_cast<Eigen::Index>(i)] = samples[i].f[r];
    try {
      const Forest f = fit_forest(x, y, cfg);
      const auto imp = f.importance();
      for (std::size_t c = 0; c < nc; ++c) m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = imp[c];
      m.zero_row[r] = std::accumulate(imp.begin(), imp.end(), 0.0) == 0.0;
    } catch (const InvalidArgument& e) {
      m.errors[r] = e.what();
    }
  }
  return m;
}

void write_importance_csv(const std::filesystem::path& path, const ImportanceMatrix& m,
                          const std::string& config_hash) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  if (!config_hash.empty()) std::fprintf(f, "# config_hash=%s\n", config_hash.c_str());
  std::fprintf(f, "feval");
  for (const auto& c : m.columns) std::fprintf(f, ",%s", c.c_str());
  std::fprintf(f, ",flag,bands\n");
  const Eigen::MatrixXi b = m.bands();
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    std::fprintf(f, "%s", m.rows[r].c_str());
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
      std::fprintf(f, ",%.17g", m.values(static_cast<Eigen::Index>(r), c));
    }
    std::fprintf(f, ",%d,", m.zero_row[r] ? 1 : 0);
    for (Eigen::Index c = 0; c < b.cols(); ++c) std::fprintf(f, c ? " %d" : "%d", b(static_cast<Eigen::Index>(r), c));
    std::fputc('\n', f);
  }
  const bool ok = std::ferror(f) == 0;
  if (std::fclose(f) != 0 || !ok) throw IoError("write failed: " + path.string());
}

}  // namespace headneck::forest
