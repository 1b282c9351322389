#pragma once

// Random-forest regression and impurity-based feature importance.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "headneck/tuning.hpp"

namespace headneck::forest {

struct ForestConfig {
  int trees = 200;
  int max_depth = 8;
  int min_samples_leaf = 5;
  bool bootstrap = true;           // with replacement
  double bootstrap_fraction = 1.0;  // of the sample count, per tree
  int features_per_split = 0;      // 0: ceil(features / 3)
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
};

inline constexpr std::size_t kMinSamples = 20;

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf mean
};

struct Tree {
  std::vector<TreeNode> nodes;  // root first
  std::vector<double> impurity_decrease;  // per feature, sum of squared-error reductions
  std::vector<bool> in_bag;

  double predict(std::span<const double> x) const;
  int depth() const;
};

class Forest {
 public:
  Forest(std::vector<Tree> trees, std::size_t features, double oob_r2);

  /// Mean of the tree predictions.
  double predict(std::span<const double> x) const;
  /// Mean impurity decrease per feature, normalized to sum 1; all zero when
  /// no tree split.
  std::vector<double> importance() const;
  /// Raw mean impurity decrease per feature.
  std::vector<double> raw_importance() const;
  /// Out-of-bag coefficient of determination (NaN when no sample is ever
  /// out of bag).
  double oob_r2() const { return oob_r2_; }

  const std::vector<Tree>& trees() const { return trees_; }
  std::size_t features() const { return features_; }

 private:
  std::vector<Tree> trees_;
  std::size_t features_;
  double oob_r2_;
};

/// X is samples x features.
Forest fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestConfig& cfg);

/// Column order of the weights in the importance matrix.
inline constexpr std::array<std::string_view, mpc::kWeightCount> kTableColumns = {
    "wx1", "wx2", "tx1", "tx2", "wz2", "tz2", "ty1", "ty2", "wy1", "wy2"};

struct ImportanceMatrix {
  std::vector<std::string> rows;     // objective names
  std::vector<std::string> columns;  // weight names, table order
  Eigen::MatrixXd values;            // rows x columns, each row sums to 1 or is all zero
  std::vector<bool> zero_row;        // no split found (for example a constant objective)
  std::vector<std::string> errors;   // per row, empty when the fit succeeded

  /// Quartile bin (1 lowest .. 4 highest) of each cell among the non-zero
  /// rows' values; 0 in flagged rows.
  Eigen::MatrixXi bands() const;
};

/// One forest per objective over the weight columns of the samples. Rows
/// follow the objective order; columns follow kTableColumns.
ImportanceMatrix importance_matrix(const std::vector<tuning::Evaluation>& samples, const ForestConfig& cfg);

/// CSV: feval, the ten weights, flag (0/1), bands (space-separated bins).
void write_importance_csv(const std::filesystem::path& path, const ImportanceMatrix& m,
                          const std::string& config_hash = {});

}  // namespace headneck::forest
