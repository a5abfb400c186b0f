#pragma once

// Gradient-boosted regression trees with logistic loss, used as the surrogate
// classifier on hidden activations and as the cluster-membership classifier.

#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace advrep {

struct GbtConfig {
  std::size_t n_rounds = 100;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  std::size_t min_samples_leaf = 1;
  double subsample = 1.0;  // row fraction per round, drawn from `seed`
  std::uint64_t seed = 0;

  void validate() const;
};

struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 for a leaf
    double threshold = 0.0;  // go left when x[feature] < threshold
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
};

/// One-output boosted model: margin = init + learning_rate * sum(tree outputs).
struct BinaryGbt {
  double init_margin = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;

  Eigen::VectorXd margin(const Eigen::MatrixXd& X) const;
};

struct SurrogateModel {
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::vector<int> classes;       // original target value of each class slot
  std::vector<BinaryGbt> models;  // one (positive class) when binary, else one-vs-rest

  /// Log-odds that each row belongs to class slot `cls`.
  Eigen::VectorXd margin(const Eigen::MatrixXd& X, std::size_t cls) const;
  /// n×C class scores: sigmoid of each one-vs-rest margin (binary: [1-p, p]).
  Eigen::MatrixXd proba(const Eigen::MatrixXd& X) const;
  /// Original target value of the highest-scoring class per row.
  std::vector<int> predict(const Eigen::MatrixXd& X) const;
  /// Every feature index used by a split in any tree.
  std::set<std::size_t> used_features() const;
};

/// Each round fits a depth-limited least-squares tree to the logistic
/// residuals y - p with one Newton step per leaf (sum r / sum p(1-p)).
/// Targets with exactly two distinct values give a binary model; more give
/// one-vs-rest models. A single-class target throws ContractError.
SurrogateModel train_surrogate(const Eigen::MatrixXd& X, std::span<const int> targets, const GbtConfig& config);

}  // namespace advrep
