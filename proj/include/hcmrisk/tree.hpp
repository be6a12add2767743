#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hcmrisk/matrix.hpp"
#include "hcmrisk/rng.hpp"

namespace hcmrisk::models {

struct TreeNode {
  int feature = -1;        // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;      // class-1 fraction, or leaf output for boosting
  double cover = 0.0;      // training samples reaching the node

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Binary tree stored in preorder; node 0 is the root.
class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& mutable_nodes() { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  std::size_t leaf_index(std::span<const double> x) const;
  double predict(std::span<const double> x) const { return nodes_[leaf_index(x)].value; }
  int depth() const;
  int max_feature() const;

  // Throws std::logic_error on a malformed structure.
  void validate() const;

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

enum class SplitCriterion { Gini, SquaredError };

struct TreeParams {
  int max_depth = -1;         // < 0: unlimited
  std::size_t min_leaf = 1;
  std::size_t mtry = 0;       // 0: all features
  SplitCriterion criterion = SplitCriterion::Gini;
};

// Greedy CART growth on the given sample rows (duplicates allowed, e.g. a
// bootstrap draw). Each node tries `mtry` sampled features and takes the best
// midpoint threshold; ties go to the lowest feature index, then the lowest
// threshold. Growth stops at purity, max depth, or when min_leaf forbids any
// split. Leaf value is the mean target over the node's samples.
DecisionTree grow_tree(const Matrix& X, std::span<const double> target,
                       std::span<const std::size_t> rows, const TreeParams& params, Rng& rng);

// Classification convenience: all rows once, 0/1 labels, Gini.
DecisionTree grow_tree(const Matrix& X, std::span<const int> y, const TreeParams& params, Rng& rng);

}  // namespace hcmrisk::models
