#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace neurules {

struct TreeParams {
  std::size_t max_depth = 6;
  std::size_t min_samples_leaf = 5;
  double min_gain = 1e-4;

  void validate() const;
};

/// Internal nodes route left iff x[feature] <= threshold. Nodes are stored in
/// preorder: node 0 is the root and a left subtree precedes its right sibling.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  std::uint32_t label = 0;            // majority class (also kept on internal nodes)
  std::vector<std::size_t> counts;    // class histogram of training rows reaching the node
  double gain = 0.0;                  // Gini gain of the split (internal nodes)

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::uint32_t num_classes = 0;
  std::size_t num_features = 0;  // max feature index used + 1
  std::vector<TreeNode> nodes;

  std::size_t depth() const;
  std::size_t num_leaves() const;

  /// Checks preorder layout, reachability and histogram shapes.
  void validate() const;

  std::string to_json() const;
  static DecisionTree from_json(const std::string& text);

  bool operator==(const DecisionTree&) const = default;
};

/// Row-major n x d feature matrix.
struct FeatureView {
  std::span<const double> values;
  std::size_t n = 0;
  std::size_t d = 0;

  double at(std::size_t i, std::size_t f) const { return values[i * d + f]; }
  std::span<const double> row(std::size_t i) const { return values.subspan(i * d, d); }
};

/// Greedy CART with Gini impurity. Candidate thresholds are midpoints of
/// consecutive distinct sorted values; ties between candidates go to the lower
/// feature index, then the lower threshold. A node becomes a leaf when it is
/// pure, at max_depth, cannot honour min_samples_leaf on both sides, or its
/// best gain is below min_gain.
DecisionTree fit_tree(FeatureView features, std::span<const std::uint32_t> labels, std::uint32_t num_classes,
                      const TreeParams& params);

std::uint32_t tree_predict(const DecisionTree& tree, std::span<const double> x);
std::size_t tree_leaf(const DecisionTree& tree, std::span<const double> x);

enum class Comparison { LessEqual, Greater };

struct PathLiteral {
  std::size_t feature = 0;
  Comparison cmp = Comparison::LessEqual;
  double threshold = 0.0;

  bool holds(std::span<const double> x) const {
    return cmp == Comparison::LessEqual ? x[feature] <= threshold : x[feature] > threshold;
  }
  bool operator==(const PathLiteral&) const = default;
};

struct TreePath {
  std::vector<PathLiteral> literals;  // root to leaf
  std::uint32_t label = 0;
  std::vector<std::size_t> counts;
  std::size_t leaf = 0;  // node index

  bool holds(std::span<const double> x) const;
};

std::vector<TreePath> extract_paths(const DecisionTree& tree);

/// Gini impurity of a class histogram.
double gini(std::span<const std::size_t> counts);

}  // namespace neurules
