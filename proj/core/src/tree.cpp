#include "neurules/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "neurules/error.hpp"

namespace neurules {

using nlohmann::json;
using nlohmann::ordered_json;

void TreeParams::validate() const {
  if (max_depth < 1) throw Error(ErrorCode::InvalidArgument, "max_depth must be >= 1");
  if (min_samples_leaf < 1) throw Error(ErrorCode::InvalidArgument, "min_samples_leaf must be >= 1");
  if (!(min_gain >= 0.0)) throw Error(ErrorCode::InvalidArgument, "min_gain must be >= 0");
}

double gini(std::span<const std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (total == 0.0) return 0.0;
  double sq = 0.0;
  for (auto c : counts) sq += static_cast<double>(c) * static_cast<double>(c);
  return 1.0 - sq / (total * total);
}

namespace {

std::uint32_t majority(std::span<const std::size_t> counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return static_cast<std::uint32_t>(best);
}

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

class Builder {
 public:
  Builder(FeatureView x, std::span<const std::uint32_t> y, std::uint32_t num_classes, const TreeParams& params)
      : x_(x), y_(y), num_classes_(num_classes), params_(params) {}

  DecisionTree build() {
    DecisionTree tree;
    tree.num_classes = num_classes_;
    std::vector<std::size_t> rows(x_.n);
    std::iota(rows.begin(), rows.end(), 0);
    grow(tree, rows, 0);
    std::size_t max_feature = 0;
    bool any = false;
    for (const auto& node : tree.nodes) {
      if (!node.is_leaf()) {
        max_feature = std::max(max_feature, static_cast<std::size_t>(node.feature));
        any = true;
      }
    }
    tree.num_features = any ? max_feature + 1 : 0;
    return tree;
  }

 private:
  std::vector<std::size_t> histogram(std::span<const std::size_t> rows) const {
    std::vector<std::size_t> counts(num_classes_, 0);
    for (auto r : rows) ++counts[y_[r]];
    return counts;
  }

  Split best_split(std::span<const std::size_t> rows, std::span<const std::size_t> counts) const {
    const std::size_t n = rows.size();
    const double parent = gini(counts);
    const double total = static_cast<double>(n);
    Split best;
    std::vector<std::size_t> sorted(rows.begin(), rows.end());
    std::vector<std::size_t> left(num_classes_);
    std::vector<std::size_t> right(num_classes_);
    for (std::size_t f = 0; f < x_.d; ++f) {
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::size_t a, std::size_t b) { return x_.at(a, f) < x_.at(b, f); });
      std::fill(left.begin(), left.end(), 0);
      right.assign(counts.begin(), counts.end());
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto r = sorted[i];
        ++left[y_[r]];
        --right[y_[r]];
        const double lo = x_.at(r, f);
        const double hi = x_.at(sorted[i + 1], f);
        if (!(lo < hi)) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = n - nl;
        if (nl < params_.min_samples_leaf || nr < params_.min_samples_leaf) continue;
        const double child = (static_cast<double>(nl) * gini(left) + static_cast<double>(nr) * gini(right)) / total;
        const double gain = parent - child;
        if (!best.found || gain > best.gain) {
          best = {true, f, lo + (hi - lo) / 2.0, gain};
        }
      }
    }
    return best;
  }

  std::size_t grow(DecisionTree& tree, std::vector<std::size_t>& rows, std::size_t depth) {
    const std::size_t index = tree.nodes.size();
    tree.nodes.emplace_back();
    auto counts = histogram(rows);
    const std::uint32_t label = majority(counts);

    const bool pure = counts[label] == rows.size();
    Split split;
    if (!pure && depth < params_.max_depth && rows.size() >= 2 * params_.min_samples_leaf) {
      split = best_split(rows, counts);
    }
    if (!split.found || split.gain < params_.min_gain) {
      auto& node = tree.nodes[index];
      node.label = label;
      node.counts = std::move(counts);
      return index;
    }

    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows) (x_.at(r, split.feature) <= split.threshold ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const std::size_t left = grow(tree, left_rows, depth + 1);
    const std::size_t right = grow(tree, right_rows, depth + 1);
    auto& node = tree.nodes[index];
    node.feature = static_cast<int>(split.feature);
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    node.label = label;
    node.counts = std::move(counts);
    node.gain = split.gain;
    return index;
  }

  FeatureView x_;
  std::span<const std::uint32_t> y_;
  std::uint32_t num_classes_;
  TreeParams params_;
};

}  // namespace

DecisionTree fit_tree(FeatureView features, std::span<const std::uint32_t> labels, std::uint32_t num_classes,
                      const TreeParams& params) {
  params.validate();
  if (features.n == 0 || features.d == 0) throw Error(ErrorCode::EmptyInput, "fit_tree needs n >= 1 and d >= 1");
  if (features.values.size() != features.n * features.d) throw Error(ErrorCode::ShapeMismatch, "feature matrix size");
  if (labels.size() != features.n) throw Error(ErrorCode::LengthMismatch, "labels vs rows");
  if (num_classes == 0) throw Error(ErrorCode::InvalidArgument, "num_classes must be >= 1");
  for (auto l : labels) {
    if (l >= num_classes) throw Error(ErrorCode::InvariantViolation, "label >= num_classes");
  }
  return Builder(features, labels, num_classes, params).build();
}

std::size_t tree_leaf(const DecisionTree& tree, std::span<const double> x) {
  if (x.size() < tree.num_features) {
    throw Error(ErrorCode::FeatureOutOfRange, "input has " + std::to_string(x.size()) + " features, tree needs " +
                                                  std::to_string(tree.num_features));
  }
  std::size_t i = 0;
  while (!tree.nodes[i].is_leaf()) {
    const auto& node = tree.nodes[i];
    i = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return i;
}

std::uint32_t tree_predict(const DecisionTree& tree, std::span<const double> x) {
  return tree.nodes[tree_leaf(tree, x)].label;
}

bool TreePath::holds(std::span<const double> x) const {
  return std::all_of(literals.begin(), literals.end(), [&](const PathLiteral& l) { return l.holds(x); });
}

std::vector<TreePath> extract_paths(const DecisionTree& tree) {
  std::vector<TreePath> paths;
  std::vector<PathLiteral> prefix;
  auto walk = [&](auto&& self, std::size_t i) -> void {
    const auto& node = tree.nodes[i];
    if (node.is_leaf()) {
      paths.push_back(TreePath{prefix, node.label, node.counts, i});
      return;
    }
    const auto f = static_cast<std::size_t>(node.feature);
    prefix.push_back({f, Comparison::LessEqual, node.threshold});
    self(self, node.left);
    prefix.back().cmp = Comparison::Greater;
    self(self, node.right);
    prefix.pop_back();
  };
  if (!tree.nodes.empty()) walk(walk, 0);
  return paths;
}

std::size_t DecisionTree::depth() const {
  auto rec = [&](auto&& self, std::size_t i) -> std::size_t {
    const auto& node = nodes[i];
    if (node.is_leaf()) return 0;
    return 1 + std::max(self(self, node.left), self(self, node.right));
  };
  return nodes.empty() ? 0 : rec(rec, 0);
}

std::size_t DecisionTree::num_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

void DecisionTree::validate() const {
  if (nodes.empty()) throw Error(ErrorCode::InvariantViolation, "tree has no nodes");
  // Preorder: walking from the root must visit indices 0, 1, 2, ... exactly once.
  std::size_t expected = 0;
  auto walk = [&](auto&& self, std::size_t i) -> void {
    if (i != expected || i >= nodes.size()) throw Error(ErrorCode::InvariantViolation, "nodes are not in preorder");
    ++expected;
    const auto& node = nodes[i];
    if (node.counts.size() != num_classes) throw Error(ErrorCode::InvariantViolation, "histogram size");
    if (node.label >= num_classes) throw Error(ErrorCode::InvariantViolation, "node label >= num_classes");
    if (node.is_leaf()) return;
    if (static_cast<std::size_t>(node.feature) >= num_features) {
      throw Error(ErrorCode::InvariantViolation, "feature index beyond num_features");
    }
    self(self, node.left);
    self(self, node.right);
  };
  walk(walk, 0);
  if (expected != nodes.size()) throw Error(ErrorCode::InvariantViolation, "unreachable nodes");
}

std::string DecisionTree::to_json() const {
  ordered_json j;
  j["num_classes"] = num_classes;
  j["num_features"] = num_features;
  ordered_json arr = ordered_json::array();
  for (const auto& node : nodes) {
    ordered_json nj;
    if (node.is_leaf()) {
      nj["leaf"] = true;
      nj["class"] = node.label;
    } else {
      nj["feature"] = node.feature;
      nj["threshold"] = node.threshold;
      nj["left"] = node.left;
      nj["right"] = node.right;
      nj["gain"] = node.gain;
      nj["class"] = node.label;
    }
    nj["counts"] = node.counts;
    arr.push_back(std::move(nj));
  }
  j["nodes"] = std::move(arr);
  return j.dump();
}

DecisionTree DecisionTree::from_json(const std::string& text) {
  DecisionTree tree;
  try {
    const json j = json::parse(text);
    tree.num_classes = j.at("num_classes").get<std::uint32_t>();
    tree.num_features = j.at("num_features").get<std::size_t>();
    for (const auto& nj : j.at("nodes")) {
      TreeNode node;
      if (!nj.value("leaf", false)) {
        node.feature = nj.at("feature").get<int>();
        node.threshold = nj.at("threshold").get<double>();
        node.left = nj.at("left").get<std::size_t>();
        node.right = nj.at("right").get<std::size_t>();
        node.gain = nj.value("gain", 0.0);
      }
      node.label = nj.at("class").get<std::uint32_t>();
      node.counts = nj.at("counts").get<std::vector<std::size_t>>();
      tree.nodes.push_back(std::move(node));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("decision tree: ") + e.what());
  }
  tree.validate();
  return tree;
}

}  // namespace neurules
