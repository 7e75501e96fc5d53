#include "neurules/grounding_tabular.hpp"

#include <algorithm>
#include <cmath>

#include "neurules/error.hpp"

namespace neurules {

GroundingDataset build_grounding_dataset(const LabeledDataset& ds, std::uint32_t target_class,
                                         std::span<const std::uint8_t> predicate_truth, std::size_t predicate_id) {
  if (predicate_truth.size() != ds.n) {
    throw Error(ErrorCode::LengthMismatch, "predicate evaluations (" + std::to_string(predicate_truth.size()) +
                                               ") vs dataset rows (" + std::to_string(ds.n) + ")");
  }
  GroundingDataset gd;
  gd.predicate_id = predicate_id;
  gd.target_class = target_class;
  gd.d = ds.d;
  gd.feature_names = ds.feature_names;
  for (std::size_t i = 0; i < ds.n; ++i) {
    if (ds.labels[i] != target_class) continue;
    const auto r = ds.row(i);
    gd.rows.insert(gd.rows.end(), r.begin(), r.end());
    const std::uint8_t t = predicate_truth[i] != 0 ? 1 : 0;
    gd.targets.push_back(t);
    gd.source_rows.push_back(i);
    (t ? gd.num_active : gd.num_inactive)++;
    ++gd.n;
  }
  if (gd.n == 0) throw Error(ErrorCode::EmptyClass, "no rows of class " + std::to_string(target_class));
  return gd;
}

TreeGrounding ground_with_tree(const GroundingDataset& gd, const TreeParams& params) {
  if (gd.trivial()) {
    throw Error(ErrorCode::TrivialTarget, "predicate " + std::to_string(gd.predicate_id) + " is constant on its class (" +
                                              std::to_string(gd.num_active) + " active, " +
                                              std::to_string(gd.num_inactive) + " inactive)");
  }
  std::vector<std::uint32_t> labels(gd.targets.begin(), gd.targets.end());
  TreeGrounding out;
  out.tree = fit_tree(gd.view(), labels, 2, params);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < gd.n; ++i) agree += tree_predict(out.tree, gd.row(i)) == gd.targets[i];
  out.agreement = static_cast<double>(agree) / static_cast<double>(gd.n);
  return out;
}

double expression_loss(const Expression& expr, const GroundingDataset& gd) {
  if (gd.n == 0) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < gd.n; ++i) wrong += eval_expression(expr, gd.row(i)) != (gd.targets[i] != 0);
  return static_cast<double>(wrong) / static_cast<double>(gd.n);
}

}  // namespace neurules
