#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neurules/activation_store.hpp"
#include "neurules/expression.hpp"
#include "neurules/tree.hpp"

namespace neurules {

/// Rows of X_c labelled with a predicate's truth value.
struct GroundingDataset {
  std::size_t predicate_id = 0;
  std::uint32_t target_class = 0;
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> rows;        // n x d, row-major
  std::vector<std::uint8_t> targets;
  std::vector<std::size_t> source_rows;  // indices into the originating dataset
  std::size_t num_active = 0;      // |D_1|
  std::size_t num_inactive = 0;    // |D_0|
  std::vector<std::string> feature_names;

  bool trivial() const { return num_active == 0 || num_inactive == 0; }
  FeatureView view() const { return {rows, n, d}; }
  std::span<const double> row(std::size_t i) const { return {rows.data() + i * d, d}; }
};

/// `predicate_truth` is aligned with ds rows (one 0/1 value per row).
GroundingDataset build_grounding_dataset(const LabeledDataset& ds, std::uint32_t target_class,
                                         std::span<const std::uint8_t> predicate_truth, std::size_t predicate_id = 0);

struct TreeGrounding {
  DecisionTree tree;
  double agreement = 0.0;
};

TreeGrounding ground_with_tree(const GroundingDataset& gd, const TreeParams& params);

struct SynthesisParams {
  double lambda = 0.01;
  std::size_t max_size = 9;
  std::size_t beam_width = 64;
  /// Atoms paired with compound beam members when forming conjunctions and
  /// disjunctions (best atoms by objective). 0 = every atom.
  std::size_t atom_pool = 256;
  std::size_t quantiles = 10;  // thresholds at the interior q/quantiles points
  std::vector<double> coefficients{-1.0, -0.5, 0.5, 1.0};
  bool squares = true;
  bool linear = true;
  /// No beam truncation and no atom pool; only allowed for max_size <= 3.
  bool exhaustive = false;
  /// Hard cap on evaluated candidates; the best so far is returned when hit.
  std::size_t max_candidates = 5'000'000;

  void validate() const;
};

struct SynthesisResult {
  ExprPtr expression;
  double objective = 0.0;
  double loss = 0.0;  // misclassification rate
  std::size_t candidates = 0;
  bool budget_exhausted = false;
};

/// Feature functions of the grammar in enumeration order.
std::vector<FeatureFunction> grammar_functions(std::size_t d, const SynthesisParams& params);

/// Threshold grid for one function: the interior quantiles (linear
/// interpolation between order statistics) of f over the rows, deduplicated.
std::vector<double> threshold_grid(const GroundingDataset& gd, const FeatureFunction& fn, std::size_t quantiles);

/// Every atom of the grammar, in enumeration order (function, threshold, <= then >).
std::vector<ExprPtr> grammar_atoms(const GroundingDataset& gd, const SynthesisParams& params);

/// Misclassification rate of an expression on the grounding rows.
double expression_loss(const Expression& expr, const GroundingDataset& gd);

/// Bottom-up search by expression size. Candidates with an already-seen truth
/// vector are dropped; each size keeps the best beam_width by
/// (objective, size, construction order). Objective = loss + lambda * size.
SynthesisResult synthesize_expression(const GroundingDataset& gd, const SynthesisParams& params);

}  // namespace neurules
