#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neurules/activation_store.hpp"

namespace neurules {

/// A hidden predicate p(x) = [z_neuron(x) >= threshold] mined for one class.
struct Predicate {
  int layer = 0;
  std::size_t neuron = 0;
  float threshold = 0.0f;
  std::uint32_t target_class = 0;
  double purity = 1.0;
  std::size_t support = 1;

  /// Rejects non-finite thresholds, purity outside [1, 2] and zero support.
  void validate() const;

  bool holds(float activation) const { return activation >= threshold; }

  bool operator==(const Predicate&) const = default;
};

struct ClassPredicates {
  std::uint32_t target_class = 0;
  std::vector<Predicate> predicates;  // descending purity

  bool operator==(const ClassPredicates&) const = default;
};

struct PredicateSet {
  int layer = 0;
  std::size_t k = 0;          // requested
  bool k_clipped = false;     // k exceeded the neuron count
  std::vector<ClassPredicates> classes;

  /// Predicates flattened in column order: class order, then rank.
  std::vector<Predicate> flat() const;
  std::size_t size() const;
  /// Column range [first, first + count) for a class.
  std::pair<std::size_t, std::size_t> columns_of(std::uint32_t cls) const;
  /// Mean purity over every selected predicate.
  double mean_purity() const;

  void validate() const;

  std::string to_json() const;
  static PredicateSet from_json(const std::string& text);

  bool operator==(const PredicateSet&) const = default;
};

struct ThresholdChoice {
  float threshold = 0.0f;
  double purity = 1.0;
  std::size_t support = 0;
};

/// Linear scan over the distinct activation values in descending order.
/// For each cut, purity = tp/|X_c| + tn/|X_not_c|; the first (highest
/// threshold) maximiser wins.
ThresholdChoice optimal_threshold(std::span<const float> activations, std::span<const std::uint32_t> labels,
                                  std::uint32_t target_class);

/// Per neuron, the optimal threshold against every class; per class, the top-k
/// neurons by purity (ties toward the lower neuron index). k > h is clipped
/// and flagged; k == 0 is rejected.
PredicateSet mine_predicates(const ActivationDump& dump, std::size_t k);

/// Row-major n x m 0/1 matrix; column order matches PredicateSet::flat().
struct BitMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(std::size_t i, std::size_t j) const { return bits[i * cols + j]; }
  std::span<const std::uint8_t> row(std::size_t i) const { return {bits.data() + i * cols, cols}; }

  bool operator==(const BitMatrix&) const = default;
};

BitMatrix evaluate_predicates(const PredicateSet& pset, const ActivationDump& dump);

/// Truth values of every predicate for one activation vector of the mined layer.
std::vector<std::uint8_t> evaluate_predicates(const PredicateSet& pset, std::span<const float> activations);
std::vector<std::uint8_t> evaluate_predicates(const PredicateSet& pset, std::span<const double> activations);

}  // namespace neurules
