#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurules/predicates.hpp"
#include "neurules/tree.hpp"

namespace neurules {

struct Literal {
  std::size_t predicate = 0;  // column id in the predicate matrix
  bool positive = true;

  bool operator==(const Literal&) const = default;
};

enum class ClauseSource { Enumerated, Distilled };

/// A conjunction of (possibly negated) predicates.
struct Clause {
  std::vector<Literal> literals;
  ClauseSource source = ClauseSource::Enumerated;
  std::size_t support = 0;

  bool satisfied_by(std::span<const std::uint8_t> bits) const;
  std::string render() const;  // "(p3 ∧ ¬p7)"

  bool operator==(const Clause&) const = default;
};

/// A disjunction of clauses implying target_class.
struct DnfRule {
  std::uint32_t target_class = 0;
  std::vector<Clause> clauses;

  bool satisfied_by(std::span<const std::uint8_t> bits) const;
  /// Highest-support satisfied clause (first on ties), if any.
  std::optional<std::size_t> top_active_clause(std::span<const std::uint8_t> bits) const;
  std::string render() const;  // "(p3 ∧ ¬p7) ∨ (…) ⇒ class c"

  bool operator==(const DnfRule&) const = default;
};

/// One full-length clause per distinct row (bit 1 -> p_i, bit 0 -> ¬p_i).
/// Literal ids are the given column ids (default 0..m-1). Clauses are ordered
/// by descending multiplicity, then lexicographically by bit string.
DnfRule enumerate_clauses(const BitMatrix& rows, std::uint32_t target_class,
                          std::span<const std::size_t> column_ids = {});

/// Per class c: the enumerated DNF of class-c rows over the class's own predicates.
std::vector<DnfRule> enumerate_class_rules(const PredicateSet& pset, const BitMatrix& bits,
                                           std::span<const std::uint32_t> labels);

struct RuleModel {
  std::optional<PredicateSet> predicates;
  DecisionTree tree;
  std::vector<DnfRule> rules;  // one per class, indexed by class
  std::uint32_t default_class = 0;
  std::size_t num_predicates = 0;

  std::size_t num_clauses() const;
  double avg_clause_length() const;

  std::string to_json() const;
  static RuleModel from_json(const std::string& text);
};

/// Fits a tree on the predicate bits against the teacher labels and turns each
/// leaf path into a clause (feature <= 0.5 -> ¬p, > 0.5 -> p).
RuleModel distill(const BitMatrix& bits, std::span<const std::uint32_t> teacher, std::uint32_t num_classes,
                  const TreeParams& params);

/// Class of the satisfied clause; paths partition the hypercube so at most one
/// clause can hold. Falls back to default_class otherwise.
std::uint32_t rule_predict(const RuleModel& model, std::span<const std::uint8_t> bits);

struct Metrics {
  double accuracy = 0.0;
  double fidelity = 0.0;
  double runtime_seconds = 0.0;
  std::size_t num_clauses = 0;
  double avg_clause_length = 0.0;

  std::string to_json() const;
  static Metrics from_json(const std::string& text);
};

Metrics score(const RuleModel& model, const BitMatrix& bits, std::span<const std::uint32_t> truth,
              std::span<const std::uint32_t> teacher, double runtime_seconds);

}  // namespace neurules
