#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neurules/activation_store.hpp"
#include "neurules/oracle.hpp"
#include "neurules/predicates.hpp"
#include "neurules/rules.hpp"

namespace neurules {

/// Declaration order is the first-match order used by assign_template.
enum class TemplateType { IsHashtag, AtStart, AtEnd, BeforeSubject, AfterSubject, BeforeVerb, AfterVerb, Exists };

std::string_view to_string(TemplateType t);  // "is_hashtag", "at_start", ...
TemplateType template_from_string(std::string_view s);

enum class FlipMode {
  Predicate,  // any tracked predicate becomes false
  Class,      // the rule as a whole stops holding
};

struct LexicalParams {
  double alpha = 0.20;
  std::size_t window = 6;
  double tau = 0.03;
  bool lowercase_normalize = true;
  FlipMode flip_mode = FlipMode::Predicate;
  /// Concurrent oracle queries; 0 = thread_count().
  std::size_t max_in_flight = 0;

  void validate() const;
};

struct AtomicAbstractionLex {
  std::string keyword;
  TemplateType template_type = TemplateType::Exists;

  auto operator<=>(const AtomicAbstractionLex&) const = default;
};

struct GroundedRule {
  AtomicAbstractionLex abstraction;
  std::size_t flips = 0;
  std::size_t total = 0;
  double flip_rate = 0.0;
  double idf = 0.0;
  double score = 0.0;  // idf * flips / total
  std::uint32_t target_class = 0;
  std::vector<std::size_t> clauses;  // rule clauses that produced causal occurrences

  bool operator==(const GroundedRule&) const = default;
};

/// Lowercases (optionally) and strips every '#' that is not the first character.
std::string normalize_keyword(std::string_view token, bool lowercase = true);

/// Document frequency of every normalized word.
std::map<std::string, std::size_t> document_frequencies(std::span<const AnnotatedExample> corpus, bool lowercase = true);

/// ln((N + 1) / (df + 1)) with N the corpus size.
double idf(std::string_view word, std::span<const AnnotatedExample> corpus, bool lowercase = true);
double idf_from_counts(std::size_t num_docs, std::size_t df);

/// First matching template for a token; never returns Exists unless nothing
/// positional applies.
TemplateType assign_template(std::size_t index, const AnnotatedExample& example, const LexicalParams& params);

/// Masks one token and reports whether any tracked predicate column turns
/// false. `baseline` holds the unmasked truth values; when empty it is
/// computed here. Tracked predicates must hold on the unmasked input.
bool causal_test(Oracle& oracle, const AnnotatedExample& example, std::size_t index, const PredicateSet& pset,
                 std::span<const std::size_t> tracked, std::span<const std::uint8_t> baseline = {});

struct LexicalResult {
  std::vector<GroundedRule> rules;  // descending score, then flips, then keyword
  /// Causal occurrences per keyword by relative sentence position (10 buckets).
  std::map<std::string, std::array<std::size_t, 10>> position_histograms;
  std::size_t examples_tested = 0;
  std::size_t examples_skipped = 0;  // no active clause of the rule
  bool partial = false;              // an oracle failure stopped the run
  std::string error;

  std::string to_json() const;
  static LexicalResult from_json(const std::string& text);
  /// Aligned "Keyword | Template | Flips | Total | Rate | Score" table.
  std::string to_table() const;
  std::string histograms_csv() const;
};

/// Grounds one class rule over a corpus. Examples are tested against the
/// highest-support clause of the rule that they satisfy; the positive literals
/// of that clause are the tracked predicates. Every token inside a sentence is
/// masked in turn. Each tested occurrence counts toward its (keyword,
/// positional template) pair and its (keyword, Exists) pair.
LexicalResult ground_class(std::span<const AnnotatedExample> corpus, const PredicateSet& pset, const DnfRule& rule,
                           Oracle& oracle, const LexicalParams& params);

}  // namespace neurules
