#pragma once

// On-disk formats shared by every stage: NLAD activation dumps, labeled
// tabular datasets (CSV), and annotated text corpora (JSON lines).
//
// NLAD v1 layout:
//   line 1   UTF-8 JSON header terminated by '\n':
//            {"magic":"NLAD","version":1,"layer":L,"n":N,"h":H,
//             "num_classes":C,"has_predictions":B,"has_doc_ids":B}
//   payload  N*H little-endian f32 values (row-major)
//            N little-endian u32 labels
//            N little-endian u32 predictions      (if has_predictions)
//            one JSON array line of N doc ids     (if has_doc_ids)

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace neurules {

struct ActivationDump {
  int layer = 0;
  std::size_t n = 0;
  std::size_t h = 0;
  std::uint32_t num_classes = 0;
  std::vector<float> values;  // n*h, row-major
  std::vector<std::uint32_t> labels;
  std::optional<std::vector<std::uint32_t>> predictions;
  std::optional<std::vector<std::string>> doc_ids;

  std::span<const float> row(std::size_t i) const { return {values.data() + i * h, h}; }
  float at(std::size_t i, std::size_t j) const { return values[i * h + j]; }

  /// Throws Error(InvariantViolation | NonFiniteValue) when the dump is malformed.
  void validate() const;

  bool operator==(const ActivationDump&) const = default;
};

struct LabeledDataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::uint32_t num_classes = 0;
  std::vector<double> features;  // n*d, row-major
  std::vector<std::uint32_t> labels;
  std::vector<std::string> feature_names;  // empty or size d

  std::span<const double> row(std::size_t i) const { return {features.data() + i * d, d}; }

  void validate() const;

  /// Rows in the given order (used by splitting and class restriction).
  LabeledDataset subset(std::span<const std::size_t> rows) const;

  bool operator==(const LabeledDataset&) const = default;
};

using TokenSpan = std::pair<std::size_t, std::size_t>;  // half-open [begin, end)

struct AnnotatedExample {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<TokenSpan> sentences;
  std::vector<std::optional<std::size_t>> subject_index;  // one per sentence
  std::vector<std::optional<std::size_t>> verb_index;     // one per sentence
  std::uint32_t label = 0;

  void validate() const;

  /// Index of the sentence containing token `index`, if any.
  std::optional<std::size_t> sentence_of(std::size_t index) const;

  bool operator==(const AnnotatedExample&) const = default;
};

void write_activation_dump(const ActivationDump& dump, const std::filesystem::path& path);
ActivationDump read_activation_dump(const std::filesystem::path& path);

/// In-memory variants of the NLAD codec; the file functions are thin wrappers.
std::string encode_activation_dump(const ActivationDump& dump);
ActivationDump decode_activation_dump(const std::string& bytes);

LabeledDataset ingest_csv(const std::filesystem::path& path, const std::string& label_column,
                          std::uint32_t num_classes);
LabeledDataset parse_csv(const std::string& text, const std::string& label_column,
                         std::uint32_t num_classes);
/// Features then the label column, with a header row.
std::string format_csv(const LabeledDataset& ds, const std::string& label_column = "y");
void write_csv(const LabeledDataset& ds, const std::filesystem::path& path,
               const std::string& label_column = "y");

struct SplitResult {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<std::size_t> train_rows;  // ascending original indices
  std::vector<std::size_t> test_rows;
};

/// Stratified, seeded split. Per class, round(fraction * count) rows go to
/// the test side (rows chosen by a Pcg32 shuffle); totals are then nudged so
/// both sides are nonempty.
SplitResult split_dataset(const LabeledDataset& ds, double test_fraction, std::uint64_t seed);

std::vector<AnnotatedExample> read_corpus(const std::filesystem::path& path);
std::vector<AnnotatedExample> parse_corpus(const std::string& jsonl);
std::string corpus_to_jsonl(std::span<const AnnotatedExample> corpus);

}  // namespace neurules
