#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neurules/activation_store.hpp"
#include "neurules/mlp.hpp"
#include "neurules/predicates.hpp"
#include "neurules/rules.hpp"
#include "neurules/tree.hpp"

namespace neurules {

enum class Teacher { Network, Labels };

/// End-to-end tabular run: split, train, dump, mine, distill, score.
/// Seeds derive from `seed`: data seed, seed + 1 for the split, seed + 2 for
/// the network.
struct PipelineConfig {
  std::size_t n = 1000;  // generated XOR rows
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  std::vector<std::size_t> hidden{64, 32};
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  int layer = -1;  // hidden layer to mine; -1 = last
  std::size_t top_k = 15;
  TreeParams tree;
  Teacher teacher = Teacher::Network;
  bool collect_on_full = false;  // mine on train + test instead of train only
};

struct PipelineResult {
  SplitResult split;
  TrainResult training;
  double network_test_accuracy = 0.0;
  PredicateSet predicates;
  RuleModel model;
  Metrics metrics;  // on the test split; runtime covers mining + distillation
  double wall_seconds = 0.0;
};

/// Runs on `data`, or on generate_xor(config.n, config.seed) when absent.
PipelineResult run_pipeline(const PipelineConfig& config, const std::optional<LabeledDataset>& data = std::nullopt);

/// Teacher labels for a dataset: the network's argmax or the ground truth.
std::vector<std::uint32_t> teacher_labels(const MlpModel& model, const LabeledDataset& ds, Teacher teacher);

}  // namespace neurules
