#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "neurules/mlp.hpp"

namespace neurules {

enum class Modality { Vector, Text };

struct OracleInfo {
  std::size_t num_layers = 0;
  std::vector<std::size_t> hidden_sizes;  // one per layer
  std::size_t num_classes = 0;
  std::optional<std::string> mask_token;
  Modality modality = Modality::Vector;

  /// Sizes >= 1; text modality requires a mask token.
  void validate() const;

  bool operator==(const OracleInfo&) const = default;
};

using OracleInput = std::variant<std::vector<double>, std::vector<std::string>>;

struct OracleOutput {
  std::vector<double> activations;
  std::uint32_t prediction = 0;

  bool operator==(const OracleOutput&) const = default;
};

/// Answers activation queries for (possibly masked) inputs. Implementations
/// must be safe to call from several threads at once.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual OracleInfo info() const = 0;
  /// Called by query_activations after argument validation.
  virtual OracleOutput query(const OracleInput& input, std::size_t layer, std::span<const std::size_t> mask) = 0;
};

/// Validates layer and mask against the oracle's info, queries, and checks the
/// returned activation width.
OracleOutput query_activations(Oracle& oracle, const OracleInput& input, std::size_t layer,
                               std::span<const std::size_t> mask = {});

/// Vector oracle backed by an in-process MLP; identical to forward().
class MlpOracle final : public Oracle {
 public:
  explicit MlpOracle(MlpModel model) : model_(std::move(model)) {}
  OracleInfo info() const override;
  OracleOutput query(const OracleInput& input, std::size_t layer, std::span<const std::size_t> mask) override;

 private:
  MlpModel model_;
};

/// Scripted text oracle. Each neuron is a pure function of the (masked) token
/// sequence; the prediction is the argmax of a scripted class-score function,
/// or 0 when none is given.
class FixtureOracle final : public Oracle {
 public:
  using Neuron = std::function<double(std::span<const std::string>)>;
  using Classifier = std::function<std::uint32_t(std::span<const std::string>)>;

  FixtureOracle(std::vector<Neuron> neurons, std::size_t num_classes, std::string mask_token = "[MASK]",
                Classifier classifier = {});

  /// Neuron j fires (1.0) iff keywords[j] occurs among the tokens, else 0.0.
  static FixtureOracle keyword_presence(std::vector<std::string> keywords, std::size_t num_classes,
                                        std::string mask_token = "[MASK]");

  OracleInfo info() const override;
  OracleOutput query(const OracleInput& input, std::size_t layer, std::span<const std::size_t> mask) override;

  /// Queries answered so far, shared between copies.
  std::size_t queries() const { return queries_->load(); }

 private:
  std::vector<Neuron> neurons_;
  std::size_t num_classes_;
  std::string mask_token_;
  Classifier classifier_;
  std::shared_ptr<std::atomic<std::size_t>> queries_ = std::make_shared<std::atomic<std::size_t>>(0);
};

}  // namespace neurules
