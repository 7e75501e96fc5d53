#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neurules/activation_store.hpp"

namespace neurules {

/// Rectifier on every hidden layer, identity on the output layer.
struct MlpConfig {
  std::vector<std::size_t> layer_sizes;  // input d, hidden..., output |C|
  std::uint64_t seed = 0;
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;

  void validate() const;
  std::size_t num_hidden() const { return layer_sizes.size() - 2; }

  std::string to_json() const;
  static MlpConfig from_json(const std::string& text);
};

/// Weights of layer l are stored row-major as (layer_sizes[l+1] x layer_sizes[l]).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  bool operator==(const DenseLayer&) const = default;
};

struct MlpModel {
  MlpConfig config;
  std::vector<DenseLayer> layers;

  std::size_t input_size() const { return layers.front().in; }
  std::size_t num_classes() const { return layers.back().out; }
  std::size_t num_hidden() const { return layers.size() - 1; }
  std::size_t hidden_size(std::size_t layer) const { return layers.at(layer).out; }

  void validate() const;

  std::string to_json() const;
  static MlpModel from_json(const std::string& text);

  bool operator==(const MlpModel& o) const { return layers == o.layers; }
};

struct ForwardResult {
  std::vector<std::vector<double>> hidden;  // post-rectifier activations per hidden layer
  std::vector<double> logits;
  std::uint32_t predicted = 0;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_history;  // mean training cross-entropy per epoch

  std::string loss_csv() const;
};

/// Features uniform on [0,1]^10, label = round(x1) XOR round(x2).
LabeledDataset generate_xor(std::size_t n, std::uint64_t seed);

/// Glorot-uniform weights, zero biases, drawn from Pcg32(config.seed).
MlpModel init_mlp(const MlpConfig& config);

/// Plain mini-batch SGD on softmax cross-entropy. The epoch permutation is a
/// Pcg32 shuffle from the same stream that initialised the weights.
TrainResult train_mlp(const MlpConfig& config, const LabeledDataset& ds);

ForwardResult forward(const MlpModel& model, std::span<const double> x);

/// Row i = hidden activations at `layer` for ds row i; predictions = argmax logits.
ActivationDump dump_activations(const MlpModel& model, const LabeledDataset& ds, int layer);

double accuracy(const MlpModel& model, const LabeledDataset& ds);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

/// Mean cross-entropy over the given rows and its gradient with respect to
/// every parameter, laid out like MlpModel::layers. Exposed for gradient checks.
struct LossGradient {
  double loss = 0.0;
  std::vector<DenseLayer> grad;
};
LossGradient loss_and_gradient(const MlpModel& model, const LabeledDataset& ds,
                               std::span<const std::size_t> rows);

}  // namespace neurules
