#include "neurules/oracle.hpp"

#include <algorithm>

#include "neurules/error.hpp"

namespace neurules {

void OracleInfo::validate() const {
  if (num_layers < 1) throw Error(ErrorCode::InvariantViolation, "oracle must expose >= 1 layer");
  if (hidden_sizes.size() != num_layers) {
    throw Error(ErrorCode::InvariantViolation, "hidden_sizes has " + std::to_string(hidden_sizes.size()) +
                                                   " entries for " + std::to_string(num_layers) + " layers");
  }
  for (auto h : hidden_sizes) {
    if (h < 1) throw Error(ErrorCode::InvariantViolation, "hidden sizes must be >= 1");
  }
  if (num_classes < 1) throw Error(ErrorCode::InvariantViolation, "num_classes must be >= 1");
  if (modality == Modality::Text && (!mask_token || mask_token->empty())) {
    throw Error(ErrorCode::InvariantViolation, "text oracles must declare a mask token");
  }
}

OracleOutput query_activations(Oracle& oracle, const OracleInput& input, std::size_t layer,
                               std::span<const std::size_t> mask) {
  const OracleInfo info = oracle.info();
  if (layer >= info.num_layers) {
    throw Error(ErrorCode::LayerOutOfRange, "layer " + std::to_string(layer) + " (oracle has " +
                                                std::to_string(info.num_layers) + " layers)");
  }
  if (const auto* tokens = std::get_if<std::vector<std::string>>(&input)) {
    if (info.modality != Modality::Text) throw Error(ErrorCode::InvalidArgument, "vector oracle given tokens");
    for (auto m : mask) {
      if (m >= tokens->size()) {
        throw Error(ErrorCode::InvalidArgument, "mask index " + std::to_string(m) + " outside " +
                                                    std::to_string(tokens->size()) + " tokens");
      }
    }
  } else {
    if (info.modality != Modality::Vector) throw Error(ErrorCode::InvalidArgument, "text oracle given features");
    if (!mask.empty()) throw Error(ErrorCode::MaskUnsupported, "vector oracles do not accept masks");
  }
  OracleOutput out = oracle.query(input, layer, mask);
  if (out.activations.size() != info.hidden_sizes[layer]) {
    throw Error(ErrorCode::ProtocolViolation, "expected " + std::to_string(info.hidden_sizes[layer]) +
                                                  " activations, got " + std::to_string(out.activations.size()));
  }
  if (out.prediction >= info.num_classes) {
    throw Error(ErrorCode::ProtocolViolation, "prediction " + std::to_string(out.prediction) + " outside " +
                                                  std::to_string(info.num_classes) + " classes");
  }
  return out;
}

OracleInfo MlpOracle::info() const {
  OracleInfo info;
  info.num_layers = model_.num_hidden();
  for (std::size_t l = 0; l < info.num_layers; ++l) info.hidden_sizes.push_back(model_.hidden_size(l));
  info.num_classes = model_.num_classes();
  info.modality = Modality::Vector;
  return info;
}

OracleOutput MlpOracle::query(const OracleInput& input, std::size_t layer, std::span<const std::size_t>) {
  const auto& x = std::get<std::vector<double>>(input);
  if (x.size() != model_.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(model_.input_size()) + " features, got " +
                                              std::to_string(x.size()));
  }
  auto fwd = forward(model_, x);
  return {std::move(fwd.hidden.at(layer)), fwd.predicted};
}

FixtureOracle::FixtureOracle(std::vector<Neuron> neurons, std::size_t num_classes, std::string mask_token,
                             Classifier classifier)
    : neurons_(std::move(neurons)),
      num_classes_(num_classes),
      mask_token_(std::move(mask_token)),
      classifier_(std::move(classifier)) {
  info().validate();
}

FixtureOracle FixtureOracle::keyword_presence(std::vector<std::string> keywords, std::size_t num_classes,
                                              std::string mask_token) {
  std::vector<Neuron> neurons;
  for (auto& kw : keywords) {
    neurons.emplace_back([kw = std::move(kw)](std::span<const std::string> tokens) {
      return std::find(tokens.begin(), tokens.end(), kw) != tokens.end() ? 1.0 : 0.0;
    });
  }
  return FixtureOracle(std::move(neurons), num_classes, std::move(mask_token));
}

OracleInfo FixtureOracle::info() const {
  OracleInfo info;
  info.num_layers = 1;
  info.hidden_sizes = {neurons_.size()};
  info.num_classes = num_classes_;
  info.mask_token = mask_token_;
  info.modality = Modality::Text;
  return info;
}

OracleOutput FixtureOracle::query(const OracleInput& input, std::size_t, std::span<const std::size_t> mask) {
  std::vector<std::string> tokens = std::get<std::vector<std::string>>(input);
  for (auto m : mask) tokens.at(m) = mask_token_;
  ++*queries_;
  OracleOutput out;
  out.activations.reserve(neurons_.size());
  for (const auto& n : neurons_) out.activations.push_back(n(tokens));
  out.prediction = classifier_ ? classifier_(tokens) : 0;
  return out;
}

}  // namespace neurules
