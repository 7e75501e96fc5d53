#include "neurules/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "neurules/error.hpp"
#include "neurules/format.hpp"
#include "neurules/rng.hpp"

namespace neurules {

using nlohmann::json;
using nlohmann::ordered_json;

void MlpConfig::validate() const {
  if (layer_sizes.size() < 3) throw Error(ErrorCode::InvalidArgument, "need input, >= 1 hidden and output layer sizes");
  for (auto s : layer_sizes) {
    if (s < 1) throw Error(ErrorCode::InvalidArgument, "layer sizes must be >= 1");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
  }
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
}

std::string MlpConfig::to_json() const {
  ordered_json j;
  j["layer_sizes"] = layer_sizes;
  j["activation"] = "relu";
  j["seed"] = seed;
  j["learning_rate"] = learning_rate;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  return j.dump(2);
}

namespace {

MlpConfig config_from(const json& j) {
  MlpConfig c;
  c.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  if (j.contains("activation") && j["activation"] != "relu") {
    throw Error(ErrorCode::InvalidArgument, "only the relu hidden activation is supported");
  }
  c.seed = j.value("seed", std::uint64_t{0});
  c.learning_rate = j.value("learning_rate", 0.05);
  c.epochs = j.value("epochs", std::size_t{200});
  c.batch_size = j.value("batch_size", std::size_t{32});
  c.validate();
  return c;
}

void init_layers(MlpModel& model, Pcg32& rng) {
  const auto& sizes = model.config.layer_sizes;
  model.layers.clear();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer;
    layer.in = sizes[l];
    layer.out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    layer.weights.resize(layer.in * layer.out);
    for (auto& w : layer.weights) w = rng.uniform(-limit, limit);
    layer.biases.assign(layer.out, 0.0);
    model.layers.push_back(std::move(layer));
  }
}

// Pre-activations for every layer (the last one being the logits).
struct Trace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;  // post[0] = input, post[l+1] = act(pre[l])
};

void affine(const DenseLayer& layer, std::span<const double> x, std::vector<double>& out) {
  out.assign(layer.biases.begin(), layer.biases.end());
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* w = layer.weights.data() + o * layer.in;
    double acc = out[o];
    for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * x[i];
    out[o] = acc;
  }
}

void run_forward(const MlpModel& model, std::span<const double> x, Trace& t) {
  const std::size_t L = model.layers.size();
  t.pre.resize(L);
  t.post.resize(L + 1);
  t.post[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < L; ++l) {
    affine(model.layers[l], t.post[l], t.pre[l]);
    t.post[l + 1] = t.pre[l];
    if (l + 1 < L) {
      for (auto& v : t.post[l + 1]) v = std::max(0.0, v);
    }
  }
}

std::uint32_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<std::uint32_t>(best);
}

std::vector<DenseLayer> zero_like(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> g;
  g.reserve(layers.size());
  for (const auto& l : layers) {
    DenseLayer z;
    z.in = l.in;
    z.out = l.out;
    z.weights.assign(l.weights.size(), 0.0);
    z.biases.assign(l.biases.size(), 0.0);
    g.push_back(std::move(z));
  }
  return g;
}

// Adds d(loss)/d(params) for one sample into grad and returns its loss.
double accumulate_sample(const MlpModel& model, std::span<const double> x, std::uint32_t label, Trace& t,
                         std::vector<DenseLayer>& grad) {
  run_forward(model, x, t);
  const std::size_t L = model.layers.size();
  std::vector<double> delta = softmax(t.pre[L - 1]);
  const double loss = -std::log(std::max(delta[label], 1e-300));
  delta[label] -= 1.0;

  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = model.layers[l];
    auto& g = grad[l];
    const auto& input = t.post[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      g.biases[o] += delta[o];
      double* gw = g.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) gw[i] += delta[o] * input[i];
    }
    if (l == 0) break;
    std::vector<double> prev(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) prev[i] += w[i] * delta[o];
    }
    const auto& pre = t.pre[l - 1];
    for (std::size_t i = 0; i < layer.in; ++i) {
      if (pre[i] <= 0.0) prev[i] = 0.0;
    }
    delta = std::move(prev);
  }
  return loss;
}

void check_dataset(const MlpModel& model, const LabeledDataset& ds) {
  if (ds.d != model.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "dataset has d=" + std::to_string(ds.d) + ", model expects " +
                                              std::to_string(model.input_size()));
  }
}

}  // namespace

MlpConfig MlpConfig::from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("MLP config: ") + e.what());
  }
}

void MlpModel::validate() const {
  if (layers.size() < 2) throw Error(ErrorCode::ShapeMismatch, "model needs >= 1 hidden layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.size() != layer.in * layer.out || layer.biases.size() != layer.out) {
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(l) + " parameter shapes");
    }
    if (l > 0 && layers[l - 1].out != layer.in) {
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(l) + " does not chain");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.biases.begin(), layer.biases.end(), finite)) {
      throw Error(ErrorCode::NonFiniteValue, "layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
}

std::string MlpModel::to_json() const {
  ordered_json j;
  j["config"] = ordered_json::parse(config.to_json());
  ordered_json arr = ordered_json::array();
  for (const auto& l : layers) {
    ordered_json lj;
    lj["in"] = l.in;
    lj["out"] = l.out;
    lj["weights"] = l.weights;
    lj["biases"] = l.biases;
    arr.push_back(std::move(lj));
  }
  j["layers"] = std::move(arr);
  return j.dump();
}

MlpModel MlpModel::from_json(const std::string& text) {
  MlpModel m;
  try {
    const json j = json::parse(text);
    m.config = config_from(j.at("config"));
    for (const auto& lj : j.at("layers")) {
      DenseLayer l;
      l.in = lj.at("in").get<std::size_t>();
      l.out = lj.at("out").get<std::size_t>();
      l.weights = lj.at("weights").get<std::vector<double>>();
      l.biases = lj.at("biases").get<std::vector<double>>();
      m.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("MLP model: ") + e.what());
  }
  m.validate();
  return m;
}

std::string TrainResult::loss_csv() const {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < loss_history.size(); ++e) {
    out += std::to_string(e) + "," + format_double(loss_history[e]) + "\n";
  }
  return out;
}

LabeledDataset generate_xor(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
  constexpr std::size_t d = 10;
  LabeledDataset ds;
  ds.n = n;
  ds.d = d;
  ds.num_classes = 2;
  for (std::size_t f = 0; f < d; ++f) ds.feature_names.push_back("x" + std::to_string(f + 1));
  ds.features.resize(n * d);
  ds.labels.resize(n);
  Pcg32 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < d; ++f) ds.features[i * d + f] = rng.next_double();
    const auto a = static_cast<unsigned>(std::round(ds.features[i * d + 0]));
    const auto b = static_cast<unsigned>(std::round(ds.features[i * d + 1]));
    ds.labels[i] = a ^ b;
  }
  return ds;
}

MlpModel init_mlp(const MlpConfig& config) {
  config.validate();
  MlpModel model;
  model.config = config;
  Pcg32 rng(config.seed);
  init_layers(model, rng);
  return model;
}

TrainResult train_mlp(const MlpConfig& config, const LabeledDataset& ds) {
  config.validate();
  TrainResult result;
  result.model.config = config;
  Pcg32 rng(config.seed);
  init_layers(result.model, rng);
  auto& model = result.model;

  check_dataset(model, ds);
  if (ds.num_classes != model.num_classes()) {
    throw Error(ErrorCode::ShapeMismatch, "dataset has " + std::to_string(ds.num_classes) + " classes, output layer " +
                                              std::to_string(model.num_classes()));
  }
  if (ds.n == 0) throw Error(ErrorCode::EmptyInput, "empty training set");

  std::vector<std::size_t> order(ds.n);
  std::iota(order.begin(), order.end(), 0);
  Trace trace;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < ds.n; start += config.batch_size) {
      const std::size_t stop = std::min(ds.n, start + config.batch_size);
      auto grad = zero_like(model.layers);
      for (std::size_t k = start; k < stop; ++k) {
        epoch_loss += accumulate_sample(model, ds.row(order[k]), ds.labels[order[k]], trace, grad);
      }
      const double step = config.learning_rate / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        for (std::size_t i = 0; i < layer.weights.size(); ++i) layer.weights[i] -= step * grad[l].weights[i];
        for (std::size_t i = 0; i < layer.biases.size(); ++i) layer.biases[i] -= step * grad[l].biases[i];
      }
    }
    epoch_loss /= static_cast<double>(ds.n);
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::NonFiniteLoss, "training diverged at epoch " + std::to_string(epoch));
    }
    result.loss_history.push_back(epoch_loss);
  }
  return result;
}

ForwardResult forward(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.input_size()) {
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(x.size()) + " features, model expects " +
                                              std::to_string(model.input_size()));
  }
  Trace t;
  run_forward(model, x, t);
  ForwardResult r;
  r.hidden.assign(t.post.begin() + 1, t.post.end() - 1);
  r.logits = std::move(t.pre.back());
  r.predicted = argmax_lowest(r.logits);
  return r;
}

ActivationDump dump_activations(const MlpModel& model, const LabeledDataset& ds, int layer) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= model.num_hidden()) {
    throw Error(ErrorCode::LayerOutOfRange, "layer " + std::to_string(layer) + " (model has " +
                                                std::to_string(model.num_hidden()) + " hidden layers)");
  }
  check_dataset(model, ds);
  ActivationDump dump;
  dump.layer = layer;
  dump.n = ds.n;
  dump.h = model.hidden_size(static_cast<std::size_t>(layer));
  dump.num_classes = static_cast<std::uint32_t>(model.num_classes());
  dump.values.resize(dump.n * dump.h);
  dump.labels = ds.labels;
  std::vector<std::uint32_t> pred(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) {
    const auto r = forward(model, ds.row(i));
    const auto& z = r.hidden[static_cast<std::size_t>(layer)];
    std::transform(z.begin(), z.end(), dump.values.begin() + static_cast<std::ptrdiff_t>(i * dump.h),
                   [](double v) { return static_cast<float>(v); });
    pred[i] = r.predicted;
  }
  dump.predictions = std::move(pred);
  return dump;
}

double accuracy(const MlpModel& model, const LabeledDataset& ds) {
  if (ds.n == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.n; ++i) hits += forward(model, ds.row(i)).predicted == ds.labels[i];
  return static_cast<double>(hits) / static_cast<double>(ds.n);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

LossGradient loss_and_gradient(const MlpModel& model, const LabeledDataset& ds, std::span<const std::size_t> rows) {
  check_dataset(model, ds);
  LossGradient out;
  out.grad = zero_like(model.layers);
  if (rows.empty()) return out;
  Trace t;
  for (auto r : rows) out.loss += accumulate_sample(model, ds.row(r), ds.labels[r], t, out.grad);
  const double inv = 1.0 / static_cast<double>(rows.size());
  out.loss *= inv;
  for (auto& g : out.grad) {
    for (auto& v : g.weights) v *= inv;
    for (auto& v : g.biases) v *= inv;
  }
  return out;
}

}  // namespace neurules
