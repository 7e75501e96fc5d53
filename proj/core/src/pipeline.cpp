#include "neurules/pipeline.hpp"

#include <chrono>

#include "neurules/error.hpp"

namespace neurules {

std::vector<std::uint32_t> teacher_labels(const MlpModel& model, const LabeledDataset& ds, Teacher teacher) {
  if (teacher == Teacher::Labels) return ds.labels;
  std::vector<std::uint32_t> out(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) out[i] = forward(model, ds.row(i)).predicted;
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& config, const std::optional<LabeledDataset>& data) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  if (config.hidden.empty()) throw Error(ErrorCode::InvalidArgument, "pipeline needs >= 1 hidden layer");

  const LabeledDataset ds = data ? *data : generate_xor(config.n, config.seed);
  ds.validate();

  PipelineResult r;
  r.split = split_dataset(ds, config.test_fraction, config.seed + 1);

  MlpConfig mc;
  mc.layer_sizes.push_back(ds.d);
  mc.layer_sizes.insert(mc.layer_sizes.end(), config.hidden.begin(), config.hidden.end());
  mc.layer_sizes.push_back(ds.num_classes);
  mc.seed = config.seed + 2;
  mc.learning_rate = config.learning_rate;
  mc.epochs = config.epochs;
  mc.batch_size = config.batch_size;
  r.training = train_mlp(mc, r.split.train);
  const MlpModel& net = r.training.model;
  r.network_test_accuracy = accuracy(net, r.split.test);

  const int layer = config.layer < 0 ? static_cast<int>(config.hidden.size()) - 1 : config.layer;
  const LabeledDataset& source = config.collect_on_full ? ds : r.split.train;

  const auto extract_start = Clock::now();
  const ActivationDump dump = dump_activations(net, source, layer);
  r.predicates = mine_predicates(dump, config.top_k);
  const BitMatrix train_bits = evaluate_predicates(r.predicates, dump);
  r.model = distill(train_bits, teacher_labels(net, source, config.teacher), ds.num_classes, config.tree);
  r.model.predicates = r.predicates;
  const double extract_seconds = std::chrono::duration<double>(Clock::now() - extract_start).count();

  const ActivationDump test_dump = dump_activations(net, r.split.test, layer);
  const BitMatrix test_bits = evaluate_predicates(r.predicates, test_dump);
  r.metrics = score(r.model, test_bits, r.split.test.labels, *test_dump.predictions, extract_seconds);
  r.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return r;
}

}  // namespace neurules
