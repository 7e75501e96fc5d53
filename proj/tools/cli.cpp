#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "neurules/activation_store.hpp"
#include "neurules/error.hpp"
#include "neurules/grounding_tabular.hpp"
#include "neurules/lexical.hpp"
#include "neurules/mlp.hpp"
#include "neurules/oracle.hpp"
#include "neurules/pipeline.hpp"
#include "neurules/predicates.hpp"
#include "neurules/protocol_client.hpp"
#include "neurules/report.hpp"
#include "neurules/rules.hpp"
#include "neurules/threads.hpp"

namespace neurules::cli {

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to `path`, or to `out` when the path is empty or "-".
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path);
  f << text;
  if (!f) throw Error(ErrorCode::Io, "write failed: " + path);
}

struct DataOptions {
  std::string path;
  std::string label_column = "y";
  std::uint32_t num_classes = 2;

  void add(CLI::App* cmd, bool required = true) {
    auto* o = cmd->add_option("--data", path, "Labeled CSV");
    if (required) o->required();
    cmd->add_option("--label-column", label_column, "Label column name")->capture_default_str();
    cmd->add_option("--num-classes", num_classes, "Number of classes")->capture_default_str()->check(CLI::PositiveNumber);
  }
  LabeledDataset load() const { return ingest_csv(path, label_column, num_classes); }
};

struct TreeOptions {
  TreeParams params;
  void add(CLI::App* cmd) {
    cmd->add_option("--max-depth", params.max_depth, "Tree depth limit")->capture_default_str();
    cmd->add_option("--min-samples-leaf", params.min_samples_leaf, "Minimum rows per leaf")->capture_default_str();
    cmd->add_option("--min-gain", params.min_gain, "Minimum Gini gain to split")->capture_default_str();
  }
};

const std::map<std::string, Teacher> kTeachers{{"network", Teacher::Network}, {"labels", Teacher::Labels}};

// Rows of `ds` selected by --split, reproducing the split used for training.
LabeledDataset select_split(const LabeledDataset& ds, const std::string& which, double test_fraction,
                            std::uint64_t seed) {
  if (which == "full" || test_fraction == 0.0) return ds;
  auto split = split_dataset(ds, test_fraction, seed + 1);
  return which == "test" ? split.test : split.train;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rule extraction from neural activations", "neurules"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string out_path;
  app.add_option("--threads", threads, "Worker threads (falls back to NEUROLOGIC_THREADS)");

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd->add_option("--out,-o", out_path, "Output path (default: standard output)");
    cmd->add_option("--threads", threads, "Worker threads");
  };

  // gen-xor
  std::size_t xor_n = 1000;
  auto* gen = app.add_subcommand("gen-xor", "Generate the 10-feature XOR dataset as CSV");
  add_common(gen);
  gen->add_option("--n", xor_n, "Rows")->capture_default_str()->check(CLI::PositiveNumber);

  // train-mlp
  DataOptions train_data;
  std::vector<std::size_t> hidden{64, 32};
  double lr = 0.05;
  std::size_t epochs = 200;
  std::size_t batch = 32;
  double test_fraction = 0.2;
  std::string loss_out;
  auto* train = app.add_subcommand("train-mlp", "Train a ReLU MLP on the training split");
  add_common(train);
  train_data.add(train);
  train->add_option("--hidden", hidden, "Hidden layer sizes")->delimiter(',')->capture_default_str();
  train->add_option("--lr", lr, "Learning rate")->capture_default_str();
  train->add_option("--epochs", epochs, "Epochs")->capture_default_str();
  train->add_option("--batch-size", batch, "Mini-batch size")->capture_default_str();
  train->add_option("--test-fraction", test_fraction, "Held-out fraction (0 = train on everything)")
      ->capture_default_str()->check(CLI::Range(0.0, 0.99));
  train->add_option("--loss-out", loss_out, "Per-epoch loss CSV");

  // dump-acts
  DataOptions dump_data;
  std::string model_path;
  int layer = -1;
  std::string split_name = "train";
  auto* dump = app.add_subcommand("dump-acts", "Write NLAD activations of one hidden layer");
  add_common(dump);
  dump_data.add(dump);
  dump->add_option("--model", model_path, "Model JSON from train-mlp")->required();
  dump->add_option("--layer", layer, "Hidden layer (0-based; -1 = last)")->capture_default_str();
  dump->add_option("--split", split_name, "Rows to dump")->check(CLI::IsMember({"train", "test", "full"}))->capture_default_str();
  dump->add_option("--test-fraction", test_fraction, "Split fraction used for training")->capture_default_str();

  // mine
  std::string acts_path;
  std::size_t top_k = 15;
  auto* mine = app.add_subcommand("mine", "Mine top-k purity predicates per class");
  add_common(mine);
  mine->add_option("--acts", acts_path, "NLAD activation dump")->required();
  mine->add_option("--top-k", top_k, "Predicates per class")->capture_default_str();

  // build-rules
  std::string preds_path;
  std::string teacher_name = "network";
  std::string mode = "distill";
  TreeOptions build_tree;
  auto* build = app.add_subcommand("build-rules", "Build a DNF rule model from predicates");
  add_common(build);
  build->add_option("--acts", acts_path, "NLAD activation dump")->required();
  build->add_option("--predicates", preds_path, "Predicate set JSON")->required();
  build->add_option("--teacher", teacher_name, "Distillation target")->check(CLI::IsMember({"network", "labels"}))->capture_default_str();
  build->add_option("--mode", mode, "distill (tree) or enumerate (one clause per distinct row)")
      ->check(CLI::IsMember({"distill", "enumerate"}))->capture_default_str();
  build_tree.add(build);

  // evaluate
  std::string rules_path;
  auto* eval = app.add_subcommand("evaluate", "Score a rule model on an activation dump");
  add_common(eval);
  eval->add_option("--rules", rules_path, "Rule model JSON")->required();
  eval->add_option("--acts", acts_path, "NLAD dump with predictions")->required();

  // ground-tabular
  DataOptions ground_data;
  std::size_t predicate_id = 0;
  std::string method = "synth";
  SynthesisParams synth;
  TreeOptions ground_tree;
  auto* gtab = app.add_subcommand("ground-tabular", "Ground one predicate in the input features");
  add_common(gtab);
  ground_data.add(gtab);
  gtab->add_option("--model", model_path, "Model JSON")->required();
  gtab->add_option("--predicates", preds_path, "Predicate set JSON")->required();
  gtab->add_option("--predicate", predicate_id, "Predicate id (column)")->required();
  gtab->add_option("--method", method, "synth or tree")->check(CLI::IsMember({"synth", "tree"}))->capture_default_str();
  gtab->add_option("--lambda", synth.lambda, "Size penalty")->capture_default_str();
  gtab->add_option("--max-size", synth.max_size, "Largest expression size")->capture_default_str();
  gtab->add_option("--beam-width", synth.beam_width, "Candidates kept per size")->capture_default_str();
  gtab->add_flag("--exhaustive", synth.exhaustive, "No pruning (max size <= 3)");
  ground_tree.add(gtab);

  // ground-lexical
  std::string corpus_path;
  std::string oracle_endpoint;
  std::uint32_t target_class = 0;
  LexicalParams lex;
  std::string flip_mode = "predicate";
  std::string hist_out;
  long timeout_ms = 30000;
  auto* glex = app.add_subcommand("ground-lexical", "Ground a class rule in keywords by token masking");
  add_common(glex);
  glex->add_option("--corpus", corpus_path, "Annotated corpus (JSON lines)")->required();
  glex->add_option("--rules", rules_path, "Rule model JSON with its predicate set")->required();
  glex->add_option("--class", target_class, "Class whose rule is grounded")->capture_default_str();
  glex->add_option("--oracle", oracle_endpoint,
                   "Shell command, tcp:HOST:PORT, or fixture:KW1,KW2,... (neuron j fires on keyword j)")
      ->required();
  glex->add_option("--alpha", lex.alpha, "Sentence-edge fraction")->capture_default_str();
  glex->add_option("--tau", lex.tau, "Minimum score")->capture_default_str();
  glex->add_option("--window", lex.window, "Subject/verb window")->capture_default_str();
  glex->add_option("--flip-mode", flip_mode, "predicate or class")->check(CLI::IsMember({"predicate", "class"}))->capture_default_str();
  glex->add_option("--max-in-flight", lex.max_in_flight, "Concurrent oracle queries")->capture_default_str();
  glex->add_option("--timeout-ms", timeout_ms, "Per-request oracle timeout")->capture_default_str();
  glex->add_option("--histograms", hist_out, "Position histogram CSV");
  std::string format_name = "json";
  glex->add_option("--format", format_name, "json, text or csv")->check(CLI::IsMember({"json", "text", "csv"}))->capture_default_str();

  // report
  std::vector<std::string> report_inputs;
  std::string report_format = "text";
  auto* rep = app.add_subcommand("report", "Render metrics, rule or grounding documents");
  add_common(rep);
  rep->add_option("inputs", report_inputs, "JSON documents")->required();
  rep->add_option("--format", report_format, "json, text or csv")->check(CLI::IsMember({"json", "text", "csv"}))->capture_default_str();

  // pipeline
  std::string dataset = "xor";
  DataOptions pipe_data;
  PipelineConfig pc;
  TreeOptions pipe_tree;
  auto* pipe = app.add_subcommand("pipeline", "Train, mine, distill and score in one run");
  add_common(pipe);
  pipe->add_option("--dataset", dataset, "xor or csv")->check(CLI::IsMember({"xor", "csv"}))->capture_default_str();
  pipe_data.add(pipe, false);
  pipe->add_option("--n", pc.n, "XOR rows")->capture_default_str();
  pipe->add_option("--hidden", pc.hidden, "Hidden layer sizes")->delimiter(',')->capture_default_str();
  pipe->add_option("--lr", pc.learning_rate, "Learning rate")->capture_default_str();
  pipe->add_option("--epochs", pc.epochs, "Epochs")->capture_default_str();
  pipe->add_option("--batch-size", pc.batch_size, "Mini-batch size")->capture_default_str();
  pipe->add_option("--test-fraction", pc.test_fraction, "Held-out fraction")->capture_default_str();
  pipe->add_option("--layer", pc.layer, "Hidden layer to mine (-1 = last)")->capture_default_str();
  pipe->add_option("--top-k", pc.top_k, "Predicates per class")->capture_default_str();
  pipe->add_option("--teacher", teacher_name, "Distillation target")->check(CLI::IsMember({"network", "labels"}))->capture_default_str();
  pipe->add_flag("--collect-on-full", pc.collect_on_full, "Mine on all rows instead of the training split");
  pipe->add_option("--format", format_name, "json, text or csv")->check(CLI::IsMember({"json", "text", "csv"}));
  std::string rules_out;
  pipe->add_option("--rules-out", rules_out, "Also write the rule model JSON");
  pipe_tree.add(pipe);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  try {
    if (threads > 0) set_thread_count(threads);
    if (*gen) {
      emit(out_path, format_csv(generate_xor(xor_n, seed)), out);
    } else if (*train) {
      const auto ds = train_data.load();
      const auto rows = select_split(ds, "train", test_fraction, seed);
      MlpConfig mc;
      mc.layer_sizes.push_back(ds.d);
      mc.layer_sizes.insert(mc.layer_sizes.end(), hidden.begin(), hidden.end());
      mc.layer_sizes.push_back(ds.num_classes);
      mc.seed = seed + 2;
      mc.learning_rate = lr;
      mc.epochs = epochs;
      mc.batch_size = batch;
      const auto result = train_mlp(mc, rows);
      emit(out_path, result.model.to_json(), out);
      if (!loss_out.empty()) emit(loss_out, result.loss_csv(), out);
    } else if (*dump) {
      const auto model = MlpModel::from_json(read_text(model_path));
      const auto rows = select_split(dump_data.load(), split_name, test_fraction, seed);
      const int l = layer < 0 ? static_cast<int>(model.num_hidden()) - 1 : layer;
      const auto acts = dump_activations(model, rows, l);
      if (out_path.empty() || out_path == "-") {
        out << encode_activation_dump(acts);
      } else {
        write_activation_dump(acts, out_path);
      }
    } else if (*mine) {
      emit(out_path, mine_predicates(read_activation_dump(acts_path), top_k).to_json(), out);
    } else if (*build) {
      const auto acts = read_activation_dump(acts_path);
      const auto pset = PredicateSet::from_json(read_text(preds_path));
      const auto bits = evaluate_predicates(pset, acts);
      RuleModel model;
      if (mode == "enumerate") {
        model.num_predicates = bits.cols;
        model.rules = enumerate_class_rules(pset, bits, acts.labels);
      } else {
        std::vector<std::uint32_t> teacher = acts.labels;
        if (kTeachers.at(teacher_name) == Teacher::Network) {
          if (!acts.predictions) throw Error(ErrorCode::InvalidArgument, "dump has no predictions; use --teacher labels");
          teacher = *acts.predictions;
        }
        model = distill(bits, teacher, acts.num_classes, build_tree.params);
      }
      model.predicates = pset;
      emit(out_path, model.to_json(), out);
    } else if (*eval) {
      const auto model = RuleModel::from_json(read_text(rules_path));
      if (!model.predicates) throw Error(ErrorCode::InvalidArgument, rules_path + " carries no predicate set");
      const auto acts = read_activation_dump(acts_path);
      if (!acts.predictions) throw Error(ErrorCode::InvalidArgument, acts_path + " has no network predictions");
      const auto bits = evaluate_predicates(*model.predicates, acts);
      emit(out_path, score(model, bits, acts.labels, *acts.predictions, 0.0).to_json(), out);
    } else if (*gtab) {
      const auto ds = ground_data.load();
      const auto model = MlpModel::from_json(read_text(model_path));
      const auto pset = PredicateSet::from_json(read_text(preds_path));
      const auto flat = pset.flat();
      if (predicate_id >= flat.size()) {
        throw Error(ErrorCode::InvalidArgument, "predicate " + std::to_string(predicate_id) + " of " +
                                                    std::to_string(flat.size()));
      }
      const auto acts = dump_activations(model, ds, pset.layer);
      std::vector<std::uint8_t> truth(ds.n);
      for (std::size_t i = 0; i < ds.n; ++i) truth[i] = flat[predicate_id].holds(acts.at(i, flat[predicate_id].neuron));
      const auto gd = build_grounding_dataset(ds, flat[predicate_id].target_class, truth, predicate_id);
      nlohmann::ordered_json j;
      j["predicate"] = predicate_id;
      j["class"] = gd.target_class;
      j["rows"] = gd.n;
      j["active"] = gd.num_active;
      if (method == "tree") {
        const auto g = ground_with_tree(gd, ground_tree.params);
        const auto expr = tree_to_expression(g.tree);
        j["method"] = "tree";
        j["agreement"] = g.agreement;
        j["expression"] = to_sexpr(*expr);
        j["math"] = to_math(*expr, ds.feature_names);
        j["tree"] = nlohmann::ordered_json::parse(g.tree.to_json());
      } else {
        const auto r = synthesize_expression(gd, synth);
        j["method"] = "synth";
        j["agreement"] = 1.0 - r.loss;
        j["objective"] = r.objective;
        j["size"] = r.expression->size();
        j["expression"] = to_sexpr(*r.expression);
        j["math"] = to_math(*r.expression, ds.feature_names);
        j["candidates"] = r.candidates;
        j["budget_exhausted"] = r.budget_exhausted;
      }
      emit(out_path, j.dump(2) + "\n", out);
    } else if (*glex) {
      const auto corpus = read_corpus(corpus_path);
      const auto model = RuleModel::from_json(read_text(rules_path));
      if (!model.predicates) throw Error(ErrorCode::InvalidArgument, rules_path + " carries no predicate set");
      if (target_class >= model.rules.size()) {
        throw Error(ErrorCode::InvalidArgument, "class " + std::to_string(target_class) + " has no rule");
      }
      lex.flip_mode = flip_mode == "class" ? FlipMode::Class : FlipMode::Predicate;
      std::unique_ptr<Oracle> oracle;
      if (oracle_endpoint.starts_with("fixture:")) {
        std::vector<std::string> kws;
        std::stringstream ss(oracle_endpoint.substr(8));
        for (std::string kw; std::getline(ss, kw, ',');) kws.push_back(kw);
        oracle = std::make_unique<FixtureOracle>(FixtureOracle::keyword_presence(kws, model.rules.size()));
      } else {
        ClientOptions opts;
        opts.timeout = std::chrono::milliseconds(timeout_ms);
        oracle = ProtocolClient::spawn(oracle_endpoint, opts);
      }
      const auto result = ground_class(corpus, *model.predicates, model.rules[target_class], *oracle, lex);
      emit(out_path, render_grounded(result, report_format_from_string(format_name)), out);
      if (!hist_out.empty()) emit(hist_out, result.histograms_csv(), out);
      if (result.partial) {
        err << "error: OracleFailure: " << result.error << " (partial results written)\n";
        return 1;
      }
    } else if (*rep) {
      std::string text;
      for (const auto& in : report_inputs) text += render_file(in, report_format_from_string(report_format));
      emit(out_path, text, out);
    } else if (*pipe) {
      pc.seed = seed;
      pc.teacher = kTeachers.at(teacher_name);
      pc.tree = pipe_tree.params;
      std::optional<LabeledDataset> data;
      if (dataset == "csv") {
        if (pipe_data.path.empty()) throw Error(ErrorCode::InvalidArgument, "--dataset csv needs --data");
        data = pipe_data.load();
      }
      const auto r = run_pipeline(pc, data);
      const std::string label = dataset + " (seed " + std::to_string(seed) + ")";
      const auto format = pipe->count("--format") > 0 ? report_format_from_string(format_name) : ReportFormat::Text;
      emit(out_path, render_metrics({{label, r.metrics}}, format), out);
      if (!rules_out.empty()) emit(rules_out, r.model.to_json(), out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace neurules::cli
