#include "neurules/rules.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "json.hpp"
#include "neurules/error.hpp"

namespace neurules {

using nlohmann::json;
using nlohmann::ordered_json;

bool Clause::satisfied_by(std::span<const std::uint8_t> bits) const {
  for (const auto& l : literals) {
    if ((bits[l.predicate] != 0) != l.positive) return false;
  }
  return true;
}

std::string Clause::render() const {
  if (literals.empty()) return "(⊤)";
  std::string out = "(";
  for (std::size_t i = 0; i < literals.size(); ++i) {
    if (i > 0) out += " ∧ ";
    if (!literals[i].positive) out += "¬";
    out += "p" + std::to_string(literals[i].predicate);
  }
  return out + ")";
}

bool DnfRule::satisfied_by(std::span<const std::uint8_t> bits) const {
  return std::any_of(clauses.begin(), clauses.end(), [&](const Clause& c) { return c.satisfied_by(bits); });
}

std::optional<std::size_t> DnfRule::top_active_clause(std::span<const std::uint8_t> bits) const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (clauses[i].satisfied_by(bits) && (!best || clauses[i].support > clauses[*best].support)) best = i;
  }
  return best;
}

std::string DnfRule::render() const {
  std::string out;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i > 0) out += " ∨ ";
    out += clauses[i].render();
  }
  if (clauses.empty()) out = "⊥";
  return out + " ⇒ class " + std::to_string(target_class);
}

DnfRule enumerate_clauses(const BitMatrix& rows, std::uint32_t target_class, std::span<const std::size_t> column_ids) {
  if (!column_ids.empty() && column_ids.size() != rows.cols) {
    throw Error(ErrorCode::LengthMismatch, "column ids vs matrix width");
  }
  std::map<std::vector<std::uint8_t>, std::size_t> counts;
  for (std::size_t i = 0; i < rows.rows; ++i) {
    const auto r = rows.row(i);
    ++counts[std::vector<std::uint8_t>(r.begin(), r.end())];
  }
  // std::map iterates in lexicographic order; a stable sort on support keeps it for ties.
  std::vector<std::pair<std::vector<std::uint8_t>, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  DnfRule rule;
  rule.target_class = target_class;
  for (const auto& [pattern, support] : ordered) {
    Clause clause;
    clause.source = ClauseSource::Enumerated;
    clause.support = support;
    for (std::size_t j = 0; j < pattern.size(); ++j) {
      clause.literals.push_back({column_ids.empty() ? j : column_ids[j], pattern[j] != 0});
    }
    rule.clauses.push_back(std::move(clause));
  }
  return rule;
}

std::vector<DnfRule> enumerate_class_rules(const PredicateSet& pset, const BitMatrix& bits,
                                           std::span<const std::uint32_t> labels) {
  if (labels.size() != bits.rows) throw Error(ErrorCode::LengthMismatch, "labels vs predicate rows");
  if (bits.cols != pset.size()) throw Error(ErrorCode::LengthMismatch, "predicate matrix width vs predicate set");
  std::vector<DnfRule> rules;
  for (const auto& cp : pset.classes) {
    const auto [first, count] = pset.columns_of(cp.target_class);
    BitMatrix sub;
    sub.cols = count;
    for (std::size_t i = 0; i < bits.rows; ++i) {
      if (labels[i] != cp.target_class) continue;
      const auto r = bits.row(i);
      sub.bits.insert(sub.bits.end(), r.begin() + static_cast<std::ptrdiff_t>(first),
                      r.begin() + static_cast<std::ptrdiff_t>(first + count));
      ++sub.rows;
    }
    std::vector<std::size_t> ids(count);
    std::iota(ids.begin(), ids.end(), first);
    rules.push_back(enumerate_clauses(sub, cp.target_class, ids));
  }
  return rules;
}

// ---------------------------------------------------------------------------

std::size_t RuleModel::num_clauses() const {
  std::size_t total = 0;
  for (const auto& r : rules) total += r.clauses.size();
  return total;
}

double RuleModel::avg_clause_length() const {
  std::size_t clauses = 0;
  std::size_t literals = 0;
  for (const auto& r : rules) {
    for (const auto& c : r.clauses) {
      ++clauses;
      literals += c.literals.size();
    }
  }
  return clauses == 0 ? 0.0 : static_cast<double>(literals) / static_cast<double>(clauses);
}

RuleModel distill(const BitMatrix& bits, std::span<const std::uint32_t> teacher, std::uint32_t num_classes,
                  const TreeParams& params) {
  if (bits.rows == 0) throw Error(ErrorCode::EmptyInput, "no rows to distill");
  if (teacher.size() != bits.rows) throw Error(ErrorCode::LengthMismatch, "teacher labels vs rows");
  // A zero-width matrix still distills to a single universal clause.
  const std::size_t width = std::max<std::size_t>(bits.cols, 1);
  std::vector<double> features(bits.rows * width, 0.0);
  for (std::size_t i = 0; i < bits.rows; ++i) {
    for (std::size_t j = 0; j < bits.cols; ++j) features[i * width + j] = bits.at(i, j);
  }

  RuleModel model;
  model.num_predicates = bits.cols;
  model.tree = fit_tree(FeatureView{features, bits.rows, width}, teacher, num_classes, params);

  std::vector<std::size_t> counts(num_classes, 0);
  for (auto t : teacher) ++counts[t];
  model.default_class = static_cast<std::uint32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());

  model.rules.resize(num_classes);
  for (std::uint32_t c = 0; c < num_classes; ++c) model.rules[c].target_class = c;
  for (const auto& path : extract_paths(model.tree)) {
    Clause clause;
    clause.source = ClauseSource::Distilled;
    clause.support = std::accumulate(path.counts.begin(), path.counts.end(), std::size_t{0});
    for (const auto& lit : path.literals) clause.literals.push_back({lit.feature, lit.cmp == Comparison::Greater});
    model.rules[path.label].clauses.push_back(std::move(clause));
  }
  return model;
}

std::uint32_t rule_predict(const RuleModel& model, std::span<const std::uint8_t> bits) {
  if (bits.size() != model.num_predicates) {
    throw Error(ErrorCode::LengthMismatch, "row has " + std::to_string(bits.size()) + " predicates, model expects " +
                                               std::to_string(model.num_predicates));
  }
  for (const auto& rule : model.rules) {
    for (const auto& clause : rule.clauses) {
      if (clause.satisfied_by(bits)) return rule.target_class;
    }
  }
  return model.default_class;
}

Metrics score(const RuleModel& model, const BitMatrix& bits, std::span<const std::uint32_t> truth,
              std::span<const std::uint32_t> teacher, double runtime_seconds) {
  if (truth.size() != bits.rows || teacher.size() != bits.rows) {
    throw Error(ErrorCode::LengthMismatch, "labels vs predicate rows");
  }
  Metrics m;
  std::size_t right = 0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < bits.rows; ++i) {
    const auto p = rule_predict(model, bits.row(i));
    right += p == truth[i];
    agree += p == teacher[i];
  }
  const double n = static_cast<double>(std::max<std::size_t>(bits.rows, 1));
  m.accuracy = static_cast<double>(right) / n;
  m.fidelity = static_cast<double>(agree) / n;
  m.runtime_seconds = runtime_seconds;
  m.num_clauses = model.num_clauses();
  m.avg_clause_length = model.avg_clause_length();
  return m;
}

// ---------------------------------------------------------------------------

std::string Metrics::to_json() const {
  ordered_json j;
  j["accuracy"] = accuracy;
  j["fidelity"] = fidelity;
  j["runtime_seconds"] = runtime_seconds;
  j["num_clauses"] = num_clauses;
  j["avg_clause_length"] = avg_clause_length;
  return j.dump(2);
}

Metrics Metrics::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Metrics m;
    m.accuracy = j.at("accuracy").get<double>();
    m.fidelity = j.at("fidelity").get<double>();
    m.runtime_seconds = j.at("runtime_seconds").get<double>();
    m.num_clauses = j.at("num_clauses").get<std::size_t>();
    m.avg_clause_length = j.at("avg_clause_length").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("metrics: ") + e.what());
  }
}

std::string RuleModel::to_json() const {
  ordered_json j;
  j["num_predicates"] = num_predicates;
  j["default_class"] = default_class;
  if (predicates) {
    ordered_json by_id = ordered_json::array();
    const auto flat = predicates->flat();
    for (std::size_t id = 0; id < flat.size(); ++id) {
      ordered_json pj;
      pj["id"] = id;
      pj["class"] = flat[id].target_class;
      pj["layer"] = flat[id].layer;
      pj["neuron"] = flat[id].neuron;
      pj["threshold"] = static_cast<double>(flat[id].threshold);
      pj["purity"] = flat[id].purity;
      by_id.push_back(std::move(pj));
    }
    j["predicates"] = std::move(by_id);
    j["predicate_set"] = ordered_json::parse(predicates->to_json());
  }
  j["tree"] = ordered_json::parse(tree.to_json());
  ordered_json rj = ordered_json::array();
  for (const auto& rule : rules) {
    ordered_json r;
    r["class"] = rule.target_class;
    ordered_json clauses = ordered_json::array();
    for (const auto& c : rule.clauses) {
      ordered_json cj;
      ordered_json lits = ordered_json::array();
      for (const auto& l : c.literals) lits.push_back({{"predicate", l.predicate}, {"positive", l.positive}});
      cj["literals"] = std::move(lits);
      cj["support"] = c.support;
      cj["source"] = c.source == ClauseSource::Distilled ? "distilled" : "enumerated";
      cj["text"] = c.render();
      clauses.push_back(std::move(cj));
    }
    r["clauses"] = std::move(clauses);
    r["text"] = rule.render();
    rj.push_back(std::move(r));
  }
  j["rules"] = std::move(rj);
  return j.dump(2);
}

RuleModel RuleModel::from_json(const std::string& text) {
  RuleModel m;
  try {
    const json j = json::parse(text);
    m.num_predicates = j.at("num_predicates").get<std::size_t>();
    m.default_class = j.at("default_class").get<std::uint32_t>();
    if (j.contains("predicate_set")) m.predicates = PredicateSet::from_json(j["predicate_set"].dump());
    // Enumerated models carry no tree.
    const auto& tj = j.at("tree");
    if (!tj.at("nodes").empty()) {
      m.tree = DecisionTree::from_json(tj.dump());
    } else {
      m.tree.num_classes = tj.value("num_classes", 0u);
    }
    for (const auto& rj : j.at("rules")) {
      DnfRule rule;
      rule.target_class = rj.at("class").get<std::uint32_t>();
      for (const auto& cj : rj.at("clauses")) {
        Clause c;
        for (const auto& lj : cj.at("literals")) {
          c.literals.push_back({lj.at("predicate").get<std::size_t>(), lj.at("positive").get<bool>()});
        }
        c.support = cj.value("support", std::size_t{0});
        c.source = cj.value("source", std::string("distilled")) == "enumerated" ? ClauseSource::Enumerated
                                                                                : ClauseSource::Distilled;
        rule.clauses.push_back(std::move(c));
      }
      m.rules.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("rule model: ") + e.what());
  }
  return m;
}

}  // namespace neurules
