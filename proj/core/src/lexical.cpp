#include "neurules/lexical.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <mutex>
#include <set>

#include "json.hpp"
#include "neurules/error.hpp"
#include "neurules/format.hpp"
#include "neurules/threads.hpp"

namespace neurules {

using nlohmann::ordered_json;

namespace {

constexpr std::array<std::pair<TemplateType, std::string_view>, 8> kTemplateNames{{
    {TemplateType::IsHashtag, "is_hashtag"},
    {TemplateType::AtStart, "at_start"},
    {TemplateType::AtEnd, "at_end"},
    {TemplateType::BeforeSubject, "before_subject"},
    {TemplateType::AfterSubject, "after_subject"},
    {TemplateType::BeforeVerb, "before_verb"},
    {TemplateType::AfterVerb, "after_verb"},
    {TemplateType::Exists, "exists"},
}};

}  // namespace

std::string_view to_string(TemplateType t) {
  for (const auto& [type, name] : kTemplateNames) {
    if (type == t) return name;
  }
  return "exists";
}

TemplateType template_from_string(std::string_view s) {
  for (const auto& [type, name] : kTemplateNames) {
    if (name == s) return type;
  }
  throw Error(ErrorCode::ParseError, "unknown template '" + std::string(s) + "'");
}

void LexicalParams::validate() const {
  if (!(alpha > 0.0 && alpha < 0.5)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 0.5)");
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "window must be >= 1");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw Error(ErrorCode::InvalidArgument, "tau must be >= 0");
}

std::string normalize_keyword(std::string_view token, bool lowercase) {
  std::string out;
  out.reserve(token.size());
  for (std::size_t i = 0; i < token.size(); ++i) {
    const char c = token[i];
    if (c == '#' && i > 0) continue;
    out.push_back(lowercase ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : c);
  }
  return out;
}

std::map<std::string, std::size_t> document_frequencies(std::span<const AnnotatedExample> corpus, bool lowercase) {
  std::map<std::string, std::size_t> df;
  for (const auto& ex : corpus) {
    std::set<std::string> seen;
    for (const auto& t : ex.tokens) seen.insert(normalize_keyword(t, lowercase));
    for (const auto& w : seen) ++df[w];
  }
  return df;
}

double idf_from_counts(std::size_t num_docs, std::size_t df) {
  return std::log(static_cast<double>(num_docs + 1) / static_cast<double>(df + 1));
}

double idf(std::string_view word, std::span<const AnnotatedExample> corpus, bool lowercase) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "idf needs a nonempty corpus");
  const std::string w = normalize_keyword(word, lowercase);
  std::size_t df = 0;
  for (const auto& ex : corpus) {
    df += std::any_of(ex.tokens.begin(), ex.tokens.end(),
                      [&](const std::string& t) { return normalize_keyword(t, lowercase) == w; });
  }
  return idf_from_counts(corpus.size(), df);
}

TemplateType assign_template(std::size_t index, const AnnotatedExample& example, const LexicalParams& params) {
  const auto sentence = example.sentence_of(index);
  if (!sentence) {
    throw Error(ErrorCode::IndexOutsideSentence, example.doc_id + ": token " + std::to_string(index) +
                                                     " is not inside any sentence");
  }
  if (example.tokens[index].starts_with('#')) return TemplateType::IsHashtag;

  const auto [begin, end] = example.sentences[*sentence];
  const std::size_t len = end - begin;
  const std::size_t pos = index - begin;
  // The epsilon keeps exact products such as 0.2 * 10 from rounding up.
  const auto edge = static_cast<std::size_t>(std::ceil(params.alpha * static_cast<double>(len) - 1e-9));
  if (pos < edge) return TemplateType::AtStart;
  if (pos + edge >= len) return TemplateType::AtEnd;

  auto near = [&](const std::vector<std::optional<std::size_t>>& anchors, TemplateType before,
                  TemplateType after) -> std::optional<TemplateType> {
    if (*sentence >= anchors.size() || !anchors[*sentence]) return std::nullopt;
    const std::size_t a = *anchors[*sentence];
    if (a == index) return std::nullopt;
    const std::size_t dist = index < a ? a - index : index - a;
    if (dist > params.window) return std::nullopt;
    return index < a ? before : after;
  };
  if (auto t = near(example.subject_index, TemplateType::BeforeSubject, TemplateType::AfterSubject)) return *t;
  if (auto t = near(example.verb_index, TemplateType::BeforeVerb, TemplateType::AfterVerb)) return *t;
  return TemplateType::Exists;
}

namespace {

OracleOutput checked_query(Oracle& oracle, const AnnotatedExample& example, std::size_t layer,
                           std::span<const std::size_t> mask) {
  try {
    return query_activations(oracle, OracleInput{example.tokens}, layer, mask);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::OracleFailure) throw;
    throw Error(ErrorCode::OracleFailure, example.doc_id + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::OracleFailure, example.doc_id + ": " + e.what());
  }
}

std::vector<std::uint8_t> truth_values(Oracle& oracle, const AnnotatedExample& example, const PredicateSet& pset,
                                       std::span<const std::size_t> mask) {
  const auto out = checked_query(oracle, example, static_cast<std::size_t>(pset.layer), mask);
  return evaluate_predicates(pset, std::span<const double>(out.activations));
}

}  // namespace

bool causal_test(Oracle& oracle, const AnnotatedExample& example, std::size_t index, const PredicateSet& pset,
                 std::span<const std::size_t> tracked, std::span<const std::uint8_t> baseline) {
  if (index >= example.tokens.size()) {
    throw Error(ErrorCode::InvalidArgument, "token index " + std::to_string(index) + " outside the example");
  }
  std::vector<std::uint8_t> computed;
  if (baseline.empty()) {
    computed = truth_values(oracle, example, pset, {});
    baseline = computed;
  }
  for (auto p : tracked) {
    if (p >= baseline.size()) throw Error(ErrorCode::InvalidArgument, "predicate column " + std::to_string(p) + " out of range");
    if (!baseline[p]) {
      throw Error(ErrorCode::PredicateNotActive, example.doc_id + ": p" + std::to_string(p) + " is false before masking");
    }
  }
  const std::size_t mask[1] = {index};
  const auto masked = truth_values(oracle, example, pset, mask);
  return std::any_of(tracked.begin(), tracked.end(), [&](std::size_t p) { return !masked[p]; });
}

namespace {

struct PairCounts {
  std::size_t flips = 0;
  std::size_t total = 0;
  std::set<std::size_t> clauses;
};

struct ExampleOutcome {
  bool tested = false;
  bool failed = false;
  std::string error;
  std::map<AtomicAbstractionLex, PairCounts> counts;
  std::map<std::string, std::array<std::size_t, 10>> histograms;
};

ExampleOutcome ground_example(const AnnotatedExample& ex, const PredicateSet& pset, const DnfRule& rule,
                              Oracle& oracle, const LexicalParams& params) {
  ExampleOutcome out;
  const auto baseline = truth_values(oracle, ex, pset, {});
  const auto top = rule.top_active_clause(baseline);
  if (!top) return out;
  std::vector<std::size_t> tracked;
  for (const auto& lit : rule.clauses[*top].literals) {
    if (lit.positive) tracked.push_back(lit.predicate);
  }
  if (params.flip_mode == FlipMode::Predicate && tracked.empty()) return out;
  out.tested = true;

  for (std::size_t s = 0; s < ex.sentences.size(); ++s) {
    const auto [begin, end] = ex.sentences[s];
    for (std::size_t i = begin; i < end; ++i) {
      const std::string kw = normalize_keyword(ex.tokens[i], params.lowercase_normalize);
      if (kw.empty()) continue;
      bool flipped = false;
      if (params.flip_mode == FlipMode::Predicate) {
        flipped = causal_test(oracle, ex, i, pset, tracked, baseline);
      } else {
        const std::size_t mask[1] = {i};
        flipped = !rule.satisfied_by(truth_values(oracle, ex, pset, mask));
      }
      const TemplateType positional = assign_template(i, ex, params);
      auto record = [&](TemplateType t) {
        auto& c = out.counts[{kw, t}];
        ++c.total;
        if (flipped) {
          ++c.flips;
          c.clauses.insert(*top);
        }
      };
      record(positional);
      if (positional != TemplateType::Exists) record(TemplateType::Exists);
      if (flipped) {
        const std::size_t bucket = std::min<std::size_t>(9, 10 * (i - begin) / (end - begin));
        auto& h = out.histograms[kw];
        ++h[bucket];
      }
    }
  }
  return out;
}

}  // namespace

LexicalResult ground_class(std::span<const AnnotatedExample> corpus, const PredicateSet& pset, const DnfRule& rule,
                           Oracle& oracle, const LexicalParams& params) {
  params.validate();
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "lexical grounding needs a nonempty corpus");
  for (const auto& ex : corpus) ex.validate();
  if (pset.layer < 0) throw Error(ErrorCode::LayerOutOfRange, "negative predicate layer");

  std::vector<ExampleOutcome> outcomes(corpus.size());
  std::atomic<bool> abort{false};
  parallel_for(
      corpus.size(),
      [&](std::size_t e) {
        if (abort.load()) return;
        try {
          outcomes[e] = ground_example(corpus[e], pset, rule, oracle, params);
        } catch (const Error& err) {
          if (err.code() != ErrorCode::OracleFailure) throw;
          outcomes[e] = ExampleOutcome{};
          outcomes[e].failed = true;
          outcomes[e].error = err.what();
          abort.store(true);
        }
      },
      params.max_in_flight);

  LexicalResult result;
  std::map<AtomicAbstractionLex, PairCounts> merged;
  for (auto& o : outcomes) {
    if (o.failed) {
      if (!result.partial) result.error = o.error;
      result.partial = true;
      continue;
    }
    if (!o.tested) {
      ++result.examples_skipped;
      continue;
    }
    ++result.examples_tested;
    for (auto& [key, c] : o.counts) {
      auto& m = merged[key];
      m.flips += c.flips;
      m.total += c.total;
      m.clauses.insert(c.clauses.begin(), c.clauses.end());
    }
    for (auto& [kw, h] : o.histograms) {
      auto& m = result.position_histograms[kw];
      for (std::size_t b = 0; b < 10; ++b) m[b] += h[b];
    }
  }

  const auto df = document_frequencies(corpus, params.lowercase_normalize);
  for (auto& [key, c] : merged) {
    if (c.flips == 0) continue;
    GroundedRule r;
    r.abstraction = key;
    r.flips = c.flips;
    r.total = c.total;
    r.flip_rate = static_cast<double>(c.flips) / static_cast<double>(c.total);
    const auto it = df.find(key.keyword);
    r.idf = idf_from_counts(corpus.size(), it == df.end() ? 0 : it->second);
    r.score = r.idf * r.flip_rate;
    if (r.score < params.tau) continue;
    r.target_class = rule.target_class;
    r.clauses.assign(c.clauses.begin(), c.clauses.end());
    result.rules.push_back(std::move(r));
  }
  std::sort(result.rules.begin(), result.rules.end(), [](const GroundedRule& a, const GroundedRule& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.flips != b.flips) return a.flips > b.flips;
    if (a.abstraction.keyword != b.abstraction.keyword) return a.abstraction.keyword < b.abstraction.keyword;
    return a.abstraction.template_type < b.abstraction.template_type;
  });
  // Histograms are kept only for keywords that survived the filter.
  std::set<std::string> kept;
  for (const auto& r : result.rules) kept.insert(r.abstraction.keyword);
  std::erase_if(result.position_histograms, [&](const auto& kv) { return !kept.contains(kv.first); });
  return result;
}

std::string LexicalResult::to_json() const {
  ordered_json j;
  ordered_json arr = ordered_json::array();
  for (const auto& r : rules) {
    ordered_json o;
    o["keyword"] = r.abstraction.keyword;
    o["template"] = std::string(to_string(r.abstraction.template_type));
    o["flips"] = r.flips;
    o["total"] = r.total;
    o["flip_rate"] = r.flip_rate;
    o["idf"] = r.idf;
    o["score"] = r.score;
    o["class"] = r.target_class;
    o["clauses"] = r.clauses;
    arr.push_back(std::move(o));
  }
  j["rules"] = std::move(arr);
  ordered_json hist = ordered_json::object();
  for (const auto& [kw, h] : position_histograms) hist[kw] = h;
  j["position_histograms"] = std::move(hist);
  j["examples_tested"] = examples_tested;
  j["examples_skipped"] = examples_skipped;
  j["partial"] = partial;
  if (partial) j["error"] = error;
  return j.dump(2) + "\n";
}

LexicalResult LexicalResult::from_json(const std::string& text) {
  try {
    const auto j = ordered_json::parse(text);
    LexicalResult r;
    for (const auto& o : j.at("rules")) {
      GroundedRule g;
      g.abstraction.keyword = o.at("keyword").get<std::string>();
      g.abstraction.template_type = template_from_string(o.at("template").get<std::string>());
      g.flips = o.at("flips").get<std::size_t>();
      g.total = o.at("total").get<std::size_t>();
      g.flip_rate = o.at("flip_rate").get<double>();
      g.idf = o.at("idf").get<double>();
      g.score = o.at("score").get<double>();
      g.target_class = o.at("class").get<std::uint32_t>();
      g.clauses = o.value("clauses", std::vector<std::size_t>{});
      if (g.flips > g.total) throw Error(ErrorCode::InvariantViolation, "flips exceed total for " + g.abstraction.keyword);
      r.rules.push_back(std::move(g));
    }
    if (j.contains("position_histograms")) {
      for (const auto& [kw, h] : j.at("position_histograms").items()) {
        r.position_histograms[kw] = h.get<std::array<std::size_t, 10>>();
      }
    }
    r.examples_tested = j.value("examples_tested", std::size_t{0});
    r.examples_skipped = j.value("examples_skipped", std::size_t{0});
    r.partial = j.value("partial", false);
    r.error = j.value("error", std::string{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("grounded rules: ") + e.what());
  }
}

std::string LexicalResult::to_table() const {
  const std::vector<std::string> head{"Keyword", "Template", "Flips", "Total", "Rate", "Score"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rules) {
    rows.push_back({r.abstraction.keyword, std::string(to_string(r.abstraction.template_type)), std::to_string(r.flips),
                    std::to_string(r.total), format_fixed(r.flip_rate, 3), format_fixed(r.score, 3)});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out += " | ";
      const std::string pad(width[c] - cells[c].size(), ' ');
      out += c < 2 ? cells[c] + pad : pad + cells[c];  // text left, numbers right
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(head);
  for (std::size_t c = 0; c < head.size(); ++c) {
    if (c > 0) out += "-|-";
    out += std::string(width[c], '-');
  }
  out += "\n";
  for (const auto& row : rows) out += line(row);
  return out;
}

std::string LexicalResult::histograms_csv() const {
  std::string out = "keyword";
  for (int b = 0; b < 10; ++b) out += ",b" + std::to_string(b);
  out += "\n";
  for (const auto& [kw, h] : position_histograms) {
    if (kw.find_first_of(",\"\n") == std::string::npos) {
      out += kw;
    } else {
      out += '"';
      for (char c : kw) out += c == '"' ? std::string("\"\"") : std::string(1, c);
      out += '"';
    }
    for (auto v : h) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

}  // namespace neurules
