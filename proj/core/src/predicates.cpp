#include "neurules/predicates.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "neurules/error.hpp"
#include "neurules/threads.hpp"

namespace neurules {

using nlohmann::json;
using nlohmann::ordered_json;

void Predicate::validate() const {
  if (!std::isfinite(threshold)) throw Error(ErrorCode::InvariantViolation, "predicate threshold must be finite");
  if (!(purity >= 1.0 && purity <= 2.0)) throw Error(ErrorCode::InvariantViolation, "purity outside [1, 2]");
  if (support < 1) throw Error(ErrorCode::InvariantViolation, "predicate support must be >= 1");
}

std::vector<Predicate> PredicateSet::flat() const {
  std::vector<Predicate> out;
  for (const auto& c : classes) out.insert(out.end(), c.predicates.begin(), c.predicates.end());
  return out;
}

std::size_t PredicateSet::size() const {
  std::size_t m = 0;
  for (const auto& c : classes) m += c.predicates.size();
  return m;
}

std::pair<std::size_t, std::size_t> PredicateSet::columns_of(std::uint32_t cls) const {
  std::size_t first = 0;
  for (const auto& c : classes) {
    if (c.target_class == cls) return {first, c.predicates.size()};
    first += c.predicates.size();
  }
  throw Error(ErrorCode::InvalidArgument, "no predicates for class " + std::to_string(cls));
}

double PredicateSet::mean_purity() const {
  double sum = 0.0;
  std::size_t m = 0;
  for (const auto& c : classes) {
    for (const auto& p : c.predicates) {
      sum += p.purity;
      ++m;
    }
  }
  return m == 0 ? 0.0 : sum / static_cast<double>(m);
}

void PredicateSet::validate() const {
  for (const auto& c : classes) {
    if (c.predicates.size() > k) throw Error(ErrorCode::InvariantViolation, "more than k predicates for a class");
    std::vector<std::size_t> neurons;
    for (std::size_t r = 0; r < c.predicates.size(); ++r) {
      const auto& p = c.predicates[r];
      p.validate();
      if (p.layer != layer) throw Error(ErrorCode::LayerMismatch, "predicate layer differs from set layer");
      if (p.target_class != c.target_class) throw Error(ErrorCode::InvariantViolation, "predicate class mismatch");
      if (r > 0 && p.purity > c.predicates[r - 1].purity) {
        throw Error(ErrorCode::InvariantViolation, "predicates must be in non-increasing purity order");
      }
      neurons.push_back(p.neuron);
    }
    std::sort(neurons.begin(), neurons.end());
    if (std::adjacent_find(neurons.begin(), neurons.end()) != neurons.end()) {
      throw Error(ErrorCode::InvariantViolation, "duplicate neuron within a class");
    }
  }
}

std::string PredicateSet::to_json() const {
  ordered_json j;
  j["layer"] = layer;
  j["k"] = k;
  j["k_clipped"] = k_clipped;
  ordered_json cls = ordered_json::array();
  for (const auto& c : classes) {
    ordered_json cj;
    cj["class"] = c.target_class;
    ordered_json preds = ordered_json::array();
    for (const auto& p : c.predicates) {
      ordered_json pj;
      pj["neuron"] = p.neuron;
      pj["threshold"] = static_cast<double>(p.threshold);
      pj["purity"] = p.purity;
      pj["support"] = p.support;
      preds.push_back(std::move(pj));
    }
    cj["predicates"] = std::move(preds);
    cls.push_back(std::move(cj));
  }
  j["classes"] = std::move(cls);
  return j.dump(2);
}

PredicateSet PredicateSet::from_json(const std::string& text) {
  PredicateSet set;
  try {
    const json j = json::parse(text);
    set.layer = j.at("layer").get<int>();
    set.k = j.at("k").get<std::size_t>();
    set.k_clipped = j.value("k_clipped", false);
    for (const auto& cj : j.at("classes")) {
      ClassPredicates c;
      c.target_class = cj.at("class").get<std::uint32_t>();
      for (const auto& pj : cj.at("predicates")) {
        Predicate p;
        p.layer = set.layer;
        p.target_class = c.target_class;
        p.neuron = pj.at("neuron").get<std::size_t>();
        // JSON has no infinity; null or a string sentinel lands here as a type error.
        if (!pj.at("threshold").is_number()) throw Error(ErrorCode::InvariantViolation, "non-numeric threshold");
        p.threshold = static_cast<float>(pj.at("threshold").get<double>());
        p.purity = pj.at("purity").get<double>();
        p.support = pj.at("support").get<std::size_t>();
        c.predicates.push_back(p);
      }
      set.classes.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("predicate set: ") + e.what());
  }
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------

namespace {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Evaluates every cut of one neuron for every class in a single pass over the
// descending order. best[c] receives the first maximiser for class c.
void scan_neuron(std::span<const float> acts, std::span<const std::uint32_t> labels,
                 std::span<const std::size_t> class_sizes, std::vector<ThresholdChoice>& best,
                 std::vector<std::size_t>& order, std::vector<std::size_t>& seen) {
  const std::size_t n = acts.size();
  const std::size_t num_classes = class_sizes.size();
  order.resize(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return acts[a] > acts[b]; });
  seen.assign(num_classes, 0);
  best.assign(num_classes, ThresholdChoice{});
  std::vector<bool> have(num_classes, false);

  std::size_t i = 0;
  while (i < n) {
    const float value = acts[order[i]];
    // Duplicate activation values form a single cut.
    while (i < n && acts[order[i]] == value) {
      ++seen[labels[order[i]]];
      ++i;
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      const std::size_t tp = seen[c];
      const std::size_t fp = i - tp;
      const std::size_t neg = n - class_sizes[c];
      const std::size_t tn = neg - fp;
      const double purity = static_cast<double>(tp) / static_cast<double>(class_sizes[c]) +
                            static_cast<double>(tn) / static_cast<double>(neg);
      if (!have[c] || purity > best[c].purity) {
        best[c] = {value, purity, i};
        have[c] = true;
      }
    }
  }
}

std::vector<std::size_t> class_sizes_of(std::span<const std::uint32_t> labels, std::size_t num_classes) {
  std::vector<std::size_t> sizes(num_classes, 0);
  for (auto l : labels) {
    if (l >= num_classes) throw Error(ErrorCode::InvariantViolation, "label >= num_classes");
    ++sizes[l];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (sizes[c] == 0 || sizes[c] == labels.size()) {
      throw Error(ErrorCode::OneClassOnly, "class " + std::to_string(c) + " has " + std::to_string(sizes[c]) +
                                               " of " + std::to_string(labels.size()) + " samples");
    }
  }
  return sizes;
}

}  // namespace

ThresholdChoice optimal_threshold(std::span<const float> activations, std::span<const std::uint32_t> labels,
                                  std::uint32_t target_class) {
  if (activations.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "activations vs labels");
  if (activations.size() < 2) throw Error(ErrorCode::OneClassOnly, "need at least two samples");
  // Collapse to a binary problem: target vs rest.
  std::vector<std::uint32_t> binary(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) binary[i] = labels[i] == target_class ? 0u : 1u;
  const auto sizes = class_sizes_of(binary, 2);
  std::vector<ThresholdChoice> best;
  std::vector<std::size_t> order, seen;
  scan_neuron(activations, binary, sizes, best, order, seen);
  return best[0];
}

PredicateSet mine_predicates(const ActivationDump& dump, std::size_t k) {
  dump.validate();
  if (k == 0) throw Error(ErrorCode::KTooLarge, "k must be >= 1");
  const std::size_t num_classes = dump.num_classes;
  if (num_classes < 2) throw Error(ErrorCode::OneClassOnly, "need at least two classes");
  const auto sizes = class_sizes_of(dump.labels, num_classes);

  // purity[j][c] etc.; neurons are independent.
  std::vector<std::vector<ThresholdChoice>> per_neuron(dump.h);
  parallel_for(dump.h, [&](std::size_t j) {
    std::vector<float> column(dump.n);
    for (std::size_t i = 0; i < dump.n; ++i) column[i] = dump.at(i, j);
    std::vector<std::size_t> order, seen;
    scan_neuron(column, dump.labels, sizes, per_neuron[j], order, seen);
  });

  PredicateSet set;
  set.layer = dump.layer;
  set.k = k;
  set.k_clipped = k > dump.h;
  const std::size_t keep = std::min(k, dump.h);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> neurons(dump.h);
    std::iota(neurons.begin(), neurons.end(), 0);
    std::stable_sort(neurons.begin(), neurons.end(), [&](std::size_t a, std::size_t b) {
      return per_neuron[a][c].purity > per_neuron[b][c].purity;
    });
    ClassPredicates cp;
    cp.target_class = static_cast<std::uint32_t>(c);
    for (std::size_t r = 0; r < keep; ++r) {
      const auto j = neurons[r];
      const auto& choice = per_neuron[j][c];
      cp.predicates.push_back(Predicate{dump.layer, j, choice.threshold, static_cast<std::uint32_t>(c),
                                        choice.purity, choice.support});
    }
    set.classes.push_back(std::move(cp));
  }
  return set;
}

BitMatrix evaluate_predicates(const PredicateSet& pset, const ActivationDump& dump) {
  if (pset.layer != dump.layer) {
    throw Error(ErrorCode::LayerMismatch, "predicates mined on layer " + std::to_string(pset.layer) +
                                              ", dump is layer " + std::to_string(dump.layer));
  }
  const auto preds = pset.flat();
  for (const auto& p : preds) {
    p.validate();
    if (p.neuron >= dump.h) throw Error(ErrorCode::ShapeMismatch, "predicate neuron beyond dump width");
  }
  BitMatrix m;
  m.rows = dump.n;
  m.cols = preds.size();
  m.bits.resize(m.rows * m.cols);
  for (std::size_t i = 0; i < dump.n; ++i) {
    for (std::size_t j = 0; j < preds.size(); ++j) {
      m.bits[i * m.cols + j] = preds[j].holds(dump.at(i, preds[j].neuron)) ? 1 : 0;
    }
  }
  return m;
}

std::vector<std::uint8_t> evaluate_predicates(const PredicateSet& pset, std::span<const float> activations) {
  const auto preds = pset.flat();
  std::vector<std::uint8_t> out(preds.size());
  for (std::size_t j = 0; j < preds.size(); ++j) {
    if (preds[j].neuron >= activations.size()) throw Error(ErrorCode::ShapeMismatch, "activation vector too short");
    out[j] = preds[j].holds(activations[preds[j].neuron]) ? 1 : 0;
  }
  return out;
}

std::vector<std::uint8_t> evaluate_predicates(const PredicateSet& pset, std::span<const double> activations) {
  // Predicates were mined on f32 dumps; compare at the same precision.
  std::vector<float> narrowed(activations.size());
  std::transform(activations.begin(), activations.end(), narrowed.begin(),
                 [](double v) { return static_cast<float>(v); });
  return evaluate_predicates(pset, std::span<const float>(narrowed));
}

}  // namespace neurules
