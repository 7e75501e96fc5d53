#pragma once

// Independent reference implementations used as test oracles. Each one is
// written directly from the definition it checks, without sharing code with
// the library under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "neurules/activation_store.hpp"
#include "neurules/error.hpp"
#include "neurules/expression.hpp"
#include "neurules/mlp.hpp"
#include "neurules/predicates.hpp"
#include "neurules/rng.hpp"
#include "neurules/tree.hpp"

#define EXPECT_ERROR(stmt, expected_code)                                         \
  do {                                                                            \
    try {                                                                         \
      stmt;                                                                       \
      ADD_FAILURE() << "expected " << ::neurules::to_string(expected_code);       \
    } catch (const ::neurules::Error& e_) {                                       \
      EXPECT_EQ(e_.code(), expected_code) << e_.what();                           \
    }                                                                             \
  } while (0)

namespace neurules::testing {

inline std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "neurules-tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

/// Random dump with every class present. Values are drawn from a small grid so
/// duplicate activations (and therefore collapsed cuts) are common.
inline ActivationDump random_dump(Pcg32& rng, std::size_t n, std::size_t h, std::uint32_t classes, bool grid = true) {
  ActivationDump d;
  d.layer = static_cast<int>(rng.bounded(4));
  d.n = n;
  d.h = h;
  d.num_classes = classes;
  for (std::size_t i = 0; i < n * h; ++i) {
    d.values.push_back(grid ? static_cast<float>(rng.bounded(9)) * 0.25f - 1.0f
                            : static_cast<float>(rng.uniform(-3.0, 3.0)));
  }
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(i < classes ? static_cast<std::uint32_t>(i) : rng.bounded(classes));
  shuffle(d.labels, rng);
  return d;
}

struct BruteChoice {
  float threshold = 0.0f;
  double purity = 0.0;
  std::size_t support = 0;
};

/// Tries every distinct activation value as a ">=" threshold and counts the
/// confusion matrix from scratch. Ties keep the highest threshold.
inline BruteChoice brute_threshold(const std::vector<float>& acts, const std::vector<std::uint32_t>& labels,
                                   std::uint32_t c) {
  std::size_t pos = 0;
  for (auto l : labels) pos += l == c;
  const std::size_t neg = labels.size() - pos;
  std::set<float, std::greater<>> cuts(acts.begin(), acts.end());
  BruteChoice best;
  bool have = false;
  for (float t : cuts) {
    std::size_t tp = 0, tn = 0, support = 0;
    for (std::size_t i = 0; i < acts.size(); ++i) {
      const bool fire = acts[i] >= t;
      support += fire;
      if (labels[i] == c && fire) ++tp;
      if (labels[i] != c && !fire) ++tn;
    }
    const double purity = static_cast<double>(tp) / static_cast<double>(pos) +
                          static_cast<double>(tn) / static_cast<double>(neg);
    if (!have || purity > best.purity) {
      best = {t, purity, support};
      have = true;
    }
  }
  return best;
}

/// Full top-k miner built on brute_threshold.
inline PredicateSet brute_mine(const ActivationDump& d, std::size_t k) {
  PredicateSet out;
  out.layer = d.layer;
  out.k = k;
  out.k_clipped = k > d.h;
  for (std::uint32_t c = 0; c < d.num_classes; ++c) {
    std::vector<std::pair<BruteChoice, std::size_t>> scored;
    for (std::size_t j = 0; j < d.h; ++j) {
      std::vector<float> col;
      for (std::size_t i = 0; i < d.n; ++i) col.push_back(d.values[i * d.h + j]);
      scored.emplace_back(brute_threshold(col, d.labels, c), j);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first.purity != b.first.purity) return a.first.purity > b.first.purity;
      return a.second < b.second;
    });
    ClassPredicates cp;
    cp.target_class = c;
    for (std::size_t r = 0; r < std::min(k, d.h); ++r) {
      const auto& [choice, j] = scored[r];
      cp.predicates.push_back({d.layer, j, choice.threshold, c, choice.purity, choice.support});
    }
    out.classes.push_back(cp);
  }
  return out;
}

/// Triple-loop forward pass returning the logits.
inline std::vector<double> naive_logits(const MlpModel& m, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& L = m.layers[l];
    std::vector<double> z(L.out);
    for (std::size_t o = 0; o < L.out; ++o) {
      double s = L.biases[o];
      for (std::size_t i = 0; i < L.in; ++i) s += L.weights[o * L.in + i] * a[i];
      z[o] = s;
    }
    if (l + 1 < m.layers.size()) {
      for (auto& v : z) v = v > 0 ? v : 0;
    }
    a = z;
  }
  return a;
}

/// Mean softmax cross-entropy computed from naive_logits (log-sum-exp form).
inline double naive_loss(const MlpModel& m, const LabeledDataset& ds, const std::vector<std::size_t>& rows) {
  double total = 0.0;
  for (auto r : rows) {
    std::vector<double> x(ds.row(r).begin(), ds.row(r).end());
    const auto z = naive_logits(m, x);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    total += -(z[ds.labels[r]] - mx - std::log(s));
  }
  return total / static_cast<double>(rows.size());
}

/// On/off state of every hidden rectifier for every row.
inline std::vector<bool> relu_pattern(const MlpModel& m, const LabeledDataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<bool> on;
  for (auto r : rows) {
    std::vector<double> a(ds.row(r).begin(), ds.row(r).end());
    for (std::size_t l = 0; l + 1 < m.layers.size(); ++l) {
      const auto& L = m.layers[l];
      std::vector<double> z(L.out);
      for (std::size_t o = 0; o < L.out; ++o) {
        double s = L.biases[o];
        for (std::size_t i = 0; i < L.in; ++i) s += L.weights[o * L.in + i] * a[i];
        on.push_back(s > 0);
        z[o] = s > 0 ? s : 0;
      }
      a = z;
    }
  }
  return on;
}

// Central differences on a 2-2-2 network at random parameter points.
struct GradientCheck {
  double worst_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a rectifier kink
  double analytic_loss = 0.0;
  double reference_loss = 0.0;
};

inline GradientCheck gradient_check(std::uint64_t seed) {
  Pcg32 rng(seed);
  MlpConfig c;
  c.layer_sizes = {2, 2, 2};
  c.seed = seed;
  auto m = init_mlp(c);
  for (auto& L : m.layers) {
    for (auto& w : L.weights) w = rng.uniform(-1.5, 1.5);
    for (auto& b : L.biases) b = rng.uniform(-0.5, 0.5);
  }
  LabeledDataset ds;
  ds.n = 4;
  ds.d = 2;
  ds.num_classes = 2;
  for (std::size_t i = 0; i < ds.n; ++i) {
    ds.features.push_back(rng.uniform(-1, 1));
    ds.features.push_back(rng.uniform(-1, 1));
    ds.labels.push_back(static_cast<std::uint32_t>(i % 2));
  }
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  const auto g = loss_and_gradient(m, ds, rows);
  const double eps = 1e-4;
  GradientCheck out;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + eps;
    const double up = naive_loss(m, ds, rows);
    const auto up_pattern = relu_pattern(m, ds, rows);
    param = saved - eps;
    const double down = naive_loss(m, ds, rows);
    const auto down_pattern = relu_pattern(m, ds, rows);
    param = saved;
    // the difference quotient is meaningless across a kink
    if (up_pattern != down_pattern) {
      ++out.skipped;
      return;
    }
    ++out.checked;
    const double numeric = (up - down) / (2 * eps);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    out.worst_relative_error = std::max(out.worst_relative_error, std::abs(numeric - analytic) / denom);
  };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    for (std::size_t k = 0; k < m.layers[l].weights.size(); ++k) check(m.layers[l].weights[k], g.grad[l].weights[k]);
    for (std::size_t k = 0; k < m.layers[l].biases.size(); ++k) check(m.layers[l].biases[k], g.grad[l].biases[k]);
  }
  out.analytic_loss = g.loss;
  out.reference_loss = naive_loss(m, ds, rows);
  return out;
}

/// Recursive evaluator written against the s-expression grammar.
inline bool reference_eval(const Expression& e, const std::vector<double>& x) {
  using Op = Expression::Op;
  if (e.op() == Op::Not) return !reference_eval(*e.lhs(), x);
  if (e.op() == Op::And) return reference_eval(*e.lhs(), x) ? reference_eval(*e.rhs(), x) : false;
  if (e.op() == Op::Or) return reference_eval(*e.lhs(), x) ? true : reference_eval(*e.rhs(), x);
  const auto& f = e.function();
  double v = 0.0;
  if (f.kind == FeatureFunction::Kind::Identity) v = x.at(f.feature);
  if (f.kind == FeatureFunction::Kind::Square) v = std::pow(x.at(f.feature), 2);
  if (f.kind == FeatureFunction::Kind::Linear) v = f.weight * x.at(f.feature) + f.weight2 * x.at(f.feature2);
  return e.comparison() == Comparison::LessEqual ? !(v > e.theta()) : v > e.theta();
}

inline ExprPtr random_expression(Pcg32& rng, std::size_t d, int depth) {
  if (depth == 0 || rng.bounded(3) == 0) {
    const auto f = rng.bounded(static_cast<std::uint32_t>(d));
    FeatureFunction fn = FeatureFunction::identity(f);
    switch (rng.bounded(3)) {
      case 1: fn = FeatureFunction::square(f); break;
      case 2: fn = FeatureFunction::linear(f, rng.uniform(-1, 1), rng.bounded(static_cast<std::uint32_t>(d)), rng.uniform(-1, 1)); break;
      default: break;
    }
    return Expression::atom(fn, rng.bounded(2) ? Comparison::Greater : Comparison::LessEqual, rng.uniform(-1, 1));
  }
  switch (rng.bounded(3)) {
    case 0: return Expression::negate(random_expression(rng, d, depth - 1));
    case 1: return Expression::conj(random_expression(rng, d, depth - 1), random_expression(rng, d, depth - 1));
    default: return Expression::disj(random_expression(rng, d, depth - 1), random_expression(rng, d, depth - 1));
  }
}

/// Random binary decision tree over m features, built directly as a node
/// array in preorder (no learner involved).
inline DecisionTree random_tree(Pcg32& rng, std::size_t m, std::uint32_t classes, std::size_t max_depth) {
  DecisionTree t;
  t.num_classes = classes;
  std::function<std::size_t(std::size_t, std::vector<bool>&)> grow = [&](std::size_t depth, std::vector<bool>& used) {
    const std::size_t id = t.nodes.size();
    t.nodes.emplace_back();
    std::vector<std::size_t> free;
    for (std::size_t f = 0; f < m; ++f) {
      if (!used[f]) free.push_back(f);
    }
    if (depth >= max_depth || free.empty() || (depth > 0 && rng.bounded(4) == 0)) {
      t.nodes[id].label = rng.bounded(classes);
      t.nodes[id].counts.assign(classes, 0);
      t.nodes[id].counts[t.nodes[id].label] = 1 + rng.bounded(5);
      return id;
    }
    const std::size_t f = free[rng.bounded(static_cast<std::uint32_t>(free.size()))];
    t.nodes[id].feature = static_cast<int>(f);
    t.nodes[id].threshold = 0.5;
    used[f] = true;
    const std::size_t l = grow(depth + 1, used);
    const std::size_t r = grow(depth + 1, used);
    used[f] = false;
    t.nodes[id].left = l;
    t.nodes[id].right = r;
    t.nodes[id].counts.assign(classes, 0);
    for (std::size_t c = 0; c < classes; ++c) t.nodes[id].counts[c] = t.nodes[l].counts[c] + t.nodes[r].counts[c];
    t.nodes[id].label = static_cast<std::uint32_t>(
        std::max_element(t.nodes[id].counts.begin(), t.nodes[id].counts.end()) - t.nodes[id].counts.begin());
    return id;
  };
  std::vector<bool> used(m, false);
  grow(0, used);
  int maxf = -1;
  for (const auto& n : t.nodes) maxf = std::max(maxf, n.feature);
  t.num_features = static_cast<std::size_t>(maxf + 1);
  return t;
}

inline std::vector<double> bits_of(std::uint64_t mask, std::size_t m) {
  std::vector<double> x(m);
  for (std::size_t j = 0; j < m; ++j) x[j] = (mask >> j) & 1u ? 1.0 : 0.0;
  return x;
}

}  // namespace neurules::testing
