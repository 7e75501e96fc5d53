#include <gtest/gtest.h>

#include "neurules/grounding_tabular.hpp"
#include "support.hpp"
#include "synthesis_oracle.hpp"

namespace neurules {
namespace {

using testing::agreement;
using testing::full_enumeration_optimum;
using testing::gt;
using testing::lattice;
using testing::le;
using testing::recount_loss;

TEST(GroundingDataset, Counts) {
  LabeledDataset ds;
  ds.d = 1;
  ds.num_classes = 2;
  std::vector<std::uint8_t> truth;
  for (std::size_t i = 0; i < 20; ++i) {
    ds.features.push_back(static_cast<double>(i));
    ds.labels.push_back(i < 10 ? 1 : 0);
    truth.push_back(i < 6 || i >= 15);
    ++ds.n;
  }
  const auto gd = build_grounding_dataset(ds, 1, truth, 4);
  EXPECT_EQ(gd.n, 10u);
  EXPECT_EQ(gd.num_active, 6u);
  EXPECT_EQ(gd.num_inactive, 4u);
  EXPECT_EQ(gd.predicate_id, 4u);
  EXPECT_FALSE(gd.trivial());
  for (std::size_t i = 0; i < gd.n; ++i) EXPECT_EQ(gd.rows[i], static_cast<double>(gd.source_rows[i]));

  std::vector<std::uint8_t> all(20, 1);
  EXPECT_TRUE(build_grounding_dataset(ds, 1, all).trivial());
  EXPECT_EQ(build_grounding_dataset(ds, 1, all).num_inactive, 0u);
  ds.num_classes = 3;
  EXPECT_ERROR(build_grounding_dataset(ds, 2, all), ErrorCode::EmptyClass);
}

TEST(GroundingDataset, TargetsMatchMinedThresholds) {
  const auto ds = generate_xor(300, 1);
  MlpConfig cfg;
  cfg.layer_sizes = {10, 8, 2};
  cfg.epochs = 3;
  const auto m = train_mlp(cfg, ds).model;
  const auto dump = dump_activations(m, ds, 0);
  const auto ps = mine_predicates(dump, 2);
  const auto bits = evaluate_predicates(ps, dump);
  const auto flat = ps.flat();
  for (std::size_t j = 0; j < flat.size(); ++j) {
    std::vector<std::uint8_t> col(bits.rows);
    for (std::size_t i = 0; i < bits.rows; ++i) col[i] = bits.at(i, j);
    const auto gd = build_grounding_dataset(ds, flat[j].target_class, col, j);
    for (std::size_t i = 0; i < gd.n; ++i) {
      const auto r = gd.source_rows[i];
      const auto z = static_cast<float>(forward(m, ds.row(r)).hidden[0][flat[j].neuron]);
      EXPECT_EQ(gd.targets[i], z >= flat[j].threshold ? 1 : 0);
    }
  }
}

TEST(TreeGrounding, AxisAligned) {
  Pcg32 rng(3);
  GroundingDataset gd;
  gd.d = 5;
  for (int i = 0; i < 400; ++i) {
    for (int f = 0; f < 5; ++f) gd.rows.push_back(rng.next_double());
    const bool t = gd.rows[gd.rows.size() - 5 + 3] >= 0.7;
    gd.targets.push_back(t);
    (t ? gd.num_active : gd.num_inactive) += 1;
    ++gd.n;
  }
  const auto g = ground_with_tree(gd, TreeParams{});
  EXPECT_EQ(g.tree.depth(), 1u);
  EXPECT_EQ(g.tree.nodes[0].feature, 3);
  EXPECT_EQ(g.agreement, 1.0);
  // tree paths as an expression give the same truth values
  const auto e = tree_to_expression(g.tree, 1);
  EXPECT_EQ(agreement(*e, gd), 1.0);
}

TEST(TreeGrounding, RandomTargetsBeatMajority) {
  Pcg32 rng(4);
  GroundingDataset gd;
  gd.d = 2;
  for (int i = 0; i < 100; ++i) {
    gd.rows.push_back(rng.next_double());
    gd.rows.push_back(rng.next_double());
    const bool t = rng.bounded(2);
    gd.targets.push_back(t);
    (t ? gd.num_active : gd.num_inactive) += 1;
    ++gd.n;
  }
  TreeParams p;
  p.max_depth = 1;
  EXPECT_GE(ground_with_tree(gd, p).agreement, 0.5);
}

TEST(TreeGrounding, TrivialTarget) {
  auto gd = lattice(1, [](const auto&) { return true; });
  EXPECT_ERROR(ground_with_tree(gd, TreeParams{}), ErrorCode::TrivialTarget);
  EXPECT_ERROR(synthesize_expression(gd, SynthesisParams{}), ErrorCode::TrivialTarget);
}

TEST(Grid, TypeSevenDeciles) {
  const auto gd = lattice(1, [](const auto& x) { return x[0] > 0.5; }, 11);
  // values 1/22, 3/22, ..., 21/22: deciles fall exactly on order statistics
  const auto grid = threshold_grid(gd, FeatureFunction::identity(0), 10);
  ASSERT_EQ(grid.size(), 9u);
  for (std::size_t q = 1; q <= 9; ++q) EXPECT_DOUBLE_EQ(grid[q - 1], (2.0 * q + 1.0) / 22.0);
  const auto median = threshold_grid(gd, FeatureFunction::identity(0), 2);
  ASSERT_EQ(median.size(), 1u);
  EXPECT_DOUBLE_EQ(median[0], 11.0 / 22.0);
}

TEST(Grid, InterpolatesAndDeduplicates) {
  GroundingDataset gd;
  gd.d = 1;
  gd.n = 4;
  gd.rows = {3, 0, 1, 1};
  gd.targets = {1, 0, 1, 0};
  // sorted 0 1 1 3; h = 3q/4 gives 0.75, 1 (between the two ones), 1.5
  EXPECT_EQ(threshold_grid(gd, FeatureFunction::identity(0), 4), (std::vector<double>{0.75, 1.0, 1.5}));
  // deciles: h = 0.3q; q=4,5,6 all land between the two ones
  const auto g = threshold_grid(gd, FeatureFunction::identity(0), 10);
  EXPECT_EQ(std::count(g.begin(), g.end(), 1.0), 1);
}

TEST(Grammar, FunctionCount) {
  SynthesisParams p;
  EXPECT_EQ(grammar_functions(3, p).size(), 3u + 3u + 3u * 16u);
  p.squares = false;
  p.linear = false;
  EXPECT_EQ(grammar_functions(3, p).size(), 3u);
}

TEST(Synthesis, SingleAtom) {
  const auto gd = lattice(2, [](const auto& x) { return x[0] > 0.5; });
  SynthesisParams p;
  const auto r = synthesize_expression(gd, p);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.objective, p.lambda);
  EXPECT_EQ(r.expression->size(), 1u);
  EXPECT_EQ(agreement(*r.expression, gd), 1.0);
}

TEST(Synthesis, Conjunction) {
  const auto gd = lattice(3, [](const auto& x) { return x[0] > 0.5 && x[2] <= 0.5; });
  SynthesisParams p;
  const auto known = Expression::conj(gt(0, 0.5), le(2, 0.5));
  const double known_obj = recount_loss(*known, gd) + p.lambda * static_cast<double>(known->size());
  const auto r = synthesize_expression(gd, p);
  EXPECT_LE(r.objective, known_obj);
  EXPECT_GE(agreement(*r.expression, gd), 0.9);
}

TEST(Synthesis, XorOfAtoms) {
  const auto gd = lattice(3, [](const auto& x) { return (x[0] > 0.5) != (x[1] > 0.5); });
  SynthesisParams p;
  const auto known = Expression::disj(Expression::conj(gt(0, 0.5), Expression::negate(gt(1, 0.5))),
                                      Expression::conj(Expression::negate(gt(0, 0.5)), gt(1, 0.5)));
  const double known_obj = recount_loss(*known, gd) + p.lambda * static_cast<double>(known->size());
  EXPECT_EQ(recount_loss(*known, gd), 0.0);
  const auto r = synthesize_expression(gd, p);
  EXPECT_LE(r.objective, known_obj);
  EXPECT_GE(agreement(*r.expression, gd), 0.9);
}

TEST(Synthesis, Soundness) {
  Pcg32 rng(19);
  for (int t = 0; t < 10; ++t) {
    GroundingDataset gd;
    gd.d = 3;
    for (int i = 0; i < 80; ++i) {
      for (int f = 0; f < 3; ++f) gd.rows.push_back(rng.uniform(-1, 1));
      const auto* x = &gd.rows[gd.rows.size() - 3];
      const bool truth = (x[0] * x[0] + 0.3 * x[1] > 0.2) != (rng.bounded(10) == 0);
      gd.targets.push_back(truth);
      (truth ? gd.num_active : gd.num_inactive) += 1;
      ++gd.n;
    }
    if (gd.trivial()) continue;
    SynthesisParams p;
    p.max_size = 5;
    p.lambda = 0.005 * (t % 3);
    const auto r = synthesize_expression(gd, p);
    const double recomputed = recount_loss(*r.expression, gd) + p.lambda * static_cast<double>(r.expression->size());
    EXPECT_EQ(r.objective, recomputed);
    EXPECT_EQ(r.loss, expression_loss(*r.expression, gd));
    // dominance over every level-0 atom
    for (const auto& a : grammar_atoms(gd, p)) {
      ASSERT_LE(r.objective, recount_loss(*a, gd) + p.lambda);
    }
  }
}

TEST(Synthesis, ExhaustiveIsGlobalOptimum) {
  Pcg32 rng(5);
  for (int t = 0; t < 6; ++t) {
    GroundingDataset gd;
    gd.d = 2;
    for (int i = 0; i < 60; ++i) {
      const double a = rng.uniform(0, 1), b = rng.uniform(0, 1);
      gd.rows.push_back(a);
      gd.rows.push_back(b);
      const bool truth = ((a > 0.3 && b < 0.6) || a * b > 0.5) != (rng.bounded(8) == 0);
      gd.targets.push_back(truth);
      (truth ? gd.num_active : gd.num_inactive) += 1;
      ++gd.n;
    }
    SynthesisParams p;
    p.exhaustive = true;
    p.max_size = 1 + t % 3;
    p.lambda = 0.004 * (t % 2);
    const auto r = synthesize_expression(gd, p);
    EXPECT_NEAR(r.objective, full_enumeration_optimum(gd, p), 1e-12) << "case " << t;
  }
  SynthesisParams big;
  big.exhaustive = true;
  big.max_size = 4;
  EXPECT_ERROR(big.validate(), ErrorCode::InvalidArgument);
}

TEST(Synthesis, LambdaNeverGrowsSize) {
  Pcg32 rng(6);
  GroundingDataset gd;
  gd.d = 2;
  for (int i = 0; i < 120; ++i) {
    const double a = rng.uniform(0, 1), b = rng.uniform(0, 1);
    gd.rows.push_back(a);
    gd.rows.push_back(b);
    const bool truth = ((a > 0.5) != (b > 0.4)) != (rng.bounded(12) == 0);
    gd.targets.push_back(truth);
    (truth ? gd.num_active : gd.num_inactive) += 1;
    ++gd.n;
  }
  std::size_t previous = SIZE_MAX;
  for (double lambda : {0.0, 0.001, 0.005, 0.01, 0.03, 0.1, 0.5}) {
    SynthesisParams p;
    p.lambda = lambda;
    p.max_size = 7;
    const auto size = synthesize_expression(gd, p).expression->size();
    EXPECT_LE(size, previous) << "lambda " << lambda;
    previous = size;
  }
}

TEST(Synthesis, Deterministic) {
  const auto gd = lattice(2, [](const auto& x) { return x[0] + x[1] > 0.9; });
  SynthesisParams p;
  p.max_size = 5;
  const auto a = synthesize_expression(gd, p);
  const auto b = synthesize_expression(gd, p);
  EXPECT_EQ(*a.expression, *b.expression);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.candidates, b.candidates);
}

TEST(Synthesis, BudgetFlag) {
  const auto gd = lattice(3, [](const auto& x) { return (x[0] > 0.5) != (x[1] > 0.5); });
  SynthesisParams p;
  p.max_candidates = 50;
  const auto r = synthesize_expression(gd, p);
  EXPECT_TRUE(r.budget_exhausted);
  ASSERT_TRUE(r.expression);
  EXPECT_LE(r.candidates, 50u);
}

TEST(Synthesis, GroundsNeuronOfXorNetwork) {
  const auto ds = generate_xor(600, 2);
  MlpConfig cfg;
  cfg.layer_sizes = {10, 16, 2};
  cfg.seed = 3;
  cfg.epochs = 60;
  const auto m = train_mlp(cfg, ds).model;
  const auto dump = dump_activations(m, ds, 0);
  const auto ps = mine_predicates(dump, 1);
  const auto bits = evaluate_predicates(ps, dump);
  std::size_t grounded = 0;
  for (std::size_t j = 0; j < bits.cols; ++j) {
    std::vector<std::uint8_t> col(bits.rows);
    for (std::size_t i = 0; i < bits.rows; ++i) col[i] = bits.at(i, j);
    const auto gd = build_grounding_dataset(ds, ps.flat()[j].target_class, col, j);
    if (gd.trivial()) continue;
    SynthesisParams p;
    p.linear = false;
    p.squares = false;
    const auto r = synthesize_expression(gd, p);
    EXPECT_GE(agreement(*r.expression, gd), 0.9) << to_sexpr(*r.expression);
    ++grounded;
  }
  EXPECT_GE(grounded, 1u);
}

}  // namespace
}  // namespace neurules
