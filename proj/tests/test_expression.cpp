#include <gtest/gtest.h>

#include "support.hpp"

namespace neurules {
namespace {

using testing::random_expression;
using testing::reference_eval;

ExprPtr x_gt(std::size_t f, double t) { return Expression::atom(FeatureFunction::identity(f), Comparison::Greater, t); }

TEST(Expression, NotAtom) {
  const auto e = Expression::negate(x_gt(0, 0.0));
  EXPECT_FALSE(eval_expression(*e, std::vector<double>{1.0}));
  EXPECT_TRUE(eval_expression(*e, std::vector<double>{0.0}));
  EXPECT_EQ(e->size(), 2u);
}

TEST(Expression, ContradictionNeverHolds) {
  const auto a = x_gt(1, 0.3);
  const auto e = Expression::conj(a, Expression::negate(a));
  Pcg32 rng(1);
  for (int i = 0; i < 200; ++i) {
    EXPECT_FALSE(eval_expression(*e, std::vector<double>{rng.uniform(-1, 1), rng.uniform(-1, 1)}));
  }
  EXPECT_EQ(e->size(), 4u);
}

TEST(Expression, FeatureFunctions) {
  const std::vector<double> x{2.0, -3.0};
  EXPECT_EQ(FeatureFunction::identity(1).apply(x), -3.0);
  EXPECT_EQ(FeatureFunction::square(1).apply(x), 9.0);
  EXPECT_EQ(FeatureFunction::linear(0, 0.5, 1, -1.0).apply(x), 4.0);
}

TEST(Expression, MatchesReferenceEvaluator) {
  Pcg32 rng(42);
  for (int t = 0; t < 50; ++t) {
    const auto e = random_expression(rng, 4, 4);
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> x(4);
      for (auto& v : x) v = rng.uniform(-1.5, 1.5);
      ASSERT_EQ(eval_expression(*e, x), reference_eval(*e, x)) << to_sexpr(*e);
    }
  }
}

TEST(Expression, FeatureOutOfRange) {
  const auto e = x_gt(3, 0.0);
  EXPECT_EQ(e->max_feature(), 3u);
  EXPECT_ERROR(eval_expression(*e, std::vector<double>{1, 2, 3}), ErrorCode::FeatureOutOfRange);
}

TEST(Expression, RejectsNonFiniteTheta) {
  EXPECT_ERROR(x_gt(0, std::nan("")), ErrorCode::InvariantViolation);
}

TEST(Sexpr, Format) {
  const auto e = Expression::disj(
      Expression::conj(x_gt(1, 0.5), Expression::atom(FeatureFunction::identity(2), Comparison::LessEqual, 0.5)),
      Expression::negate(Expression::atom(FeatureFunction::square(0), Comparison::Greater, 0.25)));
  EXPECT_EQ(to_sexpr(*e), "(or (and (> x1 0.5) (<= x2 0.5)) (not (> (sq x0) 0.25)))");
  const auto lin = Expression::atom(FeatureFunction::linear(0, -1, 3, 0.5), Comparison::Greater, 0.1);
  EXPECT_EQ(to_sexpr(*lin), "(> (+ (* -1 x0) (* 0.5 x3)) 0.1)");
}

TEST(Sexpr, RoundTrip) {
  Pcg32 rng(7);
  for (int t = 0; t < 300; ++t) {
    const auto e = random_expression(rng, 6, 5);
    const auto back = parse_sexpr(to_sexpr(*e));
    ASSERT_EQ(*back, *e);
    ASSERT_EQ(to_sexpr(*back), to_sexpr(*e));
  }
}

TEST(Sexpr, ParseErrors) {
  EXPECT_ERROR(parse_sexpr("(> x1"), ErrorCode::ParseError);
  EXPECT_ERROR(parse_sexpr("(xor (> x1 0) (> x2 0))"), ErrorCode::ParseError);
  EXPECT_ERROR(parse_sexpr("(> y1 0)"), ErrorCode::ParseError);
  EXPECT_ERROR(parse_sexpr("(> x1 abc)"), ErrorCode::ParseError);
  EXPECT_ERROR(parse_sexpr("(> x1 0) trailing"), ErrorCode::ParseError);
}

TEST(Math, Rendering) {
  const auto e = Expression::conj(x_gt(1, 0.5),
                                  Expression::negate(Expression::atom(FeatureFunction::square(2), Comparison::LessEqual, 0.3)));
  EXPECT_EQ(to_math(*e), "(x1 > 0.5 ∧ ¬(x2² ≤ 0.3))");
  const std::vector<std::string> names{"a", "b", "c"};
  EXPECT_EQ(to_math(*e, names), "(b > 0.5 ∧ ¬(c² ≤ 0.3))");
}

TEST(TreeToExpression, AgreesWithTree) {
  Pcg32 rng(13);
  for (int t = 0; t < 40; ++t) {
    const std::size_t m = 1 + rng.bounded(8);
    const auto tree = testing::random_tree(rng, m, 2, 5);
    const auto e = tree_to_expression(tree, 1);
    for (std::uint64_t mask = 0; mask < (1u << m); ++mask) {
      const auto x = testing::bits_of(mask, m);
      ASSERT_EQ(eval_expression(*e, x), tree_predict(tree, x) == 1);
    }
  }
}

TEST(TreeToExpression, DegenerateTrees) {
  DecisionTree leaf;
  leaf.num_classes = 2;
  leaf.nodes.push_back({-1, 0, 0, 0, 1, {0, 3}, 0});
  const std::vector<double> x{0.0};
  EXPECT_TRUE(eval_expression(*tree_to_expression(leaf, 1), x));
  EXPECT_FALSE(eval_expression(*tree_to_expression(leaf, 0), x));
}

}  // namespace
}  // namespace neurules
