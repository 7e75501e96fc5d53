#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "neurules/tree.hpp"

namespace neurules {

/// f(x) inside an atom: a single feature, a square, or a weighted sum of two
/// features.
struct FeatureFunction {
  enum class Kind { Identity, Square, Linear };

  Kind kind = Kind::Identity;
  std::size_t feature = 0;
  std::size_t feature2 = 0;  // Linear only
  double weight = 1.0;       // Linear only
  double weight2 = 1.0;      // Linear only

  static FeatureFunction identity(std::size_t f) { return {Kind::Identity, f, 0, 1.0, 1.0}; }
  static FeatureFunction square(std::size_t f) { return {Kind::Square, f, 0, 1.0, 1.0}; }
  static FeatureFunction linear(std::size_t f, double w, std::size_t g, double w2) {
    return {Kind::Linear, f, g, w, w2};
  }

  double apply(std::span<const double> x) const;
  std::size_t max_feature() const { return kind == Kind::Linear ? std::max(feature, feature2) : feature; }

  bool operator==(const FeatureFunction&) const = default;
};

class Expression;
using ExprPtr = std::shared_ptr<const Expression>;

/// Immutable boolean expression tree. Subtrees are shared between candidates.
class Expression {
 public:
  enum class Op { Atom, Not, And, Or };

  static ExprPtr atom(FeatureFunction fn, Comparison cmp, double theta);
  static ExprPtr negate(ExprPtr child);
  static ExprPtr conj(ExprPtr lhs, ExprPtr rhs);
  static ExprPtr disj(ExprPtr lhs, ExprPtr rhs);

  Op op() const { return op_; }
  const FeatureFunction& function() const { return fn_; }
  Comparison comparison() const { return cmp_; }
  double theta() const { return theta_; }
  const ExprPtr& lhs() const { return lhs_; }
  const ExprPtr& rhs() const { return rhs_; }

  /// Node count.
  std::size_t size() const { return size_; }
  std::size_t max_feature() const { return max_feature_; }

  bool operator==(const Expression& o) const;

  // Construction is through the factories; the constructor is public only for make_shared.
  struct Key {};
  Expression(Key, Op op, FeatureFunction fn, Comparison cmp, double theta, ExprPtr lhs, ExprPtr rhs);

 private:
  Op op_;
  FeatureFunction fn_;
  Comparison cmp_;
  double theta_;
  ExprPtr lhs_;
  ExprPtr rhs_;
  std::size_t size_;
  std::size_t max_feature_;
};

/// Throws FeatureOutOfRange if x is too short for the expression.
bool eval_expression(const Expression& expr, std::span<const double> x);

/// `(or (and (> x1 0.5) (<= x2 0.5)) ...)`; features are 0-based `x<i>`,
/// squares `(sq x<i>)`, linear terms `(+ (* w x<i>) (* w x<j>))`.
std::string to_sexpr(const Expression& expr);
ExprPtr parse_sexpr(const std::string& text);

/// Infix rendering, e.g. `(x1 > 0.5 ∧ ¬(x2² ≤ 0.3))`; uses names when given.
std::string to_math(const Expression& expr, std::span<const std::string> feature_names = {});

/// OR over the paths reaching `positive_label`, each an AND of its atoms. A tree
/// with no such path becomes a contradiction, one with only such paths a tautology.
ExprPtr tree_to_expression(const DecisionTree& tree, std::uint32_t positive_label = 1);

}  // namespace neurules
