#include "neurules/expression.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "neurules/error.hpp"
#include "neurules/format.hpp"

namespace neurules {

double FeatureFunction::apply(std::span<const double> x) const {
  switch (kind) {
    case Kind::Identity: return x[feature];
    case Kind::Square: return x[feature] * x[feature];
    case Kind::Linear: return weight * x[feature] + weight2 * x[feature2];
  }
  return 0.0;
}

Expression::Expression(Key, Op op, FeatureFunction fn, Comparison cmp, double theta, ExprPtr lhs, ExprPtr rhs)
    : op_(op), fn_(fn), cmp_(cmp), theta_(theta), lhs_(std::move(lhs)), rhs_(std::move(rhs)) {
  size_ = 1 + (lhs_ ? lhs_->size() : 0) + (rhs_ ? rhs_->size() : 0);
  max_feature_ = op_ == Op::Atom ? fn_.max_feature() : 0;
  if (lhs_) max_feature_ = std::max(max_feature_, lhs_->max_feature());
  if (rhs_) max_feature_ = std::max(max_feature_, rhs_->max_feature());
}

ExprPtr Expression::atom(FeatureFunction fn, Comparison cmp, double theta) {
  if (!std::isfinite(theta)) throw Error(ErrorCode::InvariantViolation, "atom threshold must be finite");
  return std::make_shared<const Expression>(Key{}, Op::Atom, fn, cmp, theta, nullptr, nullptr);
}

ExprPtr Expression::negate(ExprPtr child) {
  if (!child) throw Error(ErrorCode::InvariantViolation, "not() needs an operand");
  return std::make_shared<const Expression>(Key{}, Op::Not, FeatureFunction{}, Comparison::LessEqual, 0.0,
                                            std::move(child), nullptr);
}

ExprPtr Expression::conj(ExprPtr lhs, ExprPtr rhs) {
  if (!lhs || !rhs) throw Error(ErrorCode::InvariantViolation, "and() needs two operands");
  return std::make_shared<const Expression>(Key{}, Op::And, FeatureFunction{}, Comparison::LessEqual, 0.0,
                                            std::move(lhs), std::move(rhs));
}

ExprPtr Expression::disj(ExprPtr lhs, ExprPtr rhs) {
  if (!lhs || !rhs) throw Error(ErrorCode::InvariantViolation, "or() needs two operands");
  return std::make_shared<const Expression>(Key{}, Op::Or, FeatureFunction{}, Comparison::LessEqual, 0.0,
                                            std::move(lhs), std::move(rhs));
}

bool Expression::operator==(const Expression& o) const {
  if (op_ != o.op_) return false;
  if (op_ == Op::Atom) return fn_ == o.fn_ && cmp_ == o.cmp_ && theta_ == o.theta_;
  if (!(*lhs_ == *o.lhs_)) return false;
  return op_ == Op::Not || *rhs_ == *o.rhs_;
}

namespace {

bool eval_unchecked(const Expression& e, std::span<const double> x) {
  switch (e.op()) {
    case Expression::Op::Atom: {
      const double v = e.function().apply(x);
      return e.comparison() == Comparison::LessEqual ? v <= e.theta() : v > e.theta();
    }
    case Expression::Op::Not: return !eval_unchecked(*e.lhs(), x);
    case Expression::Op::And: return eval_unchecked(*e.lhs(), x) && eval_unchecked(*e.rhs(), x);
    case Expression::Op::Or: return eval_unchecked(*e.lhs(), x) || eval_unchecked(*e.rhs(), x);
  }
  return false;
}

std::string function_sexpr(const FeatureFunction& fn) {
  switch (fn.kind) {
    case FeatureFunction::Kind::Identity: return "x" + std::to_string(fn.feature);
    case FeatureFunction::Kind::Square: return "(sq x" + std::to_string(fn.feature) + ")";
    case FeatureFunction::Kind::Linear:
      return "(+ (* " + format_double(fn.weight) + " x" + std::to_string(fn.feature) + ") (* " +
             format_double(fn.weight2) + " x" + std::to_string(fn.feature2) + "))";
  }
  return {};
}

std::string feature_name(std::size_t f, std::span<const std::string> names) {
  return f < names.size() ? names[f] : "x" + std::to_string(f);
}

std::string function_math(const FeatureFunction& fn, std::span<const std::string> names) {
  switch (fn.kind) {
    case FeatureFunction::Kind::Identity: return feature_name(fn.feature, names);
    case FeatureFunction::Kind::Square: return feature_name(fn.feature, names) + "²";
    case FeatureFunction::Kind::Linear: {
      std::string out = format_double(fn.weight) + "·" + feature_name(fn.feature, names);
      out += fn.weight2 < 0 ? " − " + format_double(-fn.weight2) : " + " + format_double(fn.weight2);
      return out + "·" + feature_name(fn.feature2, names);
    }
  }
  return {};
}

// Minimal s-expression reader.
class SexprParser {
 public:
  explicit SexprParser(const std::string& text) : text_(text) {}

  ExprPtr parse_all() {
    auto e = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::ParseError, "s-expression at offset " + std::to_string(pos_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string token() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
           text_[pos_] != ')') {
      ++pos_;
    }
    if (start == pos_) fail("expected a token");
    return text_.substr(start, pos_ - start);
  }

  double number() {
    const std::string t = token();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) fail("bad number '" + t + "'");
    return v;
  }

  std::size_t variable() {
    const std::string t = token();
    if (t.size() < 2 || t[0] != 'x') fail("bad variable '" + t + "'");
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data() + 1, t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) fail("bad variable '" + t + "'");
    return v;
  }

  bool peek_open() {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == '(';
  }

  FeatureFunction function() {
    if (!peek_open()) return FeatureFunction::identity(variable());
    expect('(');
    const std::string head = token();
    FeatureFunction fn;
    if (head == "sq") {
      fn = FeatureFunction::square(variable());
    } else if (head == "+") {
      expect('(');
      if (token() != "*") fail("expected '*'");
      const double w1 = number();
      const auto f1 = variable();
      expect(')');
      expect('(');
      if (token() != "*") fail("expected '*'");
      const double w2 = number();
      const auto f2 = variable();
      expect(')');
      fn = FeatureFunction::linear(f1, w1, f2, w2);
    } else {
      fail("unknown function '" + head + "'");
    }
    expect(')');
    return fn;
  }

  ExprPtr parse_expr() {
    expect('(');
    const std::string head = token();
    ExprPtr e;
    if (head == "<=" || head == ">") {
      const auto fn = function();
      const double theta = number();
      e = Expression::atom(fn, head == "<=" ? Comparison::LessEqual : Comparison::Greater, theta);
    } else if (head == "not") {
      e = Expression::negate(parse_expr());
    } else if (head == "and" || head == "or") {
      auto lhs = parse_expr();
      auto rhs = parse_expr();
      e = head == "and" ? Expression::conj(std::move(lhs), std::move(rhs))
                        : Expression::disj(std::move(lhs), std::move(rhs));
    } else {
      fail("unknown operator '" + head + "'");
    }
    expect(')');
    return e;
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace

bool eval_expression(const Expression& expr, std::span<const double> x) {
  if (x.size() <= expr.max_feature()) {
    throw Error(ErrorCode::FeatureOutOfRange, "expression reads x" + std::to_string(expr.max_feature()) +
                                                  " but input has " + std::to_string(x.size()) + " features");
  }
  return eval_unchecked(expr, x);
}

std::string to_sexpr(const Expression& e) {
  switch (e.op()) {
    case Expression::Op::Atom:
      return std::string("(") + (e.comparison() == Comparison::LessEqual ? "<=" : ">") + " " +
             function_sexpr(e.function()) + " " + format_double(e.theta()) + ")";
    case Expression::Op::Not: return "(not " + to_sexpr(*e.lhs()) + ")";
    case Expression::Op::And: return "(and " + to_sexpr(*e.lhs()) + " " + to_sexpr(*e.rhs()) + ")";
    case Expression::Op::Or: return "(or " + to_sexpr(*e.lhs()) + " " + to_sexpr(*e.rhs()) + ")";
  }
  return {};
}

ExprPtr parse_sexpr(const std::string& text) { return SexprParser(text).parse_all(); }

std::string to_math(const Expression& e, std::span<const std::string> names) {
  switch (e.op()) {
    case Expression::Op::Atom:
      return function_math(e.function(), names) + (e.comparison() == Comparison::LessEqual ? " ≤ " : " > ") +
             format_double(e.theta());
    case Expression::Op::Not: return "¬(" + to_math(*e.lhs(), names) + ")";
    case Expression::Op::And: return "(" + to_math(*e.lhs(), names) + " ∧ " + to_math(*e.rhs(), names) + ")";
    case Expression::Op::Or: return "(" + to_math(*e.lhs(), names) + " ∨ " + to_math(*e.rhs(), names) + ")";
  }
  return {};
}

ExprPtr tree_to_expression(const DecisionTree& tree, std::uint32_t positive_label) {
  ExprPtr result;
  bool all_positive = true;
  for (const auto& path : extract_paths(tree)) {
    if (path.label != positive_label) {
      all_positive = false;
      continue;
    }
    ExprPtr conj;
    for (const auto& lit : path.literals) {
      auto a = Expression::atom(FeatureFunction::identity(lit.feature), lit.cmp, lit.threshold);
      conj = conj ? Expression::conj(conj, a) : a;
    }
    if (!conj) break;  // single-leaf tree; handled below
    result = result ? Expression::disj(result, conj) : conj;
  }
  const auto probe = Expression::atom(FeatureFunction::identity(0), Comparison::Greater, 0.0);
  if (all_positive) return Expression::disj(probe, Expression::negate(probe));
  if (!result) return Expression::conj(probe, Expression::negate(probe));
  return result;
}

}  // namespace neurules
