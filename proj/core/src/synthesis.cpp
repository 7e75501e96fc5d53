#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <optional>
#include <unordered_set>

#include "neurules/error.hpp"
#include "neurules/grounding_tabular.hpp"

namespace neurules {

void SynthesisParams::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  if (max_size < 1) throw Error(ErrorCode::InvalidArgument, "max_size must be >= 1");
  if (beam_width < 1) throw Error(ErrorCode::InvalidArgument, "beam_width must be >= 1");
  if (quantiles < 2) throw Error(ErrorCode::InvalidArgument, "quantiles must be >= 2");
  if (exhaustive && max_size > 3) throw Error(ErrorCode::InvalidArgument, "exhaustive search is limited to max_size <= 3");
}

std::vector<FeatureFunction> grammar_functions(std::size_t d, const SynthesisParams& params) {
  std::vector<FeatureFunction> fns;
  for (std::size_t f = 0; f < d; ++f) fns.push_back(FeatureFunction::identity(f));
  if (params.squares) {
    for (std::size_t f = 0; f < d; ++f) fns.push_back(FeatureFunction::square(f));
  }
  if (params.linear) {
    for (std::size_t f = 0; f < d; ++f) {
      for (std::size_t g = f + 1; g < d; ++g) {
        for (double w1 : params.coefficients) {
          for (double w2 : params.coefficients) fns.push_back(FeatureFunction::linear(f, w1, g, w2));
        }
      }
    }
  }
  return fns;
}

std::vector<double> threshold_grid(const GroundingDataset& gd, const FeatureFunction& fn, std::size_t quantiles) {
  std::vector<double> values(gd.n);
  for (std::size_t i = 0; i < gd.n; ++i) values[i] = fn.apply(gd.row(i));
  std::sort(values.begin(), values.end());
  std::vector<double> grid;
  if (values.empty()) return grid;
  for (std::size_t q = 1; q < quantiles; ++q) {
    const double h = static_cast<double>(values.size() - 1) * static_cast<double>(q) / static_cast<double>(quantiles);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double v = values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
    if (grid.empty() || grid.back() != v) grid.push_back(v);
  }
  return grid;
}

std::vector<ExprPtr> grammar_atoms(const GroundingDataset& gd, const SynthesisParams& params) {
  std::vector<ExprPtr> atoms;
  for (const auto& fn : grammar_functions(gd.d, params)) {
    for (double theta : threshold_grid(gd, fn, params.quantiles)) {
      atoms.push_back(Expression::atom(fn, Comparison::LessEqual, theta));
      atoms.push_back(Expression::atom(fn, Comparison::Greater, theta));
    }
  }
  return atoms;
}

namespace {

using Bits = std::vector<std::uint64_t>;

struct BitsHash {
  std::size_t operator()(const Bits& b) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto w : b) {
      h ^= w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

struct Candidate {
  ExprPtr expr;
  Bits bits;
  std::size_t errors = 0;
  std::size_t misses = 0;  // target true, expression false
  double objective = 0.0;
  std::uint64_t order = 0;
};

class Search {
 public:
  Search(const GroundingDataset& gd, const SynthesisParams& params) : gd_(gd), params_(params) {
    words_ = (gd.n + 63) / 64;
    tail_mask_ = gd.n % 64 == 0 ? ~0ULL : (1ULL << (gd.n % 64)) - 1;
    target_.assign(words_, 0);
    for (std::size_t i = 0; i < gd.n; ++i) {
      if (gd.targets[i]) target_[i / 64] |= 1ULL << (i % 64);
    }
  }

  SynthesisResult run() {
    const bool exhaustive = params_.exhaustive;
    const std::size_t width = exhaustive ? SIZE_MAX : params_.beam_width;
    levels_.resize(params_.max_size + 1);

    // Size 1: every atom is scored, so the result dominates each of them.
    std::vector<Candidate> atoms;
    for (auto& a : grammar_atoms(gd_, params_)) {
      Bits b = atom_bits(*a);
      if (auto c = admit(std::move(a), std::move(b))) atoms.push_back(std::move(*c));
      if (exhausted_) return finish();
    }
    const std::size_t pool = exhaustive || params_.atom_pool == 0 ? SIZE_MAX : params_.atom_pool;
    levels_[1] = keep_best(std::move(atoms), pool);

    for (std::size_t size = 2; size <= params_.max_size && !exhausted_; ++size) {
      std::vector<Candidate> fresh;
      for (const auto& c : levels_[size - 1]) {
        Bits b = c.bits;
        for (auto& w : b) w = ~w;
        b.back() &= tail_mask_;
        if (auto n = admit(Expression::negate(c.expr), std::move(b))) fresh.push_back(std::move(*n));
        if (exhausted_) break;
      }
      for (std::size_t s1 = 1; s1 <= (size - 1) / 2 && !exhausted_; ++s1) {
        const std::size_t s2 = size - 1 - s1;
        const auto& left = levels_[s1];
        const auto& right = levels_[s2];
        for (std::size_t i = 0; i < left.size() && !exhausted_; ++i) {
          for (std::size_t j = s1 == s2 ? i + 1 : 0; j < right.size() && !exhausted_; ++j) {
            Bits both(words_), either(words_);
            for (std::size_t w = 0; w < words_; ++w) {
              both[w] = left[i].bits[w] & right[j].bits[w];
              either[w] = left[i].bits[w] | right[j].bits[w];
            }
            if (auto n = admit(Expression::conj(left[i].expr, right[j].expr), std::move(both))) fresh.push_back(std::move(*n));
            if (auto n = admit(Expression::disj(left[i].expr, right[j].expr), std::move(either))) fresh.push_back(std::move(*n));
          }
        }
      }
      levels_[size] = keep_best(std::move(fresh), width);
    }
    return finish();
  }

 private:
  Bits atom_bits(const Expression& atom) const {
    Bits b(words_, 0);
    for (std::size_t i = 0; i < gd_.n; ++i) {
      const double v = atom.function().apply(gd_.row(i));
      const bool t = atom.comparison() == Comparison::LessEqual ? v <= atom.theta() : v > atom.theta();
      if (t) b[i / 64] |= 1ULL << (i % 64);
    }
    return b;
  }

  // Scores a candidate, updates the incumbent and drops semantic duplicates.
  std::optional<Candidate> admit(ExprPtr expr, Bits bits) {
    if (candidates_ >= params_.max_candidates) {
      exhausted_ = true;
      return std::nullopt;
    }
    ++candidates_;
    std::size_t errors = 0;
    std::size_t misses = 0;
    for (std::size_t w = 0; w < words_; ++w) {
      errors += static_cast<std::size_t>(std::popcount(bits[w] ^ target_[w]));
      misses += static_cast<std::size_t>(std::popcount(target_[w] & ~bits[w]));
    }
    const double objective = static_cast<double>(errors) / static_cast<double>(gd_.n) +
                             params_.lambda * static_cast<double>(expr->size());
    Candidate c{std::move(expr), std::move(bits), errors, misses, objective, next_order_++};
    if (!best_ || c.objective < best_->objective) best_ = Candidate{c.expr, {}, c.errors, c.misses, c.objective, c.order};
    if (!seen_.insert(c.bits).second) return std::nullopt;
    return c;
  }

  // The beam keeps three views of each level: the best candidates by
  // objective, the ones with the fewest misses (useful under "and") and the
  // ones with the fewest false alarms (useful under "or"). A pure objective
  // beam loses the halves of xor-like targets to near-miss linear atoms.
  static std::vector<Candidate> keep_best(std::vector<Candidate> cands, std::size_t width) {
    auto better = [](const Candidate& a, const Candidate& b) {
      if (a.objective != b.objective) return a.objective < b.objective;
      if (a.expr->size() != b.expr->size()) return a.expr->size() < b.expr->size();
      return a.order < b.order;
    };
    if (cands.size() <= width) {
      std::sort(cands.begin(), cands.end(), better);
      return cands;
    }
    auto fewer_misses = [&](const Candidate& a, const Candidate& b) {
      if (a.misses != b.misses) return a.misses < b.misses;
      return better(a, b);
    };
    auto fewer_alarms = [&](const Candidate& a, const Candidate& b) {
      const std::size_t fa = a.errors - a.misses, fb = b.errors - b.misses;
      if (fa != fb) return fa < fb;
      return better(a, b);
    };
    std::vector<std::size_t> idx(cands.size());
    std::vector<bool> taken(cands.size(), false);
    std::vector<std::size_t> keep;
    auto take = [&](const auto& less) {
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(width), idx.end(),
                        [&](std::size_t a, std::size_t b) { return less(cands[a], cands[b]); });
      for (std::size_t r = 0; r < width; ++r) {
        if (!taken[idx[r]]) {
          taken[idx[r]] = true;
          keep.push_back(idx[r]);
        }
      }
    };
    take(better);
    take(fewer_misses);
    take(fewer_alarms);
    std::vector<Candidate> out;
    out.reserve(keep.size());
    for (auto i : keep) out.push_back(std::move(cands[i]));
    return out;
  }

  SynthesisResult finish() {
    SynthesisResult r;
    r.candidates = candidates_;
    r.budget_exhausted = exhausted_;
    if (best_) {
      r.expression = best_->expr;
      r.objective = best_->objective;
      r.loss = static_cast<double>(best_->errors) / static_cast<double>(gd_.n);
    }
    return r;
  }

  const GroundingDataset& gd_;
  const SynthesisParams& params_;
  std::size_t words_ = 0;
  std::uint64_t tail_mask_ = 0;
  Bits target_;
  std::vector<std::vector<Candidate>> levels_;
  std::unordered_set<Bits, BitsHash> seen_;
  std::optional<Candidate> best_;
  std::size_t candidates_ = 0;
  std::uint64_t next_order_ = 0;
  bool exhausted_ = false;
};

}  // namespace

SynthesisResult synthesize_expression(const GroundingDataset& gd, const SynthesisParams& params) {
  params.validate();
  if (gd.trivial()) {
    throw Error(ErrorCode::TrivialTarget, "predicate " + std::to_string(gd.predicate_id) + " is constant on its class");
  }
  return Search(gd, params).run();
}

}  // namespace neurules
