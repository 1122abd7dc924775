#include "spanrl/scoring.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "spanrl/error.hpp"

namespace spanrl {

namespace {

double ratio(Offset num, Offset den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

Prf from_counts(Offset overlap, Offset pred_size, Offset gold_size) {
  if (pred_size == 0 && gold_size == 0) return {1.0, 1.0, 1.0};
  return make_prf(ratio(overlap, pred_size), ratio(overlap, gold_size));
}

}  // namespace

Prf make_prf(double precision, double recall) {
  const double sum = precision + recall;
  const double f1 = sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
  return {precision, recall, f1};
}

ScoredExample score_example(std::string id, SpanSet pred, SpanSet gold) {
  ScoredExample ex;
  ex.id = std::move(id);
  ex.overlap = intersect(pred, gold).cardinality();
  ex.pred_size = pred.cardinality();
  ex.gold_size = gold.cardinality();
  ex.pred = std::move(pred);
  ex.gold = std::move(gold);
  return ex;
}

Prf prf_example(const SpanSet& pred, const SpanSet& gold) {
  return from_counts(intersect(pred, gold).cardinality(), pred.cardinality(),
                     gold.cardinality());
}

Prf prf_pooled(std::span<const ScoredExample> examples) {
  Offset overlap = 0;
  Offset pred_size = 0;
  Offset gold_size = 0;
  for (const ScoredExample& ex : examples) {
    overlap += ex.overlap;
    pred_size += ex.pred_size;
    gold_size += ex.gold_size;
  }
  return from_counts(overlap, pred_size, gold_size);
}

Prf prf_macro(std::span<const ScoredExample> examples) {
  if (examples.empty()) return {1.0, 1.0, 1.0};
  Prf sum{0.0, 0.0, 0.0};
  for (const ScoredExample& ex : examples) {
    const Prf p = from_counts(ex.overlap, ex.pred_size, ex.gold_size);
    sum.precision += p.precision;
    sum.recall += p.recall;
    sum.f1 += p.f1;
  }
  const auto n = static_cast<double>(examples.size());
  return {sum.precision / n, sum.recall / n, sum.f1 / n};
}

Prf aggregate(std::span<const ScoredExample> examples, Aggregation mode) {
  return mode == Aggregation::pooled ? prf_pooled(examples) : prf_macro(examples);
}

double reward_span(const SpanSet& pred, const SpanSet& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  return prf_example(pred, gold).f1;
}

double span_f1_at_k(std::span<const SpanSet> candidates, const SpanSet& gold, std::size_t k) {
  if (k == 0 || k > candidates.size()) {
    throw ParameterError(
        fmt::format("k must be in [1, {}], got {}", candidates.size(), k));
  }
  double best = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    best = std::max(best, prf_example(candidates[i], gold).f1);
  }
  return best;
}

double mean_f1_at_k(std::span<const std::vector<SpanSet>> candidates,
                    std::span<const SpanSet> gold, std::size_t k) {
  if (candidates.size() != gold.size()) {
    throw ParameterError(fmt::format("{} candidate lists for {} gold sets",
                                     candidates.size(), gold.size()));
  }
  if (gold.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    sum += span_f1_at_k(candidates[i], gold[i], k);
  }
  return sum / static_cast<double>(gold.size());
}

}  // namespace spanrl
