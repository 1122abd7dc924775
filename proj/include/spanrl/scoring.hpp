#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spanrl/spans.hpp"

namespace spanrl {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const Prf&, const Prf&) = default;
};

// F1 = 2PR / (P + R), or 0 when P + R = 0.
[[nodiscard]] Prf make_prf(double precision, double recall);

// Carrier for pooled aggregation: one example with its overlap counts.
struct ScoredExample {
  std::string id;
  SpanSet pred;
  SpanSet gold;
  Offset overlap = 0;
  Offset pred_size = 0;
  Offset gold_size = 0;
};

[[nodiscard]] ScoredExample score_example(std::string id, SpanSet pred, SpanSet gold);

// Character-set precision/recall/F1 for one example.
// Both sets empty -> (1, 1, 1); exactly one empty -> (0, 0, 0).
[[nodiscard]] Prf prf_example(const SpanSet& pred, const SpanSet& gold);

enum class Aggregation { pooled, macro };

// Micro aggregation: overlap and set sizes are summed over all examples before
// dividing. A zero denominator yields 0 for that component unless both are
// zero, in which case the result is (1, 1, 1).
[[nodiscard]] Prf prf_pooled(std::span<const ScoredExample> examples);

// Mean of per-example precision, recall and F1. An empty list yields (1, 1, 1)
// to agree with prf_pooled.
[[nodiscard]] Prf prf_macro(std::span<const ScoredExample> examples);

[[nodiscard]] Prf aggregate(std::span<const ScoredExample> examples, Aggregation mode);

// Span-F1 reward: 1 when both sets are empty, otherwise the example F1.
[[nodiscard]] double reward_span(const SpanSet& pred, const SpanSet& gold);

// Best example F1 among the first k candidates. Throws ParameterError unless
// 1 <= k <= candidates.size().
[[nodiscard]] double span_f1_at_k(std::span<const SpanSet> candidates, const SpanSet& gold,
                                  std::size_t k);

// Dataset F1@K: arithmetic mean over examples of span_f1_at_k. An empty
// dataset yields 0.
[[nodiscard]] double mean_f1_at_k(std::span<const std::vector<SpanSet>> candidates,
                                  std::span<const SpanSet> gold, std::size_t k);

}  // namespace spanrl
