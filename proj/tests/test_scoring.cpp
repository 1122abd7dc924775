#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracle.hpp"
#include "spanrl/error.hpp"
#include "spanrl/scoring.hpp"

using namespace spanrl;
using doctest::Approx;

TEST_CASE("prf_example") {
  const SpanSet gold = normalize({{0, 9}});

  const Prf half = prf_example(normalize({{5, 14}}), gold);
  CHECK(half.precision == 0.5);
  CHECK(half.recall == 0.5);
  CHECK(half.f1 == 0.5);

  CHECK(prf_example(gold, gold) == Prf{1, 1, 1});
  CHECK(prf_example(SpanSet{}, gold) == Prf{0, 0, 0});
  CHECK(prf_example(gold, SpanSet{}) == Prf{0, 0, 0});
  CHECK(prf_example(SpanSet{}, SpanSet{}) == Prf{1, 1, 1});
  // Disjoint, both nonempty.
  CHECK(prf_example(normalize({{20, 25}}), gold) == Prf{0, 0, 0});
}

TEST_CASE("prf_pooled") {
  const SpanSet g = normalize({{0, 9}});
  const std::vector<ScoredExample> two{
      score_example("a", normalize({{5, 14}}), g),
      score_example("b", SpanSet{}, g),
  };
  CHECK(two[0].overlap == 5);
  CHECK(two[1].pred_size == 0);
  const Prf p = prf_pooled(two);
  CHECK(p.precision == 0.5);
  CHECK(p.recall == 0.25);
  CHECK(p.f1 == Approx(1.0 / 3.0).epsilon(1e-15));

  const std::vector<ScoredExample> one{score_example("a", normalize({{5, 14}}), g)};
  CHECK(prf_pooled(one) == prf_example(one[0].pred, one[0].gold));

  const std::vector<ScoredExample> clean{score_example("x", {}, {}), score_example("y", {}, {})};
  CHECK(prf_pooled(clean) == Prf{1, 1, 1});
  CHECK(prf_pooled({}) == Prf{1, 1, 1});

  // Predictions only on clean examples: recall denominator is zero.
  const std::vector<ScoredExample> false_alarm{score_example("x", g, {})};
  CHECK(prf_pooled(false_alarm) == Prf{0, 0, 0});
}

TEST_CASE("prf_macro averages per-example scores") {
  const SpanSet g = normalize({{0, 9}});
  const std::vector<ScoredExample> two{
      score_example("a", normalize({{5, 14}}), g),
      score_example("b", g, g),
  };
  const Prf m = prf_macro(two);
  CHECK(m.precision == 0.75);
  CHECK(m.recall == 0.75);
  CHECK(m.f1 == 0.75);
  CHECK(aggregate(two, Aggregation::macro) == m);
  CHECK(aggregate(two, Aggregation::pooled) == prf_pooled(two));
}

TEST_CASE("reward_span") {
  CHECK(reward_span({}, {}) == 1.0);
  CHECK(reward_span({}, normalize({{0, 9}})) == 0.0);
  CHECK(reward_span(normalize({{5, 14}}), normalize({{0, 9}})) == 0.5);
}

TEST_CASE("span_f1_at_k") {
  const SpanSet gold = normalize({{0, 9}});
  // F1 0.0, 0.5, 1.0 in order.
  const std::vector<SpanSet> cands{normalize({{20, 29}}), normalize({{5, 14}}), gold};
  CHECK(span_f1_at_k(cands, gold, 3) == 1.0);
  CHECK(span_f1_at_k(cands, gold, 2) == 0.5);
  CHECK(span_f1_at_k(cands, gold, 1) == 0.0);
  CHECK_THROWS_AS((void)span_f1_at_k(cands, gold, 0), ParameterError);
  CHECK_THROWS_AS((void)span_f1_at_k(cands, gold, 4), ParameterError);

  // Both-empty convention: an empty candidate on clean gold scores 1.
  const std::vector<SpanSet> clean_cands{gold, SpanSet{}};
  CHECK(span_f1_at_k(clean_cands, SpanSet{}, 2) == 1.0);

  // Dataset level: one example best 1.0, another best 0.5 -> 0.75.
  const std::vector<std::vector<SpanSet>> per_example{
      {normalize({{20, 29}}), gold},
      {normalize({{5, 14}}), normalize({{30, 39}})},
  };
  const std::vector<SpanSet> golds{gold, gold};
  CHECK(mean_f1_at_k(per_example, golds, 2) == 0.75);
}

TEST_CASE("scoring agrees with the boolean-array oracle") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::int64_t> len_dist(1, 200);
  std::vector<ScoredExample> scored;
  std::vector<oracle::Counts> counts;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t len = len_dist(rng);
    const auto pred_spans = oracle::random_spans(rng, 10, len);
    const auto gold_spans = oracle::random_spans(rng, 10, len);
    const SpanSet pred = normalize(pred_spans);
    const SpanSet gold = normalize(gold_spans);
    const auto mp = oracle::mask_of(pred_spans, static_cast<std::size_t>(len));
    const auto mg = oracle::mask_of(gold_spans, static_cast<std::size_t>(len));

    const oracle::Scores want = oracle::scores(oracle::counts(mp, mg));
    const Prf got = prf_example(pred, gold);
    REQUIRE(got.precision == Approx(want.precision).epsilon(1e-12));
    REQUIRE(got.recall == Approx(want.recall).epsilon(1e-12));
    REQUIRE(got.f1 == Approx(want.f1).epsilon(1e-12));
    REQUIRE(reward_span(pred, gold) == Approx(oracle::reward(mp, mg)).epsilon(1e-12));

    // Symmetry of F1; P and R swap.
    const Prf swapped = prf_example(gold, pred);
    REQUIRE(swapped.f1 == Approx(got.f1).epsilon(1e-12));
    REQUIRE(swapped.precision == got.recall);

    // Reward is 1 exactly when the sets coincide.
    REQUIRE((reward_span(pred, gold) == 1.0) == (pred == gold));

    scored.push_back(score_example(std::to_string(trial), pred, gold));
    counts.push_back(oracle::counts(mp, mg));
  }
  const oracle::Scores want = oracle::pooled(counts);
  const Prf got = prf_pooled(scored);
  CHECK(got.precision == Approx(want.precision).epsilon(1e-12));
  CHECK(got.recall == Approx(want.recall).epsilon(1e-12));
  CHECK(got.f1 == Approx(want.f1).epsilon(1e-12));

  // Permutation invariance of pooling.
  std::shuffle(scored.begin(), scored.end(), rng);
  CHECK(prf_pooled(scored) == got);
}

TEST_CASE("span_f1_at_k is nondecreasing in k") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const SpanSet gold = normalize(oracle::random_spans(rng, 4, 80));
    std::vector<SpanSet> cands;
    for (int i = 0; i < 8; ++i) cands.push_back(normalize(oracle::random_spans(rng, 4, 80)));
    double prev = -1.0;
    for (std::size_t k = 1; k <= cands.size(); ++k) {
      const double v = span_f1_at_k(cands, gold, k);
      REQUIRE(v >= prev);
      prev = v;
    }
  }
}
