#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace spanrl {

using Offset = std::int64_t;

// Inclusive code-point interval [start, end].
struct Span {
  Offset start = 0;
  Offset end = 0;

  [[nodiscard]] constexpr Offset size() const { return end - start + 1; }

  // Converters for half-open [begin, end) offsets used by file formats.
  [[nodiscard]] static constexpr Span from_half_open(Offset begin, Offset end) {
    return Span{begin, end - 1};
  }
  [[nodiscard]] constexpr Offset half_open_end() const { return end + 1; }

  friend constexpr bool operator==(const Span&, const Span&) = default;
};

/**
 * Canonical set of code-point offsets stored as sorted, disjoint and
 * non-adjacent inclusive intervals. Two SpanSets compare equal exactly when
 * they cover the same integers.
 *
 * Instances are only produced by normalize() and the set operations, so the
 * canonical-form invariant always holds.
 */
class SpanSet {
 public:
  SpanSet() = default;

  [[nodiscard]] std::span<const Span> intervals() const { return intervals_; }
  [[nodiscard]] bool empty() const { return intervals_.empty(); }
  [[nodiscard]] Offset cardinality() const { return cardinality_; }
  [[nodiscard]] bool contains(Offset point) const;

  friend bool operator==(const SpanSet&, const SpanSet&) = default;

 private:
  friend SpanSet normalize(std::span<const Span> spans);
  friend SpanSet intersect(const SpanSet& a, const SpanSet& b);
  friend SpanSet unite(const SpanSet& a, const SpanSet& b);

  // Caller guarantees canonical form.
  explicit SpanSet(std::vector<Span> canonical);

  std::vector<Span> intervals_;
  Offset cardinality_ = 0;
};

// Union of arbitrary spans in canonical form. Throws ValidationError naming
// the index of the first span with start > end or a negative start.
[[nodiscard]] SpanSet normalize(std::span<const Span> spans);
[[nodiscard]] inline SpanSet normalize(std::initializer_list<Span> spans) {
  return normalize(std::span<const Span>(spans.begin(), spans.size()));
}

[[nodiscard]] SpanSet intersect(const SpanSet& a, const SpanSet& b);
[[nodiscard]] SpanSet unite(const SpanSet& a, const SpanSet& b);

[[nodiscard]] inline Offset cardinality(const SpanSet& s) { return s.cardinality(); }

}  // namespace spanrl
