#include "spanrl/spans.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "spanrl/error.hpp"

namespace spanrl {

SpanSet::SpanSet(std::vector<Span> canonical) : intervals_(std::move(canonical)) {
  for (const Span& s : intervals_) cardinality_ += s.size();
}

bool SpanSet::contains(Offset point) const {
  auto it = std::upper_bound(intervals_.begin(), intervals_.end(), point,
                             [](Offset p, const Span& s) { return p < s.start; });
  if (it == intervals_.begin()) return false;
  return point <= std::prev(it)->end;
}

SpanSet normalize(std::span<const Span> spans) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const Span& s = spans[i];
    if (s.start > s.end) {
      throw ValidationError(fmt::format("span {} is malformed: start {} > end {}", i,
                                        s.start, s.end));
    }
    if (s.start < 0) {
      throw ValidationError(fmt::format("span {} has negative start {}", i, s.start));
    }
  }

  std::vector<Span> sorted(spans.begin(), spans.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const Span& x, const Span& y) { return x.start < y.start; });

  std::vector<Span> merged;
  merged.reserve(sorted.size());
  for (const Span& s : sorted) {
    // Adjacent intervals merge: the metric only sees integer sets.
    if (!merged.empty() && s.start <= merged.back().end + 1) {
      merged.back().end = std::max(merged.back().end, s.end);
    } else {
      merged.push_back(s);
    }
  }
  return SpanSet(std::move(merged));
}

SpanSet intersect(const SpanSet& a, const SpanSet& b) {
  std::vector<Span> out;
  auto ia = a.intervals_.begin();
  auto ib = b.intervals_.begin();
  while (ia != a.intervals_.end() && ib != b.intervals_.end()) {
    const Offset lo = std::max(ia->start, ib->start);
    const Offset hi = std::min(ia->end, ib->end);
    if (lo <= hi) out.push_back({lo, hi});
    if (ia->end < ib->end) {
      ++ia;
    } else {
      ++ib;
    }
  }
  // Pieces of two canonical sets are separated by gaps from at least one side.
  return SpanSet(std::move(out));
}

SpanSet unite(const SpanSet& a, const SpanSet& b) {
  std::vector<Span> out;
  out.reserve(a.intervals_.size() + b.intervals_.size());
  auto push = [&out](const Span& s) {
    if (!out.empty() && s.start <= out.back().end + 1) {
      out.back().end = std::max(out.back().end, s.end);
    } else {
      out.push_back(s);
    }
  };
  auto ia = a.intervals_.begin();
  auto ib = b.intervals_.begin();
  while (ia != a.intervals_.end() || ib != b.intervals_.end()) {
    if (ib == b.intervals_.end() || (ia != a.intervals_.end() && ia->start <= ib->start)) {
      push(*ia++);
    } else {
      push(*ib++);
    }
  }
  return SpanSet(std::move(out));
}

}  // namespace spanrl
