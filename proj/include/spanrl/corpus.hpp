#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spanrl/spans.hpp"

namespace spanrl {

enum class Task { summarization, qa, data2text };

inline constexpr std::array<Task, 3> kAllTasks{Task::summarization, Task::qa, Task::data2text};

// Wire name: "summarization", "qa", "data2text".
[[nodiscard]] std::string_view to_string(Task task);
// Reporting name: "Summarization", "QA", "Data-to-Text".
[[nodiscard]] std::string_view display_name(Task task);
[[nodiscard]] Task parse_task(std::string_view name);

// One annotated example. Spans are inclusive code-point offsets into response.
struct GoldRecord {
  std::string id;
  Task task = Task::summarization;
  std::string split;
  std::string context;
  std::string response;
  Offset response_length = 0;
  SpanSet gold_spans;
  std::optional<std::vector<std::string>> gold_texts;
};

// Validates span bounds and, when texts are given, that each text equals the
// response substring under its span.
[[nodiscard]] GoldRecord make_gold_record(std::string id, Task task, std::string context,
                                          std::string response, std::span<const Span> spans,
                                          std::optional<std::vector<std::string>> texts = {},
                                          std::string split = {});

struct RawPrediction {
  std::string id;
  std::optional<std::int64_t> sample_index;
  std::string output_text;
};

struct NormalizedPrediction {
  std::string id;
  std::optional<std::int64_t> sample_index;
  std::vector<std::string> segments;
  SpanSet spans;
  std::vector<std::string> unmatched;
  bool parse_ok = false;

  friend bool operator==(const NormalizedPrediction&, const NormalizedPrediction&) = default;
};

struct ExtractResult {
  std::vector<std::string> segments;
  bool parse_ok = false;
  // Non-string entries dropped from the selected list.
  std::size_t skipped_entries = 0;
};

// Finds every parseable JSON object embedded in free text and returns the
// string list under "hallucination list" (or "hallucination_list") from the
// last such object. Never throws on arbitrary text.
[[nodiscard]] ExtractResult extract_hallucination_list(std::string_view output_text);

enum class MatchMode {
  exact,
  // Exact first, then ASCII case-insensitive, then case-insensitive with
  // whitespace runs collapsed.
  with_fallback,
};

struct LocateResult {
  SpanSet spans;
  std::vector<std::string> unmatched;
  std::size_t fallback_matches = 0;
};

// Resolves each segment to its leftmost occurrence in response.
[[nodiscard]] LocateResult locate_segments(std::span<const std::string> segments,
                                           std::u32string_view response,
                                           MatchMode mode = MatchMode::exact);
[[nodiscard]] LocateResult locate_segments(std::span<const std::string> segments,
                                           std::string_view response,
                                           MatchMode mode = MatchMode::exact);

struct ParseDiagnostics {
  std::size_t records = 0;
  std::size_t parse_failures = 0;
  std::size_t skipped_entries = 0;
  std::size_t unmatched_segments = 0;
  std::size_t fallback_matches = 0;
};

[[nodiscard]] NormalizedPrediction normalize_prediction(const RawPrediction& raw,
                                                        const GoldRecord& gold,
                                                        MatchMode mode,
                                                        ParseDiagnostics& diagnostics);

// Line-delimited JSON readers. Blank lines are ignored. Errors carry the
// 1-based line number; duplicate ids (or duplicate (id, sample_index) pairs
// for multi-sample files) are rejected.
[[nodiscard]] std::vector<GoldRecord> read_gold(std::istream& in);
[[nodiscard]] std::vector<GoldRecord> read_gold(const std::filesystem::path& path);
[[nodiscard]] std::vector<RawPrediction> read_raw(std::istream& in);
[[nodiscard]] std::vector<RawPrediction> read_raw(const std::filesystem::path& path);
[[nodiscard]] std::vector<NormalizedPrediction> read_normalized(std::istream& in);
[[nodiscard]] std::vector<NormalizedPrediction> read_normalized(const std::filesystem::path& path);

void write_normalized(std::ostream& out, std::span<const NormalizedPrediction> predictions);
void write_normalized(const std::filesystem::path& path,
                      std::span<const NormalizedPrediction> predictions);

struct ClassWeights {
  double w_hallucinated = 1.0;
  double w_clean = 1.0;
};

// Upweights the hallucinated class so both classes carry equal total weight.
[[nodiscard]] ClassWeights balance_weights(std::int64_t n_hallucinated, std::int64_t n_clean);

struct ClassCounts {
  std::int64_t hallucinated = 0;
  std::int64_t clean = 0;

  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

using TaskCounts = std::array<ClassCounts, kAllTasks.size()>;

struct DatasetStats {
  TaskCounts total{};
  // Keyed by split label; records without one are counted under "all".
  std::map<std::string, TaskCounts> by_split;

  [[nodiscard]] const ClassCounts& operator[](Task task) const {
    return total[static_cast<std::size_t>(task)];
  }
};

[[nodiscard]] DatasetStats dataset_stats(std::span<const GoldRecord> records);

}  // namespace spanrl
