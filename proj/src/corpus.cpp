#include "spanrl/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <utility>

#include <fmt/format.h>
#include <json.hpp>

#include "spanrl/error.hpp"
#include "spanrl/utf8.hpp"

namespace spanrl {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 2> kListKeys{"hallucination list", "hallucination_list"};

// --- JSON field access -----------------------------------------------------

const json& field(const json& obj, std::string_view key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(fmt::format("missing field \"{}\"", key));
  return *it;
}

std::string string_field(const json& obj, std::string_view key) {
  const json& v = field(obj, key);
  if (!v.is_string()) throw ValidationError(fmt::format("field \"{}\" must be a string", key));
  return v.get<std::string>();
}

std::int64_t int_field(const json& obj, std::string_view key) {
  const json& v = field(obj, key);
  if (!v.is_number_integer()) {
    throw ValidationError(fmt::format("field \"{}\" must be an integer", key));
  }
  return v.get<std::int64_t>();
}

std::vector<std::string> string_list_field(const json& obj, std::string_view key) {
  const json& v = field(obj, key);
  if (!v.is_array()) throw ValidationError(fmt::format("field \"{}\" must be an array", key));
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_string()) {
      throw ValidationError(fmt::format("field \"{}\" must contain only strings", key));
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

// Half-open [start, end) objects to inclusive spans, bounds-checked.
std::vector<Span> half_open_spans(const json& obj, std::string_view key, Offset limit,
                                  std::vector<std::optional<std::string>>* texts) {
  const json& v = field(obj, key);
  if (!v.is_array()) throw ValidationError(fmt::format("field \"{}\" must be an array", key));
  std::vector<Span> spans;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const json& s = v[i];
    if (!s.is_object()) throw ValidationError(fmt::format("{}[{}] must be an object", key, i));
    const Offset start = int_field(s, "start");
    const Offset end = int_field(s, "end");
    if (start < 0 || end <= start) {
      throw ValidationError(fmt::format("{}[{}] = [{}, {}) is not a non-empty range", key, i,
                                        start, end));
    }
    if (limit >= 0 && end > limit) {
      throw ValidationError(fmt::format("{}[{}] = [{}, {}) exceeds response length {}", key,
                                        i, start, end, limit));
    }
    spans.push_back(Span::from_half_open(start, end));
    if (texts != nullptr) {
      texts->push_back(s.contains("text") ? std::optional(string_field(s, "text"))
                                          : std::nullopt);
    }
  }
  return spans;
}

json parse_line(const std::string& line) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ValidationError("malformed JSON");
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  return j;
}

bool blank(std::string_view line) {
  return line.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

// Runs fn(json, line_number) for every non-blank line, prefixing errors with
// the line number.
template <typename Fn>
void for_each_json_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (blank(line)) continue;
    try {
      fn(parse_line(line));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("line {}: {}", number, e.what()));
    } catch (const json::exception& e) {
      throw ValidationError(fmt::format("line {}: {}", number, e.what()));
    }
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  return in;
}

std::optional<std::int64_t> optional_sample_index(const json& obj) {
  if (!obj.contains("sample_index")) return std::nullopt;
  return int_field(obj, "sample_index");
}

void check_unique(std::set<std::pair<std::string, std::int64_t>>& seen, const std::string& id,
                  std::optional<std::int64_t> sample_index) {
  if (!seen.emplace(id, sample_index.value_or(-1)).second) {
    if (sample_index) {
      throw ValidationError(
          fmt::format("duplicate id \"{}\" with sample_index {}", id, *sample_index));
    }
    throw ValidationError(fmt::format("duplicate id \"{}\"", id));
  }
}

// --- segment matching ------------------------------------------------------

char32_t ascii_lower(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + (U'a' - U'A') : c; }

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
         c == 0x00A0 || c == 0x3000;
}

// Case-folded (and optionally whitespace-collapsed) text with a map from each
// folded position back to its source offset.
struct FoldedText {
  std::u32string text;
  std::vector<Offset> origin;
};

FoldedText fold(std::u32string_view s, bool collapse_whitespace) {
  FoldedText out;
  out.text.reserve(s.size());
  out.origin.reserve(s.size());
  bool in_space = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (collapse_whitespace && is_space(s[i])) {
      if (!in_space) {
        out.text.push_back(U' ');
        out.origin.push_back(static_cast<Offset>(i));
      }
      in_space = true;
      continue;
    }
    in_space = false;
    out.text.push_back(ascii_lower(s[i]));
    out.origin.push_back(static_cast<Offset>(i));
  }
  return out;
}

std::u32string trim(std::u32string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::u32string(s.substr(b, e - b));
}

std::optional<Span> find_folded(std::u32string_view needle, const FoldedText& haystack,
                                bool collapse_whitespace) {
  const FoldedText folded_needle = fold(needle, collapse_whitespace);
  if (folded_needle.text.empty()) return std::nullopt;
  const auto pos = haystack.text.find(folded_needle.text);
  if (pos == std::u32string::npos) return std::nullopt;
  return Span{haystack.origin[pos], haystack.origin[pos + folded_needle.text.size() - 1]};
}

// --- JSON extraction -------------------------------------------------------

// Index of the brace closing the object that opens at `open`, skipping braces
// inside string literals.
std::optional<std::size_t> closing_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::nullopt;
}

const json* hallucination_list(const json& obj) {
  for (std::string_view key : kListKeys) {
    auto it = obj.find(key);
    if (it != obj.end() && it->is_array()) return &*it;
  }
  return nullptr;
}

void check_span_bounds(const Span& s, std::size_t index, Offset length) {
  if (s.start < 0 || s.end >= length || s.start > s.end) {
    throw ValidationError(fmt::format("gold span {} [{}, {}] outside response of length {}",
                                      index, s.start, s.end, length));
  }
}

void check_span_text(std::u32string_view response, const Span& s, const std::string& text,
                     std::size_t index) {
  const std::string slice = utf8::encode(response.substr(s.start, s.size()));
  if (slice != text) {
    throw ValidationError(fmt::format(
        "gold span {} text \"{}\" does not match response substring \"{}\"", index, text, slice));
  }
}

}  // namespace

std::string_view to_string(Task task) {
  switch (task) {
    case Task::summarization:
      return "summarization";
    case Task::qa:
      return "qa";
    case Task::data2text:
      return "data2text";
  }
  return "unknown";
}

std::string_view display_name(Task task) {
  switch (task) {
    case Task::summarization:
      return "Summarization";
    case Task::qa:
      return "QA";
    case Task::data2text:
      return "Data-to-Text";
  }
  return "Unknown";
}

Task parse_task(std::string_view name) {
  for (Task t : kAllTasks) {
    if (to_string(t) == name) return t;
  }
  throw ValidationError(fmt::format("unknown task \"{}\"", name));
}

GoldRecord make_gold_record(std::string id, Task task, std::string context, std::string response,
                            std::span<const Span> spans,
                            std::optional<std::vector<std::string>> texts, std::string split) {
  const std::u32string cps = utf8::decode(response);
  const auto length = static_cast<Offset>(cps.size());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    check_span_bounds(spans[i], i, length);
  }
  if (texts) {
    if (texts->size() != spans.size()) {
      throw ValidationError(
          fmt::format("{} gold texts for {} gold spans", texts->size(), spans.size()));
    }
    for (std::size_t i = 0; i < spans.size(); ++i) check_span_text(cps, spans[i], (*texts)[i], i);
  }
  GoldRecord rec;
  rec.id = std::move(id);
  rec.task = task;
  rec.split = std::move(split);
  rec.context = std::move(context);
  rec.response = std::move(response);
  rec.response_length = length;
  rec.gold_spans = normalize(spans);
  rec.gold_texts = std::move(texts);
  return rec;
}

ExtractResult extract_hallucination_list(std::string_view output_text) {
  ExtractResult result;
  std::optional<json> best;
  for (std::size_t open = output_text.find('{'); open != std::string_view::npos;
       open = output_text.find('{', open + 1)) {
    const auto close = closing_brace(output_text, open);
    if (!close) continue;
    json obj = json::parse(output_text.substr(open, *close - open + 1), nullptr,
                           /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object() || hallucination_list(obj) == nullptr) continue;
    // Later starts win, so an answer printed after quoted examples is chosen.
    best = std::move(obj);
  }
  if (!best) return result;

  result.parse_ok = true;
  for (const json& entry : *hallucination_list(*best)) {
    if (entry.is_string()) {
      result.segments.push_back(entry.get<std::string>());
    } else {
      ++result.skipped_entries;
    }
  }
  return result;
}

LocateResult locate_segments(std::span<const std::string> segments, std::u32string_view response,
                             MatchMode mode) {
  LocateResult result;
  std::vector<Span> located;
  std::optional<FoldedText> folded;
  std::optional<FoldedText> collapsed;

  for (const std::string& segment : segments) {
    const std::u32string needle = utf8::decode(segment);
    if (needle.empty()) {
      result.unmatched.push_back(segment);
      continue;
    }
    const auto pos = response.find(needle);
    if (pos != std::u32string_view::npos) {
      located.push_back(
          {static_cast<Offset>(pos), static_cast<Offset>(pos + needle.size() - 1)});
      continue;
    }
    if (mode == MatchMode::with_fallback) {
      if (!folded) folded = fold(response, false);
      std::optional<Span> hit = find_folded(needle, *folded, false);
      if (!hit) {
        if (!collapsed) collapsed = fold(response, true);
        hit = find_folded(trim(needle), *collapsed, true);
      }
      if (hit) {
        located.push_back(*hit);
        ++result.fallback_matches;
        continue;
      }
    }
    result.unmatched.push_back(segment);
  }
  result.spans = normalize(located);
  return result;
}

LocateResult locate_segments(std::span<const std::string> segments, std::string_view response,
                             MatchMode mode) {
  return locate_segments(segments, std::u32string_view(utf8::decode(response)), mode);
}

NormalizedPrediction normalize_prediction(const RawPrediction& raw, const GoldRecord& gold,
                                          MatchMode mode, ParseDiagnostics& diagnostics) {
  ExtractResult extracted = extract_hallucination_list(raw.output_text);
  LocateResult located = locate_segments(extracted.segments, gold.response, mode);

  ++diagnostics.records;
  if (!extracted.parse_ok) ++diagnostics.parse_failures;
  diagnostics.skipped_entries += extracted.skipped_entries;
  diagnostics.unmatched_segments += located.unmatched.size();
  diagnostics.fallback_matches += located.fallback_matches;

  NormalizedPrediction out;
  out.id = raw.id;
  out.sample_index = raw.sample_index;
  out.segments = std::move(extracted.segments);
  out.spans = std::move(located.spans);
  out.unmatched = std::move(located.unmatched);
  out.parse_ok = extracted.parse_ok;
  return out;
}

std::vector<GoldRecord> read_gold(std::istream& in) {
  std::vector<GoldRecord> records;
  std::set<std::pair<std::string, std::int64_t>> seen;
  for_each_json_line(in, [&](const json& obj) {
    std::string id = string_field(obj, "id");
    check_unique(seen, id, std::nullopt);
    const Task task = parse_task(string_field(obj, "task"));
    std::string response = string_field(obj, "response");
    const std::u32string cps = utf8::decode(response);
    const auto length = static_cast<Offset>(cps.size());

    std::vector<std::optional<std::string>> maybe_texts;
    const std::vector<Span> spans = half_open_spans(obj, "spans", length, &maybe_texts);

    std::optional<std::vector<std::string>> texts;
    bool all_texts = !maybe_texts.empty();
    for (const auto& t : maybe_texts) all_texts = all_texts && t.has_value();
    if (all_texts) {
      texts.emplace();
      for (auto& t : maybe_texts) texts->push_back(std::move(*t));
    } else {
      // Validate whichever texts are present.
      for (std::size_t i = 0; i < spans.size(); ++i) {
        if (maybe_texts[i]) check_span_text(cps, spans[i], *maybe_texts[i], i);
      }
    }
    std::string split = obj.contains("split") ? string_field(obj, "split") : std::string{};
    records.push_back(make_gold_record(std::move(id), task, string_field(obj, "context"),
                                       std::move(response), spans, std::move(texts),
                                       std::move(split)));
  });
  return records;
}

std::vector<GoldRecord> read_gold(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_gold(in);
}

std::vector<RawPrediction> read_raw(std::istream& in) {
  std::vector<RawPrediction> out;
  std::set<std::pair<std::string, std::int64_t>> seen;
  for_each_json_line(in, [&](const json& obj) {
    RawPrediction raw;
    raw.id = string_field(obj, "id");
    raw.sample_index = optional_sample_index(obj);
    if (raw.sample_index && *raw.sample_index < 0) {
      throw ValidationError("sample_index must be non-negative");
    }
    check_unique(seen, raw.id, raw.sample_index);
    raw.output_text = string_field(obj, "output_text");
    out.push_back(std::move(raw));
  });
  return out;
}

std::vector<RawPrediction> read_raw(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_raw(in);
}

std::vector<NormalizedPrediction> read_normalized(std::istream& in) {
  std::vector<NormalizedPrediction> out;
  std::set<std::pair<std::string, std::int64_t>> seen;
  for_each_json_line(in, [&](const json& obj) {
    NormalizedPrediction p;
    p.id = string_field(obj, "id");
    p.sample_index = optional_sample_index(obj);
    check_unique(seen, p.id, p.sample_index);
    p.segments = string_list_field(obj, "segments");
    p.spans = normalize(half_open_spans(obj, "spans", -1, nullptr));
    p.unmatched = string_list_field(obj, "unmatched");
    const json& ok = field(obj, "parse_ok");
    if (!ok.is_boolean()) throw ValidationError("field \"parse_ok\" must be a boolean");
    p.parse_ok = ok.get<bool>();
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<NormalizedPrediction> read_normalized(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_normalized(in);
}

void write_normalized(std::ostream& out, std::span<const NormalizedPrediction> predictions) {
  for (const NormalizedPrediction& p : predictions) {
    nlohmann::ordered_json obj;
    obj["id"] = p.id;
    if (p.sample_index) obj["sample_index"] = *p.sample_index;
    obj["segments"] = p.segments;
    obj["spans"] = nlohmann::ordered_json::array();
    for (const Span& s : p.spans.intervals()) {
      obj["spans"].push_back({{"start", s.start}, {"end", s.half_open_end()}});
    }
    obj["unmatched"] = p.unmatched;
    obj["parse_ok"] = p.parse_ok;
    out << obj.dump() << '\n';
  }
}

void write_normalized(const std::filesystem::path& path,
                      std::span<const NormalizedPrediction> predictions) {
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  write_normalized(out, predictions);
}

ClassWeights balance_weights(std::int64_t n_hallucinated, std::int64_t n_clean) {
  if (n_hallucinated <= 0 || n_clean <= 0) {
    throw ParameterError(fmt::format("class counts must be positive, got ({}, {})",
                                     n_hallucinated, n_clean));
  }
  return {static_cast<double>(n_clean) / static_cast<double>(n_hallucinated), 1.0};
}

DatasetStats dataset_stats(std::span<const GoldRecord> records) {
  DatasetStats stats;
  for (const GoldRecord& rec : records) {
    const auto t = static_cast<std::size_t>(rec.task);
    TaskCounts& split = stats.by_split[rec.split.empty() ? "all" : rec.split];
    if (rec.gold_spans.empty()) {
      ++stats.total[t].clean;
      ++split[t].clean;
    } else {
      ++stats.total[t].hallucinated;
      ++split[t].hallucinated;
    }
  }
  return stats;
}

}  // namespace spanrl
