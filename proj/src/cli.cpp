#include "spanrl/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "spanrl/corpus.hpp"
#include "spanrl/error.hpp"
#include "spanrl/policy_opt.hpp"
#include "spanrl/scoring.hpp"
#include "spanrl/sim.hpp"
#include "spanrl/version.hpp"

namespace spanrl::cli {

namespace {

using ojson = nlohmann::ordered_json;

struct ParseOptions {
  std::string raw;
  std::string gold;
  std::string out;
  std::string report;
  bool fallback = false;
};

struct ScoreOptions {
  std::string gold;
  std::string pred;
  std::string out;
  bool pooled = false;
  bool macro = false;
  bool by_task = false;
};

struct F1kOptions {
  std::string gold;
  std::string raw;
  std::string out;
  std::string report;
  std::vector<std::size_t> k;
  bool fallback = false;
};

struct RewardOptions {
  std::string gold;
  std::string pred;
  std::string out;
  std::string report;
  std::optional<double> gamma;
};

struct AdvantageOptions {
  std::string rewards;
  std::string out;
  std::string report;
  std::string algo = "grpo";
  std::string class_mode = "by_gold";
  double alpha = AlgoConfig{}.alpha;
  std::optional<double> gamma;
  std::size_t group_size = AlgoConfig{}.group_size;
};

struct SimulateOptions {
  std::string algo = "grpo";
  std::string class_mode = "by_gold";
  std::string out;
  std::int64_t steps = sim::TrainConfig{}.steps;
  std::optional<std::uint64_t> seed;
  double lr = sim::TrainConfig{}.learning_rate;
  std::int64_t eval_every = sim::TrainConfig{}.eval_every;
  double alpha = AlgoConfig{}.alpha;
  double gamma = AlgoConfig{}.gamma;
  std::size_t group_size = AlgoConfig{}.group_size;
  double p_hallucinated = sim::EnvConfig{}.p_hallucinated;
  Offset doc_len = sim::EnvConfig{}.doc_len;
  Offset span_len = sim::EnvConfig{}.span_len;
  std::size_t eval_set_size = sim::EnvConfig{}.eval_set_size;
  std::vector<Offset> offsets = sim::EnvConfig{}.offset_grid;
};

struct StatsOptions {
  std::string gold;
  std::string out;
};

// --- output helpers --------------------------------------------------------

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError(fmt::format("cannot write {}", path));
  return f;
}

void write_json(const std::string& path, const ojson& doc) {
  auto f = open_output(path);
  f << doc.dump(2) << '\n';
}

ojson report_skeleton(std::string_view command, ojson config) {
  ojson r;
  r["command"] = command;
  r["version"] = kVersion;
  r["config"] = std::move(config);
  return r;
}

ojson prf_json(const Prf& p) {
  return ojson{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

ojson optional_json(const std::optional<double>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

ojson score_row(const Prf& p, const std::vector<ScoredExample>& examples) {
  ojson row = prf_json(p);
  std::int64_t overlap = 0, pred_chars = 0, gold_chars = 0;
  for (const ScoredExample& e : examples) {
    overlap += e.overlap;
    pred_chars += e.pred_size;
    gold_chars += e.gold_size;
  }
  row["examples"] = examples.size();
  row["overlap_chars"] = overlap;
  row["pred_chars"] = pred_chars;
  row["gold_chars"] = gold_chars;
  return row;
}

std::string pct(double x) { return fmt::format("{:5.1f}", 100.0 * x); }

std::uint64_t default_seed() {
  const char* env = std::getenv("SPANRL_SEED");
  if (env == nullptr || *env == '\0') return 0;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || end == env || *end != '\0' || std::string_view(env).front() == '-') {
    throw ValidationError(fmt::format("SPANRL_SEED must be a non-negative integer, got \"{}\"",
                                      env));
  }
  return v;
}

std::map<std::string, const GoldRecord*> index_gold(const std::vector<GoldRecord>& gold) {
  std::map<std::string, const GoldRecord*> by_id;
  for (const GoldRecord& g : gold) by_id.emplace(g.id, &g);
  return by_id;
}

void check_within(const NormalizedPrediction& p, const GoldRecord& g) {
  if (!p.spans.empty() && p.spans.intervals().back().end >= g.response_length) {
    throw ValidationError(fmt::format("prediction for \"{}\" has a span past response length {}",
                                      p.id, g.response_length));
  }
}

// --- commands --------------------------------------------------------------

int cmd_parse(const ParseOptions& o, std::ostream& out, std::ostream& err) {
  const std::vector<GoldRecord> gold = read_gold(std::filesystem::path(o.gold));
  const std::vector<RawPrediction> raw = read_raw(std::filesystem::path(o.raw));
  const auto by_id = index_gold(gold);
  const MatchMode mode = o.fallback ? MatchMode::with_fallback : MatchMode::exact;

  ParseDiagnostics diag;
  std::vector<std::string> unknown;
  std::vector<NormalizedPrediction> normalized;
  normalized.reserve(raw.size());
  for (const RawPrediction& r : raw) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      unknown.push_back(r.id);
      err << fmt::format("warning: raw prediction \"{}\" has no gold record; skipped\n", r.id);
      continue;
    }
    normalized.push_back(normalize_prediction(r, *it->second, mode, diag));
  }
  write_normalized(std::filesystem::path(o.out), normalized);

  out << fmt::format(
      "parsed {} records: {} without a hallucination list, {} unmatched segments, {} fallback "
      "matches, {} unknown ids\n",
      diag.records, diag.parse_failures, diag.unmatched_segments, diag.fallback_matches,
      unknown.size());

  if (!o.report.empty()) {
    ojson r = report_skeleton("parse", {{"raw", o.raw},
                                        {"gold", o.gold},
                                        {"out", o.out},
                                        {"fallback_match", o.fallback}});
    r["results"] = {{"records", diag.records}};
    r["diagnostics"] = {{"parse_failures", diag.parse_failures},
                        {"skipped_entries", diag.skipped_entries},
                        {"unmatched_segments", diag.unmatched_segments},
                        {"fallback_matches", diag.fallback_matches},
                        {"unknown_ids", unknown}};
    write_json(o.report, r);
  }
  return kSuccess;
}

int cmd_score(const ScoreOptions& o, std::ostream& out, std::ostream& err) {
  const Aggregation mode = o.macro ? Aggregation::macro : Aggregation::pooled;
  const std::vector<GoldRecord> gold = read_gold(std::filesystem::path(o.gold));
  const std::vector<NormalizedPrediction> preds = read_normalized(std::filesystem::path(o.pred));
  const auto by_id = index_gold(gold);

  std::map<std::string, const NormalizedPrediction*> pred_by_id;
  std::vector<std::string> unknown;
  for (const NormalizedPrediction& p : preds) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) {
      unknown.push_back(p.id);
      err << fmt::format("warning: prediction \"{}\" has no gold record; ignored\n", p.id);
      continue;
    }
    if (!pred_by_id.emplace(p.id, &p).second) {
      throw ValidationError(fmt::format(
          "id \"{}\" has several predictions; score expects one per example (use f1k)", p.id));
    }
    check_within(p, *it->second);
  }

  std::vector<std::string> missing;
  std::array<std::vector<ScoredExample>, kAllTasks.size()> per_task;
  std::vector<ScoredExample> all;
  for (const GoldRecord& g : gold) {
    auto it = pred_by_id.find(g.id);
    SpanSet pred;
    if (it == pred_by_id.end()) {
      missing.push_back(g.id);
    } else {
      pred = it->second->spans;
    }
    ScoredExample ex = score_example(g.id, std::move(pred), g.gold_spans);
    per_task[static_cast<std::size_t>(g.task)].push_back(ex);
    all.push_back(std::move(ex));
  }
  if (!missing.empty()) {
    err << fmt::format("warning: {} gold examples have no prediction; scored as empty\n",
                       missing.size());
  }

  ojson results;
  results["aggregation"] = mode == Aggregation::pooled ? "pooled" : "macro";
  out << fmt::format("{:<14} {:>5} {:>5} {:>5} {:>6}\n", "", "P", "R", "F1", "n");
  if (o.by_task) {
    ojson tasks = ojson::object();
    for (Task t : kAllTasks) {
      const auto& examples = per_task[static_cast<std::size_t>(t)];
      if (examples.empty()) continue;
      const Prf p = aggregate(examples, mode);
      out << fmt::format("{:<14} {} {} {} {:>6}\n", display_name(t), pct(p.precision),
                         pct(p.recall), pct(p.f1), examples.size());
      tasks[std::string(to_string(t))] = score_row(p, examples);
    }
    results["by_task"] = std::move(tasks);
  }
  const Prf overall = aggregate(all, mode);
  out << fmt::format("{:<14} {} {} {} {:>6}\n", "Overall", pct(overall.precision),
                     pct(overall.recall), pct(overall.f1), all.size());
  results["overall"] = score_row(overall, all);

  if (!o.out.empty()) {
    ojson r = report_skeleton("score", {{"gold", o.gold},
                                        {"pred", o.pred},
                                        {"aggregation", results["aggregation"]},
                                        {"by_task", o.by_task}});
    r["results"] = std::move(results);
    r["diagnostics"] = {{"missing_predictions", missing}, {"unknown_ids", unknown}};
    write_json(o.out, r);
  }
  return kSuccess;
}

int cmd_f1k(const F1kOptions& o, std::ostream& out, std::ostream& err) {
  if (o.k.empty()) throw ParameterError("--k needs at least one value");
  for (std::size_t k : o.k) {
    if (k == 0) throw ParameterError("--k values must be positive");
  }
  std::vector<std::size_t> ks = o.k;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  const std::size_t k_max = ks.back();

  const std::vector<GoldRecord> gold = read_gold(std::filesystem::path(o.gold));
  const std::vector<RawPrediction> raw = read_raw(std::filesystem::path(o.raw));
  const auto by_id = index_gold(gold);
  const MatchMode mode = o.fallback ? MatchMode::with_fallback : MatchMode::exact;

  // id -> (sample_index, spans), later sorted by sample index.
  std::map<std::string, std::vector<std::pair<std::int64_t, SpanSet>>> samples;
  ParseDiagnostics diag;
  std::vector<std::string> unknown;
  for (const RawPrediction& r : raw) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      unknown.push_back(r.id);
      err << fmt::format("warning: raw prediction \"{}\" has no gold record; skipped\n", r.id);
      continue;
    }
    NormalizedPrediction p = normalize_prediction(r, *it->second, mode, diag);
    samples[r.id].emplace_back(r.sample_index.value_or(0), std::move(p.spans));
  }

  std::array<std::vector<std::vector<SpanSet>>, kAllTasks.size()> candidates;
  std::array<std::vector<SpanSet>, kAllTasks.size()> golds;
  for (const GoldRecord& g : gold) {
    auto it = samples.find(g.id);
    const std::size_t have = it == samples.end() ? 0 : it->second.size();
    if (have < k_max) {
      throw ValidationError(
          fmt::format("id \"{}\" has {} samples but K = {} was requested", g.id, have, k_max));
    }
    auto& list = it->second;
    std::sort(list.begin(), list.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<SpanSet> ordered;
    for (auto& [_, spans] : list) ordered.push_back(spans);
    const auto t = static_cast<std::size_t>(g.task);
    candidates[t].push_back(std::move(ordered));
    golds[t].push_back(g.gold_spans);
  }

  std::vector<std::vector<SpanSet>> all_candidates;
  std::vector<SpanSet> all_gold;
  for (std::size_t t = 0; t < kAllTasks.size(); ++t) {
    all_candidates.insert(all_candidates.end(), candidates[t].begin(), candidates[t].end());
    all_gold.insert(all_gold.end(), golds[t].begin(), golds[t].end());
  }

  std::string csv = "k,task,f1\n";
  ojson curve = ojson::array();
  for (std::size_t k : ks) {
    for (Task task : kAllTasks) {
      const auto t = static_cast<std::size_t>(task);
      if (golds[t].empty()) continue;
      const double f1 = mean_f1_at_k(candidates[t], golds[t], k);
      csv += fmt::format("{},{},{:.10g}\n", k, to_string(task), f1);
      curve.push_back({{"k", k}, {"task", to_string(task)}, {"f1", f1}});
    }
    const double f1 = mean_f1_at_k(all_candidates, all_gold, k);
    csv += fmt::format("{},all,{:.10g}\n", k, f1);
    curve.push_back({{"k", k}, {"task", "all"}, {"f1", f1}});
  }

  if (o.out.empty()) {
    out << csv;
  } else {
    auto f = open_output(o.out);
    f << csv;
  }
  if (!o.report.empty()) {
    ojson r = report_skeleton("f1k", {{"gold", o.gold},
                                      {"raw", o.raw},
                                      {"k", ks},
                                      {"fallback_match", o.fallback}});
    r["results"] = std::move(curve);
    r["diagnostics"] = {{"parse_failures", diag.parse_failures},
                        {"unmatched_segments", diag.unmatched_segments},
                        {"unknown_ids", unknown}};
    write_json(o.report, r);
  }
  return kSuccess;
}

int cmd_reward(const RewardOptions& o, std::ostream& out, std::ostream& err) {
  if (o.gamma && !(*o.gamma > 0.0)) throw ParameterError("--gamma must be > 0");
  const std::vector<GoldRecord> gold = read_gold(std::filesystem::path(o.gold));
  const std::vector<NormalizedPrediction> preds = read_normalized(std::filesystem::path(o.pred));
  const auto by_id = index_gold(gold);

  std::map<std::string, std::vector<const NormalizedPrediction*>> grouped;
  std::vector<std::string> unknown;
  for (const NormalizedPrediction& p : preds) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) {
      unknown.push_back(p.id);
      err << fmt::format("warning: prediction \"{}\" has no gold record; ignored\n", p.id);
      continue;
    }
    check_within(p, *it->second);
    grouped[p.id].push_back(&p);
  }

  std::string lines;
  std::vector<std::string> missing;
  const SpanSet no_prediction;
  for (const GoldRecord& g : gold) {
    std::vector<const SpanSet*> group;
    auto it = grouped.find(g.id);
    if (it == grouped.end()) {
      missing.push_back(g.id);
      group.push_back(&no_prediction);
    } else {
      auto& list = it->second;
      std::stable_sort(list.begin(), list.end(), [](const auto* a, const auto* b) {
        return a->sample_index.value_or(0) < b->sample_index.value_or(0);
      });
      for (const auto* p : list) group.push_back(&p->spans);
    }
    ojson row;
    row["prompt_id"] = g.id;
    row["rewards"] = ojson::array();
    row["gold_empty"] = ojson::array();
    row["pred_empty"] = ojson::array();
    for (const SpanSet* pred : group) {
      const double r = o.gamma ? reward_span_gamma(*pred, g.gold_spans, *o.gamma)
                               : reward_span(*pred, g.gold_spans);
      row["rewards"].push_back(r);
      row["gold_empty"].push_back(g.gold_spans.empty());
      row["pred_empty"].push_back(pred->empty());
    }
    lines += row.dump() + "\n";
  }
  if (!missing.empty()) {
    err << fmt::format("warning: {} gold examples have no prediction; rewarded as empty\n",
                       missing.size());
  }

  if (o.out.empty()) {
    out << lines;
  } else {
    auto f = open_output(o.out);
    f << lines;
  }
  if (!o.report.empty()) {
    ojson config = {{"gold", o.gold}, {"pred", o.pred}, {"out", o.out}};
    config["gamma"] = optional_json(o.gamma);
    ojson r = report_skeleton("reward", std::move(config));
    r["results"] = {{"prompts", gold.size()}};
    r["diagnostics"] = {{"missing_predictions", missing}, {"unknown_ids", unknown}};
    write_json(o.report, r);
  }
  return kSuccess;
}

std::vector<bool> bool_list(const nlohmann::json& obj, std::string_view key,
                            const std::string& prompt_id) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array()) {
    throw ValidationError(fmt::format("prompt_id \"{}\": \"{}\" must be an array", prompt_id, key));
  }
  std::vector<bool> out;
  for (const auto& v : *it) {
    if (!v.is_boolean()) {
      throw ValidationError(
          fmt::format("prompt_id \"{}\": \"{}\" must contain booleans", prompt_id, key));
    }
    out.push_back(v.get<bool>());
  }
  return out;
}

int cmd_advantages(const AdvantageOptions& o, std::ostream& out, std::ostream&) {
  AlgoConfig cfg;
  cfg.algo = parse_algo(o.algo);
  cfg.class_mode = parse_class_mode(o.class_mode);
  cfg.alpha = o.alpha;
  if (o.gamma) cfg.gamma = *o.gamma;
  cfg.group_size = o.group_size;
  cfg.validate();

  std::ifstream in(o.rewards);
  if (!in) throw ValidationError(fmt::format("cannot open {}", o.rewards));

  std::string lines;
  AdvantageAudit audit;
  std::size_t groups = 0;
  std::set<std::string> seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw ValidationError(fmt::format("line {}: malformed JSON", number));
    }
    if (!obj.contains("prompt_id") || !obj["prompt_id"].is_string()) {
      throw ValidationError(fmt::format("line {}: missing string field \"prompt_id\"", number));
    }
    const std::string id = obj["prompt_id"].get<std::string>();
    if (!seen.insert(id).second) {
      throw ValidationError(fmt::format("line {}: duplicate prompt_id \"{}\"", number, id));
    }
    if (!obj.contains("rewards") || !obj["rewards"].is_array()) {
      throw ValidationError(fmt::format("prompt_id \"{}\": \"rewards\" must be an array", id));
    }
    std::vector<double> rewards;
    for (const auto& v : obj["rewards"]) {
      if (!v.is_number()) {
        throw ValidationError(fmt::format("prompt_id \"{}\": rewards must be numbers", id));
      }
      rewards.push_back(v.get<double>());
    }
    const std::vector<bool> gold_empty = bool_list(obj, "gold_empty", id);
    const std::vector<bool> pred_empty = bool_list(obj, "pred_empty", id);
    if (rewards.size() != cfg.group_size || gold_empty.size() != cfg.group_size ||
        pred_empty.size() != cfg.group_size) {
      throw ValidationError(fmt::format(
          "prompt_id \"{}\" is ragged: {} rewards, {} gold flags, {} pred flags, group size {}", id,
          rewards.size(), gold_empty.size(), pred_empty.size(), cfg.group_size));
    }
    if (cfg.algo == Algo::drgrpo && o.gamma) {
      // Re-derive the both-empty reward so plain span rewards can be reused.
      for (std::size_t i = 0; i < rewards.size(); ++i) {
        if (gold_empty[i] && pred_empty[i]) rewards[i] = *o.gamma;
      }
    }

    const RewardGroup group = make_reward_group(rewards, gold_empty, pred_empty, cfg.class_mode);
    const AdvantageBatch batch = compute_advantages(group, cfg);
    audit.add(batch, group);
    ++groups;

    ojson row;
    row["prompt_id"] = id;
    row["rewards"] = group.rewards;
    row["gold_empty"] = gold_empty;
    row["pred_empty"] = pred_empty;
    row["advantages"] = batch.advantages;
    row["algo"] = to_string(batch.algo);
    lines += row.dump() + "\n";
  }

  auto f = open_output(o.out);
  f << lines;

  const AuditSummary s = audit.summary();
  auto show = [](const std::optional<double>& v) {
    return v ? fmt::format("{:+.4f}", *v) : std::string("absent");
  };
  out << fmt::format("{} groups, algo {}\n", groups, to_string(cfg.algo));
  out << fmt::format("mean advantage | empty prediction:    {} (n={})\n", show(s.mean_empty),
                     s.count_empty);
  out << fmt::format("mean advantage | nonempty prediction: {} (n={})\n", show(s.mean_nonempty),
                     s.count_nonempty);

  if (!o.report.empty()) {
    ojson config = {{"rewards", o.rewards},      {"out", o.out},
                    {"algo", to_string(cfg.algo)}, {"alpha", cfg.alpha},
                    {"group_size", cfg.group_size}, {"class_mode", to_string(cfg.class_mode)},
                    {"std_floor", cfg.std_floor}};
    config["gamma"] = optional_json(o.gamma);
    ojson r = report_skeleton("advantages", std::move(config));
    r["results"] = {{"groups", groups},
                    {"audit",
                     {{"mean_adv_empty", optional_json(s.mean_empty)},
                      {"mean_adv_nonempty", optional_json(s.mean_nonempty)},
                      {"count_empty", s.count_empty},
                      {"count_nonempty", s.count_nonempty}}}};
    r["diagnostics"] = ojson::object();
    write_json(o.report, r);
  }
  return kSuccess;
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream&) {
  sim::EnvConfig env;
  env.p_hallucinated = o.p_hallucinated;
  env.doc_len = o.doc_len;
  env.span_len = o.span_len;
  env.offset_grid = o.offsets;
  env.eval_set_size = o.eval_set_size;

  AlgoConfig algo;
  algo.algo = parse_algo(o.algo);
  algo.class_mode = parse_class_mode(o.class_mode);
  algo.alpha = o.alpha;
  algo.gamma = o.gamma;
  algo.group_size = o.group_size;

  sim::TrainConfig train;
  train.steps = o.steps;
  train.learning_rate = o.lr;
  train.seed = o.seed ? *o.seed : default_seed();
  train.eval_every = o.eval_every;

  env.validate();
  algo.validate();
  train.validate();

  ojson config;
  config["env"] = {{"p_hallucinated", env.p_hallucinated},
                   {"doc_len", env.doc_len},
                   {"span_len", env.span_len},
                   {"offset_grid", env.offset_grid},
                   {"eval_set_size", env.eval_set_size}};
  config["algo"] = {{"algo", to_string(algo.algo)},     {"alpha", algo.alpha},
                    {"gamma", algo.gamma},              {"eps_low", algo.eps_low},
                    {"eps_high", algo.eps_high},        {"std_floor", algo.std_floor},
                    {"group_size", algo.group_size},    {"class_mode", to_string(algo.class_mode)}};
  config["train"] = {{"steps", train.steps},
                     {"learning_rate", train.learning_rate},
                     {"seed", train.seed},
                     {"eval_every", train.eval_every}};

  const sim::TrainResult result = sim::train(env, algo, train);

  {
    auto f = open_output(o.out + ".csv");
    sim::write_trace_csv(f, result.trace);
  }
  write_json(o.out + ".json", report_skeleton("simulate", config));

  const sim::TraceRow& last = result.trace.back();
  out << fmt::format("{} seed {}: step {} precision {:.4f} recall {:.4f} f1 {:.4f}\n",
                     to_string(algo.algo), train.seed, last.step, last.eval.precision,
                     last.eval.recall, last.eval.f1);
  return kSuccess;
}

int cmd_stats(const StatsOptions& o, std::ostream& out, std::ostream&) {
  const std::vector<GoldRecord> gold = read_gold(std::filesystem::path(o.gold));
  const DatasetStats stats = dataset_stats(gold);

  ojson splits = ojson::object();
  out << fmt::format("{:<10} {:<14} {:>12} {:>8} {:>10}\n", "split", "task", "hallucinated",
                     "clean", "w_halluc");
  for (const auto& [split, counts] : stats.by_split) {
    ojson tasks = ojson::object();
    for (Task t : kAllTasks) {
      const ClassCounts& c = counts[static_cast<std::size_t>(t)];
      ojson row = {{"hallucinated", c.hallucinated}, {"clean", c.clean}};
      std::string weight = "-";
      if (c.hallucinated > 0 && c.clean > 0) {
        const ClassWeights w = balance_weights(c.hallucinated, c.clean);
        row["w_hallucinated"] = w.w_hallucinated;
        row["w_clean"] = w.w_clean;
        weight = fmt::format("{:.5f}", w.w_hallucinated);
      }
      out << fmt::format("{:<10} {:<14} {:>12} {:>8} {:>10}\n", split, display_name(t),
                         c.hallucinated, c.clean, weight);
      tasks[std::string(to_string(t))] = std::move(row);
    }
    splits[split] = std::move(tasks);
  }
  if (!o.out.empty()) {
    ojson r = report_skeleton("stats", {{"gold", o.gold}});
    r["results"] = std::move(splits);
    r["diagnostics"] = ojson::object();
    write_json(o.out, r);
  }
  return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Span-level hallucination detection scoring and group-relative policy tools"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  ParseOptions parse;
  auto* parse_cmd = app.add_subcommand("parse", "Extract hallucination lists from raw outputs");
  parse_cmd->add_option("--raw", parse.raw, "Raw predictions JSONL")->required();
  parse_cmd->add_option("--gold", parse.gold, "Gold JSONL")->required();
  parse_cmd->add_option("--out", parse.out, "Normalized predictions JSONL")->required();
  parse_cmd->add_option("--report", parse.report, "Run report JSON");
  parse_cmd->add_flag("--fallback-match", parse.fallback,
                      "Retry unmatched segments case-insensitively, then whitespace-collapsed");

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Span precision / recall / F1");
  score_cmd->add_option("--gold", score.gold, "Gold JSONL")->required();
  score_cmd->add_option("--pred", score.pred, "Normalized predictions JSONL")->required();
  score_cmd->add_option("--out", score.out, "Report JSON");
  auto* pooled_flag = score_cmd->add_flag("--pooled", score.pooled, "Pool counts (default)");
  auto* macro_flag = score_cmd->add_flag("--macro", score.macro, "Average per-example scores");
  pooled_flag->excludes(macro_flag);
  score_cmd->add_flag("--by-task", score.by_task, "Break results down by task");

  F1kOptions f1k;
  auto* f1k_cmd = app.add_subcommand("f1k", "Best-of-K span F1 curve");
  f1k_cmd->add_option("--gold", f1k.gold, "Gold JSONL")->required();
  f1k_cmd->add_option("--raw", f1k.raw, "Multi-sample raw predictions JSONL")->required();
  f1k_cmd->add_option("--k", f1k.k, "K values, e.g. --k 1,2,4")->required()->delimiter(',');
  f1k_cmd->add_option("--out", f1k.out, "CSV output (stdout when omitted)");
  f1k_cmd->add_option("--report", f1k.report, "Run report JSON");
  f1k_cmd->add_flag("--fallback-match", f1k.fallback, "Enable fallback segment matching");

  RewardOptions reward;
  auto* reward_cmd = app.add_subcommand("reward", "Span rewards grouped by prompt");
  reward_cmd->add_option("--gold", reward.gold, "Gold JSONL")->required();
  reward_cmd->add_option("--pred", reward.pred, "Normalized predictions JSONL")->required();
  reward_cmd->add_option("--gamma", reward.gamma, "Reward for a correct empty prediction");
  reward_cmd->add_option("--out", reward.out, "Rewards JSONL (stdout when omitted)");
  reward_cmd->add_option("--report", reward.report, "Run report JSON");

  AdvantageOptions adv;
  auto* adv_cmd = app.add_subcommand("advantages", "Group advantages and class audit");
  adv_cmd->add_option("--rewards", adv.rewards, "Rewards JSONL")->required();
  adv_cmd->add_option("--out", adv.out, "Advantages JSONL")->required();
  adv_cmd->add_option("--algo", adv.algo, "grpo, capo or drgrpo")
      ->check(CLI::IsMember({"grpo", "capo", "drgrpo"}))
      ->capture_default_str();
  adv_cmd->add_option("--alpha", adv.alpha, "CAPO scale")->capture_default_str();
  adv_cmd->add_option("--gamma", adv.gamma, "Dr.GRPO both-empty reward");
  adv_cmd->add_option("--group-size", adv.group_size, "Rollouts per prompt")
      ->capture_default_str();
  adv_cmd->add_option("--class-mode", adv.class_mode, "by_gold or by_prediction")
      ->check(CLI::IsMember({"by_gold", "by_prediction"}))
      ->capture_default_str();
  adv_cmd->add_option("--report", adv.report, "Run report JSON");

  SimulateOptions simo;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the bandit policy-gradient simulator");
  sim_cmd->add_option("--out", simo.out, "Output prefix for <prefix>.csv and <prefix>.json")
      ->required();
  sim_cmd->add_option("--algo", simo.algo, "grpo, capo or drgrpo")
      ->check(CLI::IsMember({"grpo", "capo", "drgrpo"}))
      ->capture_default_str();
  sim_cmd->add_option("--steps", simo.steps, "Training steps")->capture_default_str();
  sim_cmd->add_option("--seed", simo.seed, "Seed (default: $SPANRL_SEED or 0)");
  sim_cmd->add_option("--lr", simo.lr, "Learning rate")->capture_default_str();
  sim_cmd->add_option("--eval-every", simo.eval_every, "Steps between trace rows")
      ->capture_default_str();
  sim_cmd->add_option("--alpha", simo.alpha, "CAPO scale")->capture_default_str();
  sim_cmd->add_option("--gamma", simo.gamma, "Dr.GRPO both-empty reward")->capture_default_str();
  sim_cmd->add_option("--group-size", simo.group_size, "Rollouts per step")->capture_default_str();
  sim_cmd->add_option("--class-mode", simo.class_mode, "by_gold or by_prediction")
      ->check(CLI::IsMember({"by_gold", "by_prediction"}))
      ->capture_default_str();
  sim_cmd->add_option("--p-hallucinated", simo.p_hallucinated, "Hallucinated example rate")
      ->capture_default_str();
  sim_cmd->add_option("--doc-len", simo.doc_len, "Document length")->capture_default_str();
  sim_cmd->add_option("--span-len", simo.span_len, "Gold span length")->capture_default_str();
  sim_cmd->add_option("--eval-set-size", simo.eval_set_size, "Held-out examples")
      ->capture_default_str();
  sim_cmd->add_option("--offsets", simo.offsets, "Predictable shifts, e.g. 0,5,-5")
      ->delimiter(',');

  StatsOptions stats;
  auto* stats_cmd = app.add_subcommand("stats", "Class counts and balance weights");
  stats_cmd->add_option("--gold", stats.gold, "Gold JSONL")->required();
  stats_cmd->add_option("--out", stats.out, "Report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kValidationFailure;
  }

  try {
    if (parse_cmd->parsed()) return cmd_parse(parse, out, err);
    if (score_cmd->parsed()) return cmd_score(score, out, err);
    if (f1k_cmd->parsed()) return cmd_f1k(f1k, out, err);
    if (reward_cmd->parsed()) return cmd_reward(reward, out, err);
    if (adv_cmd->parsed()) return cmd_advantages(adv, out, err);
    if (sim_cmd->parsed()) return cmd_simulate(simo, out, err);
    if (stats_cmd->parsed()) return cmd_stats(stats, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kInternalError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace spanrl::cli
