#include "spanrl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "spanrl/error.hpp"

namespace spanrl::sim {

namespace {

// Offsets the eval stream from the training stream for the same seed.
constexpr std::uint64_t kEvalStreamKey = 0x9E3779B97F4A7C15ULL;

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

std::string format_optional(const std::optional<double>& v) {
  return v ? fmt::format("{:.10g}", *v) : std::string("nan");
}

}  // namespace

void EnvConfig::validate() const {
  if (!(p_hallucinated > 0.0 && p_hallucinated < 1.0)) {
    throw ParameterError(fmt::format("p_hallucinated must be in (0, 1), got {}", p_hallucinated));
  }
  if (doc_len < 1 || span_len < 1 || span_len > doc_len) {
    throw ParameterError(fmt::format("need 1 <= span_len <= doc_len, got span_len {} doc_len {}",
                                     span_len, doc_len));
  }
  if (std::find(offset_grid.begin(), offset_grid.end(), 0) == offset_grid.end()) {
    throw ParameterError("offset_grid must contain 0");
  }
  std::vector<Offset> sorted = offset_grid;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ParameterError("offset_grid must not repeat a shift");
  }
  if (eval_set_size == 0) throw ParameterError("eval_set_size must be positive");
}

void TrainConfig::validate() const {
  if (steps < 1) throw ParameterError(fmt::format("steps must be >= 1, got {}", steps));
  if (eval_every < 1) {
    throw ParameterError(fmt::format("eval_every must be >= 1, got {}", eval_every));
  }
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ParameterError(fmt::format("learning rate must be finite and >= 0, got {}",
                                     learning_rate));
  }
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  // Largest multiple of n representable; draws at or above it are rejected.
  const std::uint64_t limit = (std::numeric_limits<std::uint64_t>::max() / n) * n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::size_t Rng::categorical(std::span<const double> probs) {
  const double u = uniform();
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  return probs.size() - 1;
}

SynExample gen_example(Rng& rng, const EnvConfig& env) {
  const bool hallucinated = rng.uniform() < env.p_hallucinated;
  // The anchor is drawn for clean examples too so the stream stays aligned.
  const auto anchor = static_cast<Offset>(rng.below(env.doc_len - env.span_len + 1));
  SynExample ex;
  ex.anchor = anchor;
  if (hallucinated) ex.gold = normalize({Span{anchor, anchor + env.span_len - 1}});
  return ex;
}

std::vector<Action> action_set(const EnvConfig& env) {
  std::vector<Action> actions;
  actions.reserve(env.offset_grid.size() + 1);
  for (Offset shift : env.offset_grid) actions.push_back(Action::predict(shift));
  actions.push_back(Action::predict_empty());
  return actions;
}

SpanSet predicted_spans(const Action& action, const SynExample& ex, const EnvConfig& env) {
  if (action.empty) return {};
  const Offset last = env.doc_len - 1;
  const Offset start = std::clamp<Offset>(ex.anchor + action.shift, 0, last);
  const Offset end = std::clamp<Offset>(ex.anchor + action.shift + env.span_len - 1, 0, last);
  return normalize({Span{start, end}});
}

double act_reward(const Action& action, const SynExample& ex, const EnvConfig& env) {
  return reward_span(predicted_spans(action, ex, env), ex.gold);
}

PolicyParams PolicyParams::uniform(const EnvConfig& env) {
  return PolicyParams{std::vector<double>(env.offset_grid.size() + 1, 0.0)};
}

std::vector<double> PolicyParams::probabilities() const { return softmax(logits); }

std::size_t PolicyParams::greedy() const {
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) -
                                  logits.begin());
}

std::vector<SynExample> make_eval_set(const EnvConfig& env, std::uint64_t seed) {
  Rng rng(seed ^ kEvalStreamKey);
  std::vector<SynExample> out;
  out.reserve(env.eval_set_size);
  for (std::size_t i = 0; i < env.eval_set_size; ++i) out.push_back(gen_example(rng, env));
  return out;
}

Prf eval_decisions(std::span<const SynExample> examples, const DecisionRule& rule,
                   const EnvConfig& env) {
  std::vector<ScoredExample> scored;
  scored.reserve(examples.size());
  for (const SynExample& ex : examples) {
    scored.push_back(score_example({}, predicted_spans(rule(ex), ex, env), ex.gold));
  }
  return prf_pooled(scored);
}

Prf eval_policy(const PolicyParams& params, const EnvConfig& env, std::uint64_t seed) {
  const std::vector<SynExample> examples = make_eval_set(env, seed);
  const Action chosen = action_set(env).at(params.greedy());
  return eval_decisions(examples, [&](const SynExample&) { return chosen; }, env);
}

TrainResult train(const EnvConfig& env, const AlgoConfig& algo, const TrainConfig& cfg,
                  std::optional<PolicyParams> initial) {
  env.validate();
  algo.validate();
  cfg.validate();

  const std::vector<Action> actions = action_set(env);
  PolicyParams params = initial ? std::move(*initial) : PolicyParams::uniform(env);
  if (params.logits.size() != actions.size()) {
    throw ParameterError(fmt::format("policy has {} logits for {} actions", params.logits.size(),
                                     actions.size()));
  }
  if (!all_finite(params.logits)) throw ParameterError("initial logits must be finite");

  const std::vector<SynExample> eval_set = make_eval_set(env, cfg.seed);
  Rng rng(cfg.seed);
  const std::size_t group_size = algo.group_size;

  TrainResult result;
  AdvantageAudit audit;
  double reward_sum = 0.0;
  std::int64_t window_steps = 0;

  std::vector<std::size_t> sampled(group_size);
  std::vector<double> rewards(group_size);
  std::vector<bool> gold_empty(group_size);
  std::vector<bool> pred_empty(group_size);

  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    const std::vector<double> old_probs = params.probabilities();
    const SynExample ex = gen_example(rng, env);

    for (std::size_t i = 0; i < group_size; ++i) {
      sampled[i] = rng.categorical(old_probs);
      const SpanSet pred = predicted_spans(actions[sampled[i]], ex, env);
      rewards[i] = algo.algo == Algo::drgrpo ? reward_span_gamma(pred, ex.gold, algo.gamma)
                                             : reward_span(pred, ex.gold);
      gold_empty[i] = ex.gold.empty();
      pred_empty[i] = pred.empty();
    }
    const RewardGroup group = make_reward_group(rewards, gold_empty, pred_empty, algo.class_mode);
    const AdvantageBatch batch = compute_advantages(group, algo);
    audit.add(batch, group);
    for (double r : rewards) reward_sum += r;
    ++window_steps;

    // Gradient of mean_i min(r_i A_i, clip(r_i) A_i) with respect to the
    // logits, where r_i = pi(a_i) / pi_old(a_i) and
    // d pi(a) / d logit_b = pi(a) (1[a == b] - pi(b)).
    const std::vector<double> probs = params.probabilities();
    std::vector<double> grad(actions.size(), 0.0);
    for (std::size_t i = 0; i < group_size; ++i) {
      const std::size_t a = sampled[i];
      const double ratio = probs[a] / old_probs[a];
      const double adv = batch.advantages[i];
      if (surrogate_clipped(ratio, adv, algo)) continue;
      const double scale = adv * ratio;
      for (std::size_t b = 0; b < actions.size(); ++b) grad[b] -= scale * probs[b];
      grad[a] += scale;
    }
    for (std::size_t b = 0; b < actions.size(); ++b) {
      params.logits[b] += cfg.learning_rate * grad[b] / static_cast<double>(group_size);
    }
    if (!all_finite(params.logits)) {
      throw DivergenceError(
          fmt::format("logits became non-finite at step {} (learning rate {})", step,
                      cfg.learning_rate));
    }

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const Action chosen = actions[params.greedy()];
      TraceRow row;
      row.step = step;
      row.eval = eval_decisions(eval_set, [&](const SynExample&) { return chosen; }, env);
      const AuditSummary s = audit.summary();
      row.mean_adv_empty = s.mean_empty;
      row.mean_adv_nonempty = s.mean_nonempty;
      row.reward_mean = reward_sum / static_cast<double>(window_steps * group_size);
      result.trace.push_back(row);
      audit.reset();
      reward_sum = 0.0;
      window_steps = 0;
    }
  }
  result.final_params = std::move(params);
  return result;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace) {
  out << "step,precision,recall,f1,mean_adv_empty,mean_adv_nonempty,reward_mean\n";
  for (const TraceRow& row : trace) {
    out << fmt::format("{},{:.10g},{:.10g},{:.10g},{},{},{:.10g}\n", row.step,
                       row.eval.precision, row.eval.recall, row.eval.f1,
                       format_optional(row.mean_adv_empty), format_optional(row.mean_adv_nonempty),
                       row.reward_mean);
  }
}

}  // namespace spanrl::sim
