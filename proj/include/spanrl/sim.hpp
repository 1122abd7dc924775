#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "spanrl/policy_opt.hpp"
#include "spanrl/scoring.hpp"
#include "spanrl/spans.hpp"

namespace spanrl::sim {

struct EnvConfig {
  double p_hallucinated = 0.4;
  Offset doc_len = 100;
  Offset span_len = 20;
  std::vector<Offset> offset_grid{0, 5, -5, 10, -10, 20, -20, 40, -40};
  std::size_t eval_set_size = 512;

  // Throws ParameterError when an invariant is violated.
  void validate() const;
};

/**
 * Portable random stream. Wraps std::mt19937_64, whose output sequence is
 * fixed by the standard, and derives uniforms and integers from raw 64-bit
 * draws so the same seed yields the same stream on every platform.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer in [0, n), n > 0, by rejection.
  std::uint64_t below(std::uint64_t n);
  // Index drawn from a probability vector by inverse CDF.
  std::size_t categorical(std::span<const double> probs);

 private:
  std::mt19937_64 engine_;
};

// A synthetic document. `anchor` is where a gold span sits (or would sit, on
// clean examples); predictions are placed relative to it.
struct SynExample {
  Offset anchor = 0;
  SpanSet gold;

  [[nodiscard]] bool hallucinated() const { return !gold.empty(); }
};

[[nodiscard]] SynExample gen_example(Rng& rng, const EnvConfig& env);

struct Action {
  bool empty = true;
  Offset shift = 0;

  [[nodiscard]] static Action predict_empty() { return {true, 0}; }
  [[nodiscard]] static Action predict(Offset shift) { return {false, shift}; }

  friend bool operator==(const Action&, const Action&) = default;
};

// PREDICT actions in offset_grid order, then EMPTY. Greedy ties resolve to the
// lowest index.
[[nodiscard]] std::vector<Action> action_set(const EnvConfig& env);

// Spans output by an action: EMPTY gives the empty set; PREDICT(shift) gives
// the gold-length window at anchor + shift with both endpoints clamped to the
// document, which is never empty.
[[nodiscard]] SpanSet predicted_spans(const Action& action, const SynExample& ex,
                                      const EnvConfig& env);

// reward_span of the action's prediction against the example's gold set.
[[nodiscard]] double act_reward(const Action& action, const SynExample& ex, const EnvConfig& env);

struct PolicyParams {
  std::vector<double> logits;

  [[nodiscard]] static PolicyParams uniform(const EnvConfig& env);
  [[nodiscard]] std::vector<double> probabilities() const;
  [[nodiscard]] std::size_t greedy() const;
};

struct TraceRow {
  std::int64_t step = 0;
  Prf eval;
  std::optional<double> mean_adv_empty;
  std::optional<double> mean_adv_nonempty;
  double reward_mean = 0.0;
};

struct TrainConfig {
  std::int64_t steps = 2000;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 50;

  void validate() const;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  PolicyParams final_params;
};

/**
 * One example per step. G actions are sampled from the step-start policy,
 * scored, turned into advantages by algo.algo, and the logits take one
 * gradient-ascent step on the mean clipped surrogate. A row is appended every
 * eval_every steps and after the final step; its audit and reward mean cover
 * the steps since the previous row.
 *
 * Throws DivergenceError if the logits become non-finite.
 */
[[nodiscard]] TrainResult train(const EnvConfig& env, const AlgoConfig& algo,
                                const TrainConfig& cfg,
                                std::optional<PolicyParams> initial = std::nullopt);

// Held-out examples drawn from a stream independent of the training stream.
[[nodiscard]] std::vector<SynExample> make_eval_set(const EnvConfig& env, std::uint64_t seed);

using DecisionRule = std::function<Action(const SynExample&)>;

// Pooled Prf of a decision rule over an example set.
[[nodiscard]] Prf eval_decisions(std::span<const SynExample> examples, const DecisionRule& rule,
                                 const EnvConfig& env);

// Pooled Prf of the greedy (argmax) action over the eval set for `seed`.
[[nodiscard]] Prf eval_policy(const PolicyParams& params, const EnvConfig& env,
                              std::uint64_t seed);

// Header plus one line per row; absent audit means are written as "nan".
void write_trace_csv(std::ostream& out, std::span<const TraceRow> trace);

}  // namespace spanrl::sim
