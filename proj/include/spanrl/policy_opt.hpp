#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "spanrl/spans.hpp"

namespace spanrl {

enum class Algo { grpo, capo, drgrpo };
enum class SampleClass { hallucinated, clean };
enum class PredictionKind { empty, nonempty };

// How CAPO decides whether a rollout belongs to the clean class.
enum class ClassMode {
  by_gold,        // gold span set of the prompt is empty
  by_prediction,  // the rollout predicted no spans
};

[[nodiscard]] std::string_view to_string(Algo algo);
[[nodiscard]] Algo parse_algo(std::string_view name);
[[nodiscard]] std::string_view to_string(ClassMode mode);
[[nodiscard]] ClassMode parse_class_mode(std::string_view name);

struct AlgoConfig {
  Algo algo = Algo::grpo;
  double alpha = 0.5;      // CAPO scale on clean-class advantages
  double gamma = 1.0;      // Dr.GRPO reward for a correct empty prediction
  double eps_low = 0.2;
  double eps_high = 0.28;
  double std_floor = 1e-8;
  std::size_t group_size = 16;
  ClassMode class_mode = ClassMode::by_gold;

  // Throws ParameterError when a field is outside its domain.
  void validate() const;
};

// The G rollouts of one prompt.
struct RewardGroup {
  std::vector<double> rewards;
  std::vector<SampleClass> sample_class;
  std::vector<PredictionKind> prediction_kind;

  [[nodiscard]] std::size_t size() const { return rewards.size(); }
  // Throws ParameterError unless all lists share one length G >= 2.
  void validate() const;
};

// Derives per-sample classes from emptiness flags under the given mode.
[[nodiscard]] RewardGroup make_reward_group(std::vector<double> rewards,
                                            const std::vector<bool>& gold_empty,
                                            const std::vector<bool>& pred_empty, ClassMode mode);

struct AdvantageBatch {
  std::vector<double> advantages;
  Algo algo = Algo::grpo;
};

/**
 * Group-normalized advantage (R_i - mean) / std with the population standard
 * deviation. When std < cfg.std_floor every advantage is exactly 0.
 */
[[nodiscard]] AdvantageBatch grpo_advantages(const RewardGroup& group, const AlgoConfig& cfg);

/**
 * GRPO advantages with every clean-class sample multiplied by cfg.alpha,
 * regardless of sign. Hallucinated-class samples are untouched.
 */
[[nodiscard]] AdvantageBatch capo_advantages(const RewardGroup& group, const AlgoConfig& cfg);

// Mean-centred rewards without standardization. Rewards are expected to come
// from reward_span_gamma.
[[nodiscard]] AdvantageBatch drgrpo_advantages(const RewardGroup& group, const AlgoConfig& cfg);

// Dispatches on cfg.algo.
[[nodiscard]] AdvantageBatch compute_advantages(const RewardGroup& group, const AlgoConfig& cfg);

// reward_span with the both-empty reward replaced by gamma (gamma > 0).
[[nodiscard]] double reward_span_gamma(const SpanSet& pred, const SpanSet& gold, double gamma);

// min(ratio * A, clip(ratio, 1 - eps_low, 1 + eps_high) * A) for ratio > 0.
[[nodiscard]] double clipped_surrogate(double ratio, double advantage, const AlgoConfig& cfg);

// True when the clipped branch is strictly smaller, i.e. the term has no
// gradient with respect to the ratio.
[[nodiscard]] bool surrogate_clipped(double ratio, double advantage, const AlgoConfig& cfg);

struct AuditSummary {
  std::optional<double> mean_empty;
  std::optional<double> mean_nonempty;
  std::size_t count_empty = 0;
  std::size_t count_nonempty = 0;
};

// Running mean of advantages split by whether the rollout predicted nothing.
class AdvantageAudit {
 public:
  void add(const AdvantageBatch& batch, const RewardGroup& group);
  [[nodiscard]] AuditSummary summary() const;
  void reset() { *this = AdvantageAudit{}; }

 private:
  double sum_empty_ = 0.0;
  double sum_nonempty_ = 0.0;
  std::size_t count_empty_ = 0;
  std::size_t count_nonempty_ = 0;
};

[[nodiscard]] AuditSummary advantage_audit(
    std::span<const std::pair<AdvantageBatch, RewardGroup>> batches);

}  // namespace spanrl
