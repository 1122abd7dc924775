#include "spanrl/policy_opt.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "spanrl/error.hpp"
#include "spanrl/scoring.hpp"

namespace spanrl {

namespace {

double mean(std::span<const double> xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs, double mu) {
  double sq = 0.0;
  for (double x : xs) sq += (x - mu) * (x - mu);
  return std::sqrt(sq / static_cast<double>(xs.size()));
}

}  // namespace

std::string_view to_string(Algo algo) {
  switch (algo) {
    case Algo::grpo:
      return "grpo";
    case Algo::capo:
      return "capo";
    case Algo::drgrpo:
      return "drgrpo";
  }
  return "unknown";
}

Algo parse_algo(std::string_view name) {
  for (Algo a : {Algo::grpo, Algo::capo, Algo::drgrpo}) {
    if (to_string(a) == name) return a;
  }
  throw ParameterError(fmt::format("unknown algorithm \"{}\"", name));
}

std::string_view to_string(ClassMode mode) {
  return mode == ClassMode::by_gold ? "by_gold" : "by_prediction";
}

ClassMode parse_class_mode(std::string_view name) {
  if (name == "by_gold") return ClassMode::by_gold;
  if (name == "by_prediction") return ClassMode::by_prediction;
  throw ParameterError(fmt::format("unknown class mode \"{}\"", name));
}

void AlgoConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ParameterError(fmt::format("alpha must be >= 0, got {}", alpha));
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ParameterError(fmt::format("gamma must be > 0, got {}", gamma));
  }
  if (!(eps_low > 0.0) || !(eps_high > 0.0)) {
    throw ParameterError(
        fmt::format("clip widths must be > 0, got ({}, {})", eps_low, eps_high));
  }
  if (!(std_floor >= 0.0)) {
    throw ParameterError(fmt::format("std_floor must be >= 0, got {}", std_floor));
  }
  if (group_size < 2) {
    throw ParameterError(fmt::format("group size must be >= 2, got {}", group_size));
  }
}

void RewardGroup::validate() const {
  if (rewards.size() < 2) {
    throw ParameterError(fmt::format("reward group needs G >= 2, got {}", rewards.size()));
  }
  if (sample_class.size() != rewards.size() || prediction_kind.size() != rewards.size()) {
    throw ParameterError(fmt::format("ragged reward group: {} rewards, {} classes, {} kinds",
                                     rewards.size(), sample_class.size(),
                                     prediction_kind.size()));
  }
  for (double r : rewards) {
    if (!std::isfinite(r)) throw ParameterError("reward group contains a non-finite reward");
  }
}

RewardGroup make_reward_group(std::vector<double> rewards, const std::vector<bool>& gold_empty,
                              const std::vector<bool>& pred_empty, ClassMode mode) {
  if (gold_empty.size() != rewards.size() || pred_empty.size() != rewards.size()) {
    throw ParameterError(fmt::format("ragged reward group: {} rewards, {} gold flags, {} pred flags",
                                     rewards.size(), gold_empty.size(), pred_empty.size()));
  }
  RewardGroup g;
  g.rewards = std::move(rewards);
  for (std::size_t i = 0; i < g.rewards.size(); ++i) {
    const bool clean = mode == ClassMode::by_gold ? gold_empty[i] : pred_empty[i];
    g.sample_class.push_back(clean ? SampleClass::clean : SampleClass::hallucinated);
    g.prediction_kind.push_back(pred_empty[i] ? PredictionKind::empty : PredictionKind::nonempty);
  }
  return g;
}

AdvantageBatch grpo_advantages(const RewardGroup& group, const AlgoConfig& cfg) {
  group.validate();
  const double mu = mean(group.rewards);
  const double sigma = population_std(group.rewards, mu);
  AdvantageBatch batch{std::vector<double>(group.size(), 0.0), Algo::grpo};
  if (sigma < cfg.std_floor) return batch;
  for (std::size_t i = 0; i < group.size(); ++i) {
    batch.advantages[i] = (group.rewards[i] - mu) / sigma;
  }
  return batch;
}

AdvantageBatch capo_advantages(const RewardGroup& group, const AlgoConfig& cfg) {
  AdvantageBatch batch = grpo_advantages(group, cfg);
  batch.algo = Algo::capo;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group.sample_class[i] == SampleClass::clean) batch.advantages[i] *= cfg.alpha;
  }
  return batch;
}

AdvantageBatch drgrpo_advantages(const RewardGroup& group, const AlgoConfig&) {
  group.validate();
  const double mu = mean(group.rewards);
  AdvantageBatch batch{std::vector<double>(group.size()), Algo::drgrpo};
  for (std::size_t i = 0; i < group.size(); ++i) batch.advantages[i] = group.rewards[i] - mu;
  return batch;
}

AdvantageBatch compute_advantages(const RewardGroup& group, const AlgoConfig& cfg) {
  switch (cfg.algo) {
    case Algo::grpo:
      return grpo_advantages(group, cfg);
    case Algo::capo:
      return capo_advantages(group, cfg);
    case Algo::drgrpo:
      return drgrpo_advantages(group, cfg);
  }
  throw ParameterError("unknown algorithm");
}

double reward_span_gamma(const SpanSet& pred, const SpanSet& gold, double gamma) {
  if (!(gamma > 0.0)) throw ParameterError(fmt::format("gamma must be > 0, got {}", gamma));
  if (pred.empty() && gold.empty()) return gamma;
  return reward_span(pred, gold);
}

double clipped_surrogate(double ratio, double advantage, const AlgoConfig& cfg) {
  const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
  return std::min(ratio * advantage, clipped * advantage);
}

bool surrogate_clipped(double ratio, double advantage, const AlgoConfig& cfg) {
  const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
  return clipped * advantage < ratio * advantage;
}

void AdvantageAudit::add(const AdvantageBatch& batch, const RewardGroup& group) {
  if (batch.advantages.size() != group.prediction_kind.size()) {
    throw ParameterError(fmt::format("{} advantages for a group of {}", batch.advantages.size(),
                                     group.prediction_kind.size()));
  }
  for (std::size_t i = 0; i < batch.advantages.size(); ++i) {
    if (group.prediction_kind[i] == PredictionKind::empty) {
      sum_empty_ += batch.advantages[i];
      ++count_empty_;
    } else {
      sum_nonempty_ += batch.advantages[i];
      ++count_nonempty_;
    }
  }
}

AuditSummary AdvantageAudit::summary() const {
  AuditSummary s;
  s.count_empty = count_empty_;
  s.count_nonempty = count_nonempty_;
  if (count_empty_ > 0) s.mean_empty = sum_empty_ / static_cast<double>(count_empty_);
  if (count_nonempty_ > 0) s.mean_nonempty = sum_nonempty_ / static_cast<double>(count_nonempty_);
  return s;
}

AuditSummary advantage_audit(std::span<const std::pair<AdvantageBatch, RewardGroup>> batches) {
  AdvantageAudit audit;
  for (const auto& [batch, group] : batches) audit.add(batch, group);
  return audit.summary();
}

}  // namespace spanrl
