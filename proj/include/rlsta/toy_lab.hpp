#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rlsta/grpo.hpp"
#include "rlsta/scenario.hpp"
#include "rlsta/toy_policy.hpp"

namespace rlsta {

// Sum of k single-digit operands. Single-turn surface "SUM a b =", multi-turn
// surface "SUM?" followed by one operand per user turn.
struct SumTask {
  int k = 3;
  int lo = 0;
  int hi = 9;

  void validate() const;
  std::vector<int> sample(Rng& rng) const;
  std::vector<std::vector<int>> all_instances() const;

  static std::string answer(const std::vector<int>& operands);
  static std::string single_turn_text(const std::vector<int>& operands);
  static std::vector<std::string> multi_turn_texts(const std::vector<int>& operands);
  static std::string problem_id(const std::vector<int>& operands);

  ShardedInstruction instruction(const std::vector<int>& operands) const;
  // MT-Add plan whose full instruction is the single-turn surface.
  TurnPlan plan(const std::vector<int>& operands) const;
};

// Exact accuracies, averaged uniformly over every operand tuple.
double exact_single_turn_accuracy(const ToyPolicy& policy, const SumTask& task, int max_tokens);
double exact_multi_turn_accuracy(const ToyPolicy& policy, const SumTask& task, int max_tokens);

// Exact probability that the reply to `history` (ending in a user turn) reads `gold`.
double exact_reply_accuracy(const ToyPolicy& policy, const std::vector<Turn>& history,
                            const std::string& gold, int max_tokens);

// Exact accuracy of the final reply of one multi-turn conversation, marginalizing
// over every intermediate reply.
double exact_conversation_accuracy(const ToyPolicy& policy, const std::vector<int>& operands,
                                   int max_tokens);

struct PretrainConfig {
  int steps = 5000;
  double lr = 0.5;
  std::uint64_t seed = 1;
  int max_tokens = 2;
  bool enforce_gap = true;  // single >= 0.9 and multi <= 0.5 * single, else error
};

struct PretrainResult {
  double single_acc = 0.0;
  double multi_acc = 0.0;
};

// Maximum likelihood on single-turn renderings only. The default row is trained as
// a unigram backoff over the same targets.
PretrainResult pretrain_single_turn(ToyPolicy& policy, const SumTask& task,
                                    const PretrainConfig& cfg);

struct RlstaConfig {
  SumTask task{2, 0, 4};
  int max_tokens = 2;
  int steps = 2000;
  int histories_per_step = 16;
  int group_size = 8;
  int filter_n = 8;
  std::optional<double> filter_delta;  // 1/filter_n when unset
  double learning_rate = 5.0;
  int updates_per_batch = 1;
  ObjectiveConfig objective;
  bool use_verifier = true;
  bool use_anchor = true;
  std::uint64_t seed = 1;
  int eval_every = 50;
};

struct MetricsRow {
  int step = 0;
  double single_acc = 0.0;
  double multi_acc = 0.0;
  double objective = 0.0;
  double kl = 0.0;
  int retained = 0;
  double mean_reward = 0.0;
  double clip_fraction = 0.0;
};

std::string metrics_header();
std::string format_metrics(const MetricsRow& row);
MetricsRow parse_metrics(const std::string& line);

// Sample histories -> filter -> groups -> R_v, R_s -> advantages -> GRPO step.
// `reference` is the frozen pretrained policy (KL and R_s). Rows are emitted at step
// 0, every eval_every steps and at the end.
std::vector<MetricsRow> run_rlsta_toy(ToyPolicy& policy, const ToyPolicy& reference,
                                      const RlstaConfig& cfg,
                                      const std::function<void(const MetricsRow&)>& on_row = {});

// Euclidean distance between two parameter vectors, both grown to the current layout.
double param_distance(const ToyPolicy& policy, const std::vector<double>& a,
                      const std::vector<double>& b);

}  // namespace rlsta
