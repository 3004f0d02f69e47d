#pragma once

#include <vector>

#include "rlsta/backend.hpp"
#include "rlsta/group.hpp"
#include "rlsta/verifier.hpp"

namespace rlsta {

inline constexpr double kDefaultStdEpsilon = 1e-8;

// exp(mean token logprob). Throws on an empty list.
double anchor_reward(const std::vector<double>& logprobs);
double anchor_reward(const ScoredCompletion& scored);

// r_v + alpha * r_s with alpha = 1/G.
double combine(int r_v, double r_s, int group_size);
double default_alpha(int group_size);

// Population z-scores; all zero when std < eps.
std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double eps_std = kDefaultStdEpsilon);

struct RewardOptions {
  bool use_verifier = true;  // false zeroes R_v
  bool use_anchor = true;    // false sets alpha = 0
  ExtractMode verifier_mode = ExtractMode::boxed_then_last_number;
  std::string system_prompt = std::string(kDefaultSystemPrompt);
  double eps_std = kDefaultStdEpsilon;
};

// Fills group.rewards: R_v against the gold answer, R_s under `reference` given
// {system, full_instruction}, alpha = 1/G (0 without the anchor), advantages.
void score_group(RolloutGroup& group, Backend& reference, const RewardOptions& options);

}  // namespace rlsta
