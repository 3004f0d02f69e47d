#include "rlsta/reward.hpp"
#include "rlsta/errors.hpp"

#include <algorithm>
#include <cmath>

namespace rlsta {

double anchor_reward(const std::vector<double>& logprobs) {
  if (logprobs.empty()) throw ValidationError("anchor reward undefined for an empty completion");
  // Running mean: stays exact when every term is equal.
  double mean = 0.0;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    if (!(logprobs[i] <= 0.0)) throw ValidationError("anchor reward: logprob must be <= 0");
    mean += (logprobs[i] - mean) / static_cast<double>(i + 1);
  }
  return std::exp(mean);
}

double anchor_reward(const ScoredCompletion& scored) {
  // geometric mean of identical probabilities is the probability itself; skip exp(log p)
  const auto& p = scored.probs;
  if (!p.empty() && p.size() == scored.logprobs.size() &&
      std::all_of(p.begin(), p.end(), [&](double x) { return x == p.front(); }) && p.front() > 0.0 &&
      p.front() <= 1.0)
    return p.front();
  return anchor_reward(scored.logprobs);
}

double default_alpha(int group_size) {
  if (group_size < 2) throw ValidationError("group size must be >= 2");
  return 1.0 / group_size;
}

double combine(int r_v, double r_s, int group_size) {
  return r_v + default_alpha(group_size) * r_s;
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double eps_std) {
  const auto n = rewards.size();
  if (n < 2) throw ValidationError("advantages need a group of at least 2");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  std::vector<double> out(n, 0.0);
  if (!(sd >= eps_std)) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

void score_group(RolloutGroup& group, Backend& reference, const RewardOptions& options) {
  const int g = static_cast<int>(group.samples.size());
  const double alpha = options.use_anchor ? default_alpha(g) : 0.0;
  const std::vector<Turn> ref_context{{Role::system, options.system_prompt, std::nullopt},
                                      {Role::user, group.full_instruction, std::nullopt}};
  const auto fingerprint = context_fingerprint(ref_context);
  group.rewards.clear();
  std::vector<double> totals;
  for (const auto& s : group.samples) {
    RewardBreakdown rb;
    rb.sample_index = s.sample_index;
    rb.verifier_mode = options.use_verifier ? to_string(options.verifier_mode) : "none";
    rb.r_v = options.use_verifier ? verify(s.text, group.gold_answer, options.verifier_mode) : 0;
    rb.r_s = anchor_reward(reference.score(ref_context, s.text));
    rb.alpha = alpha;
    rb.r_total = rb.r_v + alpha * rb.r_s;
    rb.reference_context = fingerprint;
    totals.push_back(rb.r_total);
    group.rewards.push_back(std::move(rb));
  }
  auto adv = group_advantages(totals, options.eps_std);
  for (std::size_t i = 0; i < adv.size(); ++i) group.rewards[i].advantage = adv[i];
}

}  // namespace rlsta
