#pragma once

#include <string>
#include <vector>

#include "rlsta/conversation.hpp"

namespace rlsta {

struct RewardBreakdown {
  int sample_index = 0;
  int r_v = 0;
  double r_s = 0.0;
  double alpha = 0.0;
  double r_total = 0.0;
  double advantage = 0.0;
  // Provenance.
  std::string verifier_mode;       // "none" when the verifier is disabled
  std::string reference_context;   // fingerprint of the context R_s was scored under

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

struct GroupSample {
  int sample_index = 0;
  std::uint64_t seed = 0;
  std::string text;
  std::vector<TokenLogprob> token_logprobs;  // under the sampling policy

  friend bool operator==(const GroupSample&, const GroupSample&) = default;
};

// One history plus G final-turn samples: the unit GRPO trains on.
struct RolloutGroup {
  std::string problem_id;
  std::vector<Turn> history;  // ends in a user turn
  std::string full_instruction;
  std::string gold_answer;
  double temperature = 1.0;
  std::vector<GroupSample> samples;
  std::vector<RewardBreakdown> rewards;  // filled by the reward engine

  std::size_t size() const { return samples.size(); }
  friend bool operator==(const RolloutGroup&, const RolloutGroup&) = default;
};

void to_json(json& j, const RewardBreakdown& r);
void from_json(const json& j, RewardBreakdown& r);
void to_json(json& j, const GroupSample& s);
void from_json(const json& j, GroupSample& s);
void to_json(json& j, const RolloutGroup& g);
void from_json(const json& j, RolloutGroup& g);

}  // namespace rlsta
