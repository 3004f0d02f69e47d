#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rlsta/backend.hpp"
#include "rlsta/conversation.hpp"

namespace rlsta {

struct ChangedSpan {
  std::size_t offset = 0;  // byte offset in the original text
  std::string original;
  std::string replacement;

  friend bool operator==(const ChangedSpan&, const ChangedSpan&) = default;
};

struct CorruptionPlan {
  int shard_id = 0;
  std::string original_text;
  std::string corrupted_text;
  std::vector<ChangedSpan> changed_spans;
  bool no_numeric = false;  // shard had no digits and passed through untouched

  bool changed() const { return corrupted_text != original_text; }
  friend bool operator==(const CorruptionPlan&, const CorruptionPlan&) = default;
};

struct Corruption {
  std::string problem_id;
  std::string corrupted_i0;
  std::vector<CorruptionPlan> plans;  // one per shard, shard order

  friend bool operator==(const Corruption&, const Corruption&) = default;
};

enum class CorruptMode { llm, deterministic };

struct CorruptOptions {
  CorruptMode mode = CorruptMode::deterministic;
  std::uint64_t seed = 0;
  // How many numeric shards to corrupt; all of them when unset.
  std::optional<int> max_shards;
  Backend* judge = nullptr;
  int retries = kJudgeRetries;
};

// Replaces every digit run v with v + delta, delta in {-3..-1, 1..3} times
// 10^(len-2) (at least 1), flipped when the result would go negative.
std::string corrupt_digits(std::string_view text, Rng& rng, std::vector<ChangedSpan>* spans);

Corruption corrupt(const ShardedInstruction& instr, const CorruptOptions& options);

// Ordered user turns for one conversation, with the shard each turn delivers.
struct TurnPlan {
  std::string problem_id;
  ScenarioKind kind = ScenarioKind::mt_add;
  std::vector<std::string> user_turns;
  // Shard ids delivered by each user turn (turn 0 of MT-Refine delivers all of them,
  // corrupted; turn 0 of MT-Add delivers none).
  std::vector<std::vector<int>> delivers;
  std::string gold_answer;
  std::string full_instruction;  // merge(instr)

  friend bool operator==(const TurnPlan&, const TurnPlan&) = default;
};

TurnPlan build_single_turn(const ShardedInstruction& instr);
TurnPlan build_mt_add(const ShardedInstruction& instr, bool drop_optional = false);
TurnPlan build_mt_refine(const ShardedInstruction& instr, const Corruption& corruption);

// Judge-driven decomposition of a single-turn problem (segmentation, then rephrasing).
ShardedInstruction segment(const std::string& problem_id, const std::string& source_text,
                           const std::string& gold_answer, Backend& judge,
                           int retries = kJudgeRetries);

std::string render_segmentation_prompt(const std::string& source_text);
std::string render_rephrasing_prompt(const std::string& source_text, const json& segments);

void to_json(json& j, const ChangedSpan& s);
void from_json(const json& j, ChangedSpan& s);
void to_json(json& j, const CorruptionPlan& p);
void from_json(const json& j, CorruptionPlan& p);
void to_json(json& j, const Corruption& c);
void from_json(const json& j, Corruption& c);
void to_json(json& j, const TurnPlan& p);
void from_json(const json& j, TurnPlan& p);

}  // namespace rlsta
