#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rlsta/util.hpp"

namespace rlsta {

// One atomic unit of problem information.
struct Shard {
  int id = 0;
  std::string text;
  bool is_required = true;

  friend bool operator==(const Shard&, const Shard&) = default;
};

// A source problem decomposed into an initial query (the question target) plus
// ordered information shards.
struct ShardedInstruction {
  std::string problem_id;
  std::string initial_query;
  std::vector<Shard> shards;
  std::string gold_answer;
  std::string source_text;

  friend bool operator==(const ShardedInstruction&, const ShardedInstruction&) = default;
};

inline constexpr std::size_t kMaxShards = 10;

enum class Role { system, user, assistant };

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

struct Turn {
  Role role = Role::user;
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;

  friend bool operator==(const Turn&, const Turn&) = default;
};

enum class ScenarioKind { mt_add, mt_refine, single_turn };

struct Sampling {
  double temperature = 0.7;
  int max_tokens = 1024;

  friend bool operator==(const Sampling&, const Sampling&) = default;
};

struct ConversationRecord {
  std::string problem_id;
  ScenarioKind scenario_kind = ScenarioKind::single_turn;
  std::vector<Turn> turns;
  std::string final_answer_text;
  std::optional<int> verified;
  std::uint64_t seed = 0;
  Sampling sampling;
  // Resumability and partial-failure bookkeeping.
  int sample_index = 0;
  bool complete = true;
  std::optional<std::string> failure;

  friend bool operator==(const ConversationRecord&, const ConversationRecord&) = default;
};

std::string to_string(Role role);
Role role_from_string(const std::string& s);
std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& s);

// Invariant checks; throw ValidationError describing the first violation.
void validate(const ShardedInstruction& instr);
void validate(const Turn& turn);
// Checks system/user/assistant alternation. A record may end on a user turn only
// when it is incomplete (failure marker set) or is a bare history.
void validate(const ConversationRecord& record);
void validate_history(const std::vector<Turn>& turns);

// i_full: initial query followed by every shard text, newline separated.
std::string merge(const ShardedInstruction& instr);

std::size_t user_turn_count(const std::vector<Turn>& turns);

// {s, i_0, m_0, ..., i_k}: every turn up to and including the k-th user turn.
std::vector<Turn> history_prefix(const ConversationRecord& record, std::size_t k);
std::vector<Turn> history_prefix(const std::vector<Turn>& turns, std::size_t k);

// Final multi-turn history H: everything before the last assistant reply.
std::vector<Turn> final_history(const ConversationRecord& record);

void to_json(json& j, const Shard& s);
void from_json(const json& j, Shard& s);
void to_json(json& j, const ShardedInstruction& s);
void from_json(const json& j, ShardedInstruction& s);
void to_json(json& j, const TokenLogprob& t);
void from_json(const json& j, TokenLogprob& t);
void to_json(json& j, const Turn& t);
void from_json(const json& j, Turn& t);
void to_json(json& j, const Sampling& s);
void from_json(const json& j, Sampling& s);
void to_json(json& j, const ConversationRecord& r);
void from_json(const json& j, ConversationRecord& r);

}  // namespace rlsta
