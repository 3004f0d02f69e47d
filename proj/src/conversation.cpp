#include "rlsta/conversation.hpp"

#include <set>

#include "rlsta/errors.hpp"

namespace rlsta {

std::string to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw ValidationError("unknown role: " + s);
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::mt_add: return "mt_add";
    case ScenarioKind::mt_refine: return "mt_refine";
    case ScenarioKind::single_turn: return "single_turn";
  }
  return "single_turn";
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "mt_add") return ScenarioKind::mt_add;
  if (s == "mt_refine") return ScenarioKind::mt_refine;
  if (s == "single_turn" || s == "single") return ScenarioKind::single_turn;
  throw ValidationError("unknown scenario kind: " + s);
}

void validate(const ShardedInstruction& instr) {
  if (instr.shards.empty()) {
    throw ValidationError("instruction " + instr.problem_id + ": no shards");
  }
  if (instr.shards.size() > kMaxShards) {
    throw ValidationError("instruction " + instr.problem_id + ": more than 10 shards");
  }
  if (trim(instr.initial_query).empty()) {
    throw ValidationError("instruction " + instr.problem_id + ": empty initial query");
  }
  for (std::size_t i = 0; i < instr.shards.size(); ++i) {
    const Shard& s = instr.shards[i];
    if (s.id != static_cast<int>(i)) {
      throw ValidationError("instruction " + instr.problem_id +
                            ": shard ids must be contiguous from 0");
    }
    if (trim(s.text).empty()) {
      throw ValidationError("instruction " + instr.problem_id + ": empty shard " +
                            std::to_string(s.id));
    }
  }
}

void validate(const Turn& turn) {
  if (!turn.token_logprobs) return;
  for (const auto& t : *turn.token_logprobs) {
    if (!(t.logprob <= 0.0)) {
      throw ValidationError("token log-probability must be <= 0, got " +
                            std::to_string(t.logprob));
    }
  }
}

void validate_history(const std::vector<Turn>& turns) {
  if (turns.empty() || turns.front().role != Role::system) {
    throw ValidationError("conversation must start with one system turn");
  }
  for (std::size_t i = 1; i < turns.size(); ++i) {
    const Role expected = (i % 2 == 1) ? Role::user : Role::assistant;
    if (turns[i].role != expected) {
      throw ValidationError("turn " + std::to_string(i) + " should be " + to_string(expected));
    }
  }
  for (const auto& t : turns) validate(t);
}

void validate(const ConversationRecord& record) {
  validate_history(record.turns);
  if (record.turns.size() < 2) throw ValidationError("record has no user turn");
  const Turn& last = record.turns.back();
  if (last.role == Role::assistant) {
    if (record.final_answer_text != last.text) {
      throw ValidationError("final_answer_text must equal the last assistant turn");
    }
  } else if (record.complete) {
    throw ValidationError("complete record must end with an assistant turn");
  }
  if (record.verified && *record.verified != 0 && *record.verified != 1) {
    throw ValidationError("verified must be 0 or 1");
  }
}

std::string merge(const ShardedInstruction& instr) {
  if (instr.shards.empty()) {
    throw ValidationError("merge: instruction " + instr.problem_id + " has no shards");
  }
  std::string out = instr.initial_query;
  for (const auto& s : instr.shards) {
    out += '\n';
    out += s.text;
  }
  return out;
}

std::size_t user_turn_count(const std::vector<Turn>& turns) {
  std::size_t n = 0;
  for (const auto& t : turns) n += t.role == Role::user;
  return n;
}

std::vector<Turn> history_prefix(const std::vector<Turn>& turns, std::size_t k) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (turns[i].role != Role::user) continue;
    if (seen == k) return {turns.begin(), turns.begin() + static_cast<std::ptrdiff_t>(i) + 1};
    ++seen;
  }
  throw ValidationError("history_prefix: k=" + std::to_string(k) + " out of range (" +
                        std::to_string(seen) + " user turns)");
}

std::vector<Turn> history_prefix(const ConversationRecord& record, std::size_t k) {
  return history_prefix(record.turns, k);
}

std::vector<Turn> final_history(const ConversationRecord& record) {
  const std::size_t users = user_turn_count(record.turns);
  if (users == 0) throw ValidationError("final_history: record has no user turn");
  return history_prefix(record.turns, users - 1);
}

void to_json(json& j, const Shard& s) {
  j = json{{"id", s.id}, {"text", s.text}, {"is_required", s.is_required}};
}

void from_json(const json& j, Shard& s) {
  s.id = j.at("id").get<int>();
  s.text = j.at("text").get<std::string>();
  const json& req = j.at("is_required");
  s.is_required = req.is_boolean() ? req.get<bool>() : req.get<int>() != 0;
}

void to_json(json& j, const ShardedInstruction& s) {
  j = json{{"problem_id", s.problem_id},     {"initial_query", s.initial_query},
           {"shards", s.shards},             {"gold_answer", s.gold_answer},
           {"source_text", s.source_text}};
}

void from_json(const json& j, ShardedInstruction& s) {
  s.problem_id = j.at("problem_id").get<std::string>();
  s.initial_query = j.at("initial_query").get<std::string>();
  s.shards = j.at("shards").get<std::vector<Shard>>();
  s.gold_answer = j.value("gold_answer", std::string{});
  s.source_text = j.value("source_text", std::string{});
}

void to_json(json& j, const TokenLogprob& t) { j = json::array({t.token, t.logprob}); }

void from_json(const json& j, TokenLogprob& t) {
  if (j.is_array()) {
    t.token = j.at(0).get<std::string>();
    t.logprob = j.at(1).get<double>();
  } else {
    t.token = j.at("token").get<std::string>();
    t.logprob = j.at("logprob").get<double>();
  }
}

void to_json(json& j, const Turn& t) {
  j = json{{"role", to_string(t.role)}, {"text", t.text}};
  if (t.token_logprobs) j["token_logprobs"] = *t.token_logprobs;
}

void from_json(const json& j, Turn& t) {
  t.role = role_from_string(j.at("role").get<std::string>());
  t.text = j.at("text").get<std::string>();
  if (j.contains("token_logprobs") && !j.at("token_logprobs").is_null()) {
    t.token_logprobs = j.at("token_logprobs").get<std::vector<TokenLogprob>>();
  } else {
    t.token_logprobs.reset();
  }
}

void to_json(json& j, const Sampling& s) {
  j = json{{"temperature", s.temperature}, {"max_tokens", s.max_tokens}};
}

void from_json(const json& j, Sampling& s) {
  s.temperature = j.at("temperature").get<double>();
  s.max_tokens = j.at("max_tokens").get<int>();
}

void to_json(json& j, const ConversationRecord& r) {
  j = json{{"problem_id", r.problem_id},
           {"scenario_kind", to_string(r.scenario_kind)},
           {"turns", r.turns},
           {"final_answer_text", r.final_answer_text},
           {"verified", r.verified ? json(*r.verified) : json(nullptr)},
           {"seed", r.seed},
           {"sampling", r.sampling},
           {"sample_index", r.sample_index},
           {"complete", r.complete}};
  if (r.failure) j["failure"] = *r.failure;
}

void from_json(const json& j, ConversationRecord& r) {
  r.problem_id = j.at("problem_id").get<std::string>();
  r.scenario_kind = scenario_kind_from_string(j.at("scenario_kind").get<std::string>());
  r.turns = j.at("turns").get<std::vector<Turn>>();
  r.final_answer_text = j.value("final_answer_text", std::string{});
  if (j.contains("verified") && !j.at("verified").is_null()) {
    r.verified = j.at("verified").get<int>();
  } else {
    r.verified.reset();
  }
  r.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("sampling")) r.sampling = j.at("sampling").get<Sampling>();
  r.sample_index = j.value("sample_index", 0);
  r.complete = j.value("complete", true);
  if (j.contains("failure") && !j.at("failure").is_null()) {
    r.failure = j.at("failure").get<std::string>();
  } else {
    r.failure.reset();
  }
}

}  // namespace rlsta
