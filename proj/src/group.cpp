#include "rlsta/group.hpp"

#include "rlsta/errors.hpp"

namespace rlsta {

void to_json(json& j, const RewardBreakdown& r) {
  j = {{"sample_index", r.sample_index}, {"r_v", r.r_v},
       {"r_s", r.r_s},                   {"alpha", r.alpha},
       {"r_total", r.r_total},           {"advantage", r.advantage},
       {"verifier_mode", r.verifier_mode}, {"reference_context", r.reference_context}};
}

void from_json(const json& j, RewardBreakdown& r) {
  j.at("sample_index").get_to(r.sample_index);
  j.at("r_v").get_to(r.r_v);
  j.at("r_s").get_to(r.r_s);
  j.at("alpha").get_to(r.alpha);
  j.at("r_total").get_to(r.r_total);
  j.at("advantage").get_to(r.advantage);
  r.verifier_mode = j.value("verifier_mode", "");
  r.reference_context = j.value("reference_context", "");
}

void to_json(json& j, const GroupSample& s) {
  j = {{"sample_index", s.sample_index},
       {"seed", s.seed},
       {"text", s.text},
       {"token_logprobs", s.token_logprobs}};
}

void from_json(const json& j, GroupSample& s) {
  j.at("sample_index").get_to(s.sample_index);
  j.at("seed").get_to(s.seed);
  j.at("text").get_to(s.text);
  j.at("token_logprobs").get_to(s.token_logprobs);
}

void to_json(json& j, const RolloutGroup& g) {
  j = {{"problem_id", g.problem_id},
       {"history", g.history},
       {"full_instruction", g.full_instruction},
       {"gold_answer", g.gold_answer},
       {"temperature", g.temperature},
       {"samples", g.samples}};
  if (!g.rewards.empty()) j["rewards"] = g.rewards;
}

void from_json(const json& j, RolloutGroup& g) {
  j.at("problem_id").get_to(g.problem_id);
  j.at("history").get_to(g.history);
  j.at("full_instruction").get_to(g.full_instruction);
  j.at("gold_answer").get_to(g.gold_answer);
  g.temperature = j.value("temperature", 1.0);
  j.at("samples").get_to(g.samples);
  g.rewards.clear();
  if (j.contains("rewards")) j.at("rewards").get_to(g.rewards);
  validate_history(g.history);
  if (g.history.back().role != Role::user)
    throw ValidationError("group history must end with a user turn");
  for (const auto& s : g.samples)
    for (const auto& t : s.token_logprobs)
      if (!(t.logprob <= 0.0)) throw ValidationError("group sample logprob must be <= 0");
}

}  // namespace rlsta
