#include "rlsta/rollout.hpp"

#include <algorithm>
#include <set>

#include "rlsta/prompts.hpp"

namespace rlsta {

std::string effective_system_prompt(const RolloutOptions& options) {
  if (!options.abstain) return options.system_prompt;
  return std::string(prompts::abstain()) + "\n" + options.system_prompt;
}

std::uint64_t turn_seed(std::uint64_t conversation_seed, std::size_t call_index) {
  return derive_seed(conversation_seed, "turn", call_index);
}

namespace {

ConversationRecord start_record(const std::string& problem_id, ScenarioKind kind,
                                const RolloutOptions& options, std::uint64_t seed) {
  ConversationRecord r;
  r.problem_id = problem_id;
  r.scenario_kind = kind;
  r.seed = seed;
  r.sampling = {options.params.temperature, options.params.max_tokens};
  r.turns.push_back({Role::system, effective_system_prompt(options), std::nullopt});
  return r;
}

// Appends the model reply to the record; false if the backend failed.
bool respond(ConversationRecord& record, Backend& backend, const RolloutOptions& options,
             std::size_t call_index) {
  SamplingParams p = options.params;
  p.seed = turn_seed(record.seed, call_index);
  try {
    Turn reply = backend.chat(record.turns, p);
    reply.role = Role::assistant;
    record.final_answer_text = reply.text;
    record.turns.push_back(std::move(reply));
    return true;
  } catch (const BackendError& e) {
    record.failure = std::string("backend error at turn ") + std::to_string(call_index) + ": " +
                     e.what();
  } catch (const CapabilityError& e) {
    record.failure = std::string("backend capability error: ") + e.what();
  }
  record.complete = false;
  return false;
}

}  // namespace

ConversationRecord run_single_turn(const ShardedInstruction& instr, Backend& backend,
                                   const RolloutOptions& options, std::uint64_t seed) {
  validate(options.params);
  auto record = start_record(instr.problem_id, ScenarioKind::single_turn, options, seed);
  record.turns.push_back({Role::user, merge(instr), std::nullopt});
  SamplingParams p = options.params;
  p.seed = turn_seed(seed, 0);
  Turn reply = backend.chat(record.turns, p);
  reply.role = Role::assistant;
  record.final_answer_text = reply.text;
  record.turns.push_back(std::move(reply));
  return record;
}

ConversationRecord run_multi_turn(const TurnPlan& plan, Backend& backend,
                                  const RolloutOptions& options, std::uint64_t seed) {
  validate(options.params);
  if (plan.user_turns.empty()) throw ValidationError("turn plan has no user turns");
  auto record = start_record(plan.problem_id, plan.kind, options, seed);
  for (std::size_t k = 0; k < plan.user_turns.size(); ++k) {
    record.turns.push_back({Role::user, plan.user_turns[k], std::nullopt});
    if (!respond(record, backend, options, k)) break;
  }
  return record;
}

std::string render_transcript(const std::vector<Turn>& turns) {
  std::string out;
  for (const auto& t : turns) {
    if (t.role == Role::system) continue;
    if (!out.empty()) out += "\n\n";
    out += "[" + to_string(t.role) + "]: " + t.text;
  }
  return out.empty() ? "(empty)" : out;
}

std::string render_simulator_prompt(const std::vector<Turn>& turns,
                                    const ShardedInstruction& instr,
                                    const std::vector<int>& unrevealed) {
  std::string listing;
  std::vector<std::string> ids;
  for (int id : unrevealed) {
    listing += "- id " + std::to_string(id) + ": " + instr.shards.at(id).text + "\n";
    ids.push_back(std::to_string(id));
  }
  if (!listing.empty()) listing.pop_back();
  return format_template(prompts::user_simulator_template(),
                         {{"conversation", render_transcript(turns)},
                          {"unrevealed", listing},
                          {"unrevealed_ids", join(ids, ", ")}});
}

ConversationRecord run_simulated_user(const ShardedInstruction& instr, Backend& policy,
                                      Backend& simulator, const RolloutOptions& options,
                                      std::uint64_t seed, const SimulatorOptions& sim,
                                      const EventLog& log, std::vector<int>* revealed_order) {
  validate(instr);
  validate(options.params);
  auto record = start_record(instr.problem_id, ScenarioKind::mt_add, options, seed);
  std::vector<int> unrevealed;
  for (const auto& s : instr.shards) unrevealed.push_back(s.id);
  if (revealed_order) revealed_order->clear();

  record.turns.push_back({Role::user, instr.initial_query, std::nullopt});
  if (!respond(record, policy, options, 0)) return record;

  std::size_t call = 1;
  while (!unrevealed.empty()) {
    const auto prompt = render_simulator_prompt(record.turns, instr, unrevealed);
    const std::vector<Turn> messages{{Role::system, std::string(kDefaultSystemPrompt), std::nullopt},
                                     {Role::user, prompt, std::nullopt}};
    std::optional<int> pick;
    std::string last_reply;
    for (int attempt = 0; attempt < 2 && !pick; ++attempt) {
      SamplingParams p = sim.params;
      p.seed = derive_seed(seed, "simulator", call * 2 + static_cast<std::size_t>(attempt));
      try {
        last_reply = simulator.chat(messages, p).text;
      } catch (const BackendError& e) {
        record.failure = std::string("simulator backend error: ") + e.what();
        record.complete = false;
        return record;
      }
      auto parsed = parse_lenient_json(last_reply);
      if (parsed && parsed->is_object() && parsed->contains("shard_id") &&
          (*parsed)["shard_id"].is_number_integer()) {
        int id = (*parsed)["shard_id"].get<int>();
        if (std::find(unrevealed.begin(), unrevealed.end(), id) != unrevealed.end()) pick = id;
      }
    }
    if (!pick) {
      pick = *std::min_element(unrevealed.begin(), unrevealed.end());
      if (log) {
        log(instr.problem_id + ": simulator made no valid selection after a reprompt (reply: " +
            last_reply + "); falling back to shard " + std::to_string(*pick));
      }
    }
    unrevealed.erase(std::find(unrevealed.begin(), unrevealed.end(), *pick));
    if (revealed_order) revealed_order->push_back(*pick);
    record.turns.push_back({Role::user, instr.shards.at(*pick).text, std::nullopt});
    if (!respond(record, policy, options, call)) return record;
    ++call;
  }
  return record;
}

RolloutGroup sample_group(const std::vector<Turn>& history, Backend& backend, int group_size,
                          const SamplingParams& params, std::uint64_t run_seed,
                          const std::string& problem_id) {
  if (group_size < 2) throw ValidationError("group size must be >= 2");
  validate(params);
  validate_chat_messages(history);
  RolloutGroup group;
  group.problem_id = problem_id;
  group.history = history;
  group.temperature = params.temperature;
  for (int i = 0; i < group_size; ++i) {
    SamplingParams p = params;
    p.seed = derive_seed(run_seed, problem_id, static_cast<std::uint64_t>(i));
    Turn t = backend.chat(history, p);
    GroupSample s;
    s.sample_index = i;
    s.seed = *p.seed;
    s.text = t.text;
    if (t.token_logprobs) s.token_logprobs = *t.token_logprobs;
    group.samples.push_back(std::move(s));
  }
  return group;
}

namespace {

// Exact binomial coefficient for the small n pass@k is used with; falls back to
// floating point once it would overflow.
double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (int i = 1; i <= k; ++i) {
    acc = acc * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (acc > (static_cast<unsigned __int128>(1) << 100)) {
      double d = 1.0;
      for (int j = 1; j <= k; ++j) d = d * (n - k + j) / j;
      return d;
    }
  }
  return static_cast<double>(acc);
}

}  // namespace

double pass_at_k(int n, int c, int k) {
  if (n < 1) throw ValidationError("pass@k: n must be >= 1");
  if (c < 0 || c > n) throw ValidationError("pass@k: need 0 <= c <= n");
  if (k < 1 || k > n) throw ValidationError("pass@k: need 1 <= k <= n");
  if (n - c < k) return 1.0;
  const double total = binom(n, k);
  return (total - binom(n - c, k)) / total;
}

}  // namespace rlsta
