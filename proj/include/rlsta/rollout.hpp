#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rlsta/backend.hpp"
#include "rlsta/group.hpp"
#include "rlsta/scenario.hpp"

namespace rlsta {

struct RolloutOptions {
  std::string system_prompt = std::string(kDefaultSystemPrompt);
  bool abstain = false;
  SamplingParams params;  // eval defaults: temperature 0.7, max_tokens 1024
};

// The system turn actually sent: the abstain instruction is prepended when asked.
std::string effective_system_prompt(const RolloutOptions& options);

// Seed for the k-th model call of one conversation.
std::uint64_t turn_seed(std::uint64_t conversation_seed, std::size_t call_index);

ConversationRecord run_single_turn(const ShardedInstruction& instr, Backend& backend,
                                   const RolloutOptions& options, std::uint64_t seed);

// Plays a fixed turn plan. A backend failure part-way through is not thrown: the
// partial record is returned with complete=false and a failure marker.
ConversationRecord run_multi_turn(const TurnPlan& plan, Backend& backend,
                                  const RolloutOptions& options, std::uint64_t seed);

using EventLog = std::function<void(const std::string&)>;

struct SimulatorOptions {
  SamplingParams params{0.0, 256, std::nullopt};
};

// Renders the conversation so far for the simulator prompt (system turn omitted).
std::string render_transcript(const std::vector<Turn>& turns);
std::string render_simulator_prompt(const std::vector<Turn>& turns,
                                    const ShardedInstruction& instr,
                                    const std::vector<int>& unrevealed);

// The simulator picks which unrevealed shard to share next, one per turn. Invalid
// picks get one reprompt, then the lowest unrevealed id is used and an event logged.
// `revealed_order` receives the shard ids in the order they were shared.
ConversationRecord run_simulated_user(const ShardedInstruction& instr, Backend& policy,
                                      Backend& simulator, const RolloutOptions& options,
                                      std::uint64_t seed, const SimulatorOptions& sim = {},
                                      const EventLog& log = {},
                                      std::vector<int>* revealed_order = nullptr);

// G final-turn samples for history H with seeds derive_seed(run_seed, problem_id, i).
RolloutGroup sample_group(const std::vector<Turn>& history, Backend& backend, int group_size,
                          const SamplingParams& params, std::uint64_t run_seed,
                          const std::string& problem_id);

// Unbiased pass@k: 1 - C(n-c, k) / C(n, k).
double pass_at_k(int n, int c, int k);

}  // namespace rlsta
