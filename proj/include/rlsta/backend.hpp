#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "rlsta/conversation.hpp"
#include "rlsta/errors.hpp"

namespace rlsta {

struct SamplingParams {
  double temperature = 0.7;
  int max_tokens = 1024;
  std::optional<std::uint64_t> seed;
};

void validate(const SamplingParams& params);

// Per-token log-probabilities of a given completion under a given context.
struct ScoredCompletion {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  // Exact per-token probabilities, when the backend knows them (empty otherwise).
  std::vector<double> probs;
  std::string context_fingerprint;

  double total_logprob() const;
};

struct Outcome {
  std::string completion;
  double probability = 0.0;
};

// By convention an empty token string marks end-of-sequence in token lists.
inline bool is_end_token(std::string_view token) { return token.empty(); }

// A model endpoint. Implementations must be safe for concurrent use.
class Backend {
 public:
  virtual ~Backend() = default;

  // Samples one assistant reply to `messages` (system, then alternating user/assistant,
  // ending on a user turn).
  virtual Turn chat(const std::vector<Turn>& messages, const SamplingParams& params) = 0;

  // Forced-completion scoring: log-probabilities of `completion` as the assistant's
  // reply to `context`.
  virtual ScoredCompletion score(const std::vector<Turn>& context,
                                 std::string_view completion) = 0;

  // Exact outcome distribution at temperature 1. Only finite mock backends have one.
  virtual std::vector<Outcome> enumerate_outcomes(const std::vector<Turn>& context);

  virtual std::string name() const = 0;
};

using BackendHandle = std::shared_ptr<Backend>;

// Stable hash of the roles and texts of a context.
std::string context_fingerprint(const std::vector<Turn>& context);

// Checks the alternation contract and that the last message is from the user.
void validate_chat_messages(const std::vector<Turn>& messages);

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{200};
  double multiplier = 2.0;
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;

inline void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

// Runs fn, retrying retryable BackendErrors with exponential backoff.
template <typename F>
auto with_retries(F&& fn, const RetryPolicy& policy, const SleepFn& sleep = default_sleep)
    -> decltype(fn()) {
  auto delay = policy.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= policy.max_attempts) throw;
    }
    sleep(delay);
    delay = std::chrono::milliseconds(
        static_cast<long long>(static_cast<double>(delay.count()) * policy.multiplier));
  }
}

// Adds bounded retry to any backend.
class RetryingBackend : public Backend {
 public:
  RetryingBackend(BackendHandle inner, RetryPolicy policy, SleepFn sleep = default_sleep);

  Turn chat(const std::vector<Turn>& messages, const SamplingParams& params) override;
  ScoredCompletion score(const std::vector<Turn>& context, std::string_view completion) override;
  std::vector<Outcome> enumerate_outcomes(const std::vector<Turn>& context) override;
  std::string name() const override;

 private:
  BackendHandle inner_;
  RetryPolicy policy_;
  SleepFn sleep_;
};

// Asks a judge for a JSON reply: one system turn, one user turn, temperature 0.
// `check` throws (any exception) to reject a parsed reply. After 1 + retries failed
// attempts a SchemaError carrying the last raw reply is thrown.
json query_json(Backend& judge, std::string_view system, std::string_view user, int retries,
                const std::function<void(const json&)>& check = {});

inline constexpr int kJudgeRetries = 3;
inline constexpr std::string_view kDefaultSystemPrompt = "You are a helpful assistant.";

struct GatewayOptions {
  std::string api_key;
  std::string model;
  int max_in_flight = 8;
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
  std::string score_template = "chatml";
};

// Builds a backend from an endpoint string:
//   mock:<fixture.jsonl>   outcome-table mock
//   uniform:<V>            uniform-vocabulary mock
//   http(s)://host[:port]  OpenAI-compatible server
BackendHandle make_backend(const std::string& endpoint, const GatewayOptions& options = {});

}  // namespace rlsta
