#pragma once

#include <memory>
#include <semaphore>
#include <string>

#include "rlsta/backend.hpp"

namespace rlsta {

// Renders a context (plus nothing else) as a raw completion prompt so that
// /v1/completions with echo can score an assistant reply.
std::string render_score_prompt(const std::vector<Turn>& context, const std::string& style);

// OpenAI-compatible HTTP backend. chat uses /v1/chat/completions with logprobs;
// score uses /v1/completions with echo=true, max_tokens=0.
class OpenAIBackend : public Backend {
 public:
  OpenAIBackend(std::string base_url, GatewayOptions options);

  Turn chat(const std::vector<Turn>& messages, const SamplingParams& params) override;
  ScoredCompletion score(const std::vector<Turn>& context, std::string_view completion) override;
  std::string name() const override { return base_url_; }

  // Exposed for tests.
  static Turn parse_chat_reply(const std::string& body);
  static ScoredCompletion parse_score_reply(const std::string& body, std::size_t prompt_chars);

 private:
  std::string post(const std::string& path, const json& payload, bool scoring);

  std::string base_url_;
  std::string host_;    // scheme://host[:port]
  std::string prefix_;  // path prefix ending in /v1
  GatewayOptions options_;
  std::unique_ptr<std::counting_semaphore<1024>> in_flight_;
};

}  // namespace rlsta
