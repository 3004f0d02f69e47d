#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rlsta/backend.hpp"
#include "rlsta/policy.hpp"

namespace rlsta {

// Toy vocabulary. Digits are ids 0-9.
namespace toy {
inline constexpr int kSum = 10;
inline constexpr int kQuery = 11;  // "?"
inline constexpr int kEquals = 12;
inline constexpr int kUser = 13;
inline constexpr int kAssistant = 14;
inline constexpr int kEnd = 15;
inline constexpr int kPad = 16;
inline constexpr int kVocab = 17;

std::string_view symbol(int id);
// Text of one generated token: digits bare, specials with a leading space, end = "".
std::string surface(int id);
// Parses toy text ("SUM 3 4 =", "12", " <e>") into token ids; throws on anything else.
std::vector<int> tokenize(std::string_view text);
std::string render(const std::vector<int>& tokens);
}  // namespace toy

struct SampledResponse {
  std::vector<int> tokens;
  std::vector<double> logprobs;  // under the policy at temperature 1
  std::string text;
};

// Autoregressive softmax policy with one logit row per distinct window of the last
// W tokens. Row 0 is the shared default for windows without a row of their own; a
// new row starts as a copy of the default.
class ToyPolicy : public DifferentiablePolicy {
 public:
  using Key = std::uint64_t;

  explicit ToyPolicy(int window = 4);

  int window() const { return window_; }
  int vocab_size() const override { return toy::kVocab; }
  std::size_t num_params() const override { return params_.size(); }
  std::size_t num_rows() const { return params_.size() / toy::kVocab; }
  const std::vector<double>& params() const override { return params_; }
  std::vector<double>& mutable_params() override { return params_; }

  // Conversation stream: "<u>" + user tokens, "<a>" + assistant tokens (end token
  // dropped); system turns contribute nothing. A history ending in a user turn gets
  // a trailing "<a>" so the next token is the reply.
  TokenContext encode_prompt(const std::vector<Turn>& history) const override;
  int token_id(std::string_view token) const override;

  void touch(const TokenContext& ctx) override;
  void conform(std::vector<double>& theta) const override;
  void log_probs(const std::vector<double>& theta, const TokenContext& ctx,
                 std::vector<double>& out) const override;
  void add_log_prob_grad(const std::vector<double>& theta, const TokenContext& ctx,
                         const std::vector<double>& coeff, std::vector<double>& grad) const override;

  // Window keys: the last W tokens, left padded.
  Key empty_key() const;
  Key push(Key key, int token) const;
  Key key_of(const TokenContext& ctx) const;

  std::size_t row_of(Key key) const;  // 0 when the window has no row
  std::size_t touch_key(Key key);
  void log_probs_key(const std::vector<double>& theta, Key key, std::vector<double>& out) const;
  void log_probs_row(const std::vector<double>& theta, std::size_t row, std::vector<double>& out) const;
  void log_probs_key(Key key, std::vector<double>& out) const { log_probs_key(params_, key, out); }

  // Samples until the end token or max_tokens. temperature 0 is greedy.
  SampledResponse sample(Key key, double temperature, int max_tokens, Rng& rng) const;

  bool operator==(const ToyPolicy& other) const {
    return window_ == other.window_ && params_ == other.params_ && rows_ == other.rows_;
  }

  json to_json() const;
  static ToyPolicy from_json(const json& j);

 private:
  std::size_t row_in(const std::vector<double>& theta, Key key) const;

  int window_;
  std::vector<double> params_;
  std::unordered_map<Key, std::size_t> rows_;
};

// Backend view of a toy policy so the generic rollout, filter and reward code can
// drive it. Holds a reference; the policy must outlive it.
class ToyBackend : public Backend {
 public:
  ToyBackend(const ToyPolicy& policy, int max_tokens, std::string label = "toy");

  Turn chat(const std::vector<Turn>& messages, const SamplingParams& params) override;
  ScoredCompletion score(const std::vector<Turn>& context, std::string_view completion) override;
  std::vector<Outcome> enumerate_outcomes(const std::vector<Turn>& context) override;
  std::string name() const override { return label_; }

 private:
  const ToyPolicy& policy_;
  int max_tokens_;
  std::string label_;
};

}  // namespace rlsta
