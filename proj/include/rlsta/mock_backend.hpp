#pragma once

#include <atomic>
#include <optional>
#include <string>
#include <vector>

#include "rlsta/backend.hpp"

namespace rlsta {

// Splits text into whitespace-prefixed words; concatenating the pieces gives the
// text back. Trailing whitespace becomes its own piece.
std::vector<std::string> mock_tokenize(std::string_view text);

// Outcome-table mock. Each entry maps a context pattern to weighted completions;
// the first matching entry wins, then the default entry.
//
// Fixture line:
//   {"contains": "..." | ["...", ...], "user_turns": 2,
//    "outcomes": [{"completion": "...", "weight": 0.75}, ...]}
//   {"default": true, "outcomes": [...]}
class MockBackend : public Backend {
 public:
  struct WeightedCompletion {
    std::string completion;
    double weight = 1.0;
  };
  struct Entry {
    std::vector<std::string> contains;  // all must appear in the context text
    std::optional<int> user_turns;
    bool is_default = false;
    std::vector<WeightedCompletion> outcomes;
  };

  // Off-table tokens are scored at this probability.
  static constexpr double kDefaultFloor = 1e-4;

  explicit MockBackend(std::vector<Entry> entries, double floor_prob = kDefaultFloor,
                       std::string label = "mock");
  MockBackend(const MockBackend& other);

  static MockBackend from_fixture(const std::string& path);
  static MockBackend from_jsonl(std::string_view content, const std::string& source_name);

  Turn chat(const std::vector<Turn>& messages, const SamplingParams& params) override;
  ScoredCompletion score(const std::vector<Turn>& context, std::string_view completion) override;
  std::vector<Outcome> enumerate_outcomes(const std::vector<Turn>& context) override;
  std::string name() const override { return label_; }

  // Index of the entry serving this context; throws BackendError when none does.
  std::size_t match(const std::vector<Turn>& context) const;

 private:
  struct Table {
    std::vector<std::string> completions;
    std::vector<double> probs;
    std::vector<std::vector<std::string>> tokens;  // each ends with the end token
  };

  std::vector<double> token_logprobs(const Table& table,
                                     const std::vector<std::string>& tokens) const;

  std::vector<Entry> entries_;
  std::vector<Table> tables_;
  double floor_logprob_;
  std::string label_;
  std::atomic<std::uint64_t> unseeded_calls_{0};
};

void from_json(const json& j, MockBackend::Entry& e);

// Every token has probability 1/V. Chat emits max_tokens tokens drawn uniformly
// from "t0".."t{V-1}".
class UniformBackend : public Backend {
 public:
  explicit UniformBackend(int vocab_size);

  Turn chat(const std::vector<Turn>& messages, const SamplingParams& params) override;
  ScoredCompletion score(const std::vector<Turn>& context, std::string_view completion) override;
  std::string name() const override;

  int vocab_size() const { return vocab_; }

 private:
  int vocab_;
  std::atomic<std::uint64_t> unseeded_calls_{0};
};

}  // namespace rlsta
