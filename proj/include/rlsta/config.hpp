#pragma once

#include <functional>
#include <optional>
#include <string>

#include "rlsta/backend.hpp"

namespace rlsta {

inline constexpr const char* kApiKeyEnv = "RLSTA_API_KEY";

struct BackendConfig {
  std::string endpoint;
  std::string api_key;
  std::string model;
  int max_in_flight = 8;
  int max_retries = 5;
  int timeout_s = 120;
  std::string score_template = "chatml";

  GatewayOptions options() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string system_prompt = std::string(kDefaultSystemPrompt);

  struct Eval {
    int n = 8;
    double temperature = 0.7;
    int max_tokens = 1024;
    bool abstain = false;
  } eval;

  struct Training {
    int group_size = 8;
    double temperature = 1.0;
    int max_tokens = 1024;
    double kl_coef = 1e-4;
    double clip_eps = 0.2;
    std::string kl_estimator = "k3";
    int updates_per_batch = 1;
    double learning_rate = 0.5;
    bool use_verifier = true;
    bool use_anchor = true;
  } training;

  struct Filter {
    int n = 8;
    std::optional<double> delta;  // 1/n
    std::optional<int> cap;
    double temperature = 1.0;
  } filter;

  struct Verifier {
    std::string mode = "boxed_then_last_number";
  } verifier;

  struct Scenario {
    std::string corrupt_mode = "deterministic";
    std::optional<int> corrupt_count;  // all numeric shards
    bool drop_optional = false;
    int judge_retries = 3;
  } scenario;

  struct Toy {
    int operands = 2;
    int operand_min = 0;
    int operand_max = 4;
    int window = 7;
    int max_tokens = 2;
    int pretrain_steps = 5000;
    double pretrain_lr = 0.5;
    double learning_rate = 5.0;
    int steps = 2000;
    int histories_per_step = 16;
    int eval_every = 50;
  } toy;

  std::optional<BackendConfig> backend;
  std::optional<BackendConfig> judge;
  std::optional<BackendConfig> reference;
  std::optional<BackendConfig> simulator;

  // Every effective value, defaults included, in canonical key order. API keys are
  // redacted unless asked for.
  json effective(bool include_secrets = false) const;
  std::string hash() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

// Unknown keys, type mismatches and invalid values raise ValidationError naming the
// key path. The API key environment variable beats the file.
RunConfig parse_config(const json& doc, const EnvLookup& env = process_env);
RunConfig load_config(const std::string& path, const EnvLookup& env = process_env);

}  // namespace rlsta
