#include "rlsta/config.hpp"
#include "rlsta/errors.hpp"

#include <cstdlib>
#include <set>

#include "rlsta/grpo.hpp"
#include "rlsta/verifier.hpp"

namespace rlsta {

GatewayOptions BackendConfig::options() const {
  GatewayOptions o;
  o.api_key = api_key;
  o.model = model;
  o.max_in_flight = max_in_flight;
  o.retry.max_attempts = max_retries;
  o.timeout = std::chrono::seconds(timeout_s);
  o.score_template = score_template;
  return o;
}

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

namespace {

// Reads one JSON object, checking types and rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& why) {
    throw ValidationError("config: " + key + ": " + why);
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, int& out) {
    if (auto v = find(key)) {
      if (!v->is_number_integer()) fail(key_path(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (auto v = find(key)) {
      if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0))
        fail(key_path(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, double& out) {
    if (auto v = find(key)) {
      if (!v->is_number()) fail(key_path(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (auto v = find(key)) {
      if (!v->is_boolean()) fail(key_path(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (auto v = find(key)) {
      if (!v->is_string()) fail(key_path(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::optional<double>& out) {
    if (auto v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        fail(key_path(key), "expected a number or null");
      }
    }
  }
  void get(const std::string& key, std::optional<int>& out) {
    if (auto v = find(key)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number_integer()) {
        out = v->get<int>();
      } else {
        fail(key_path(key), "expected an integer or null");
      }
    }
  }

  std::optional<Section> child(const std::string& key) {
    auto v = find(key);
    if (v == nullptr || v->is_null()) return std::nullopt;
    return Section(*v, key_path(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(key_path(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& why) {
  if (!ok) Section::fail(key, why);
}

BackendConfig read_backend(Section s, const std::string& name, const EnvLookup& env) {
  BackendConfig b;
  s.get("endpoint", b.endpoint);
  s.get("api_key", b.api_key);
  s.get("model", b.model);
  s.get("max_in_flight", b.max_in_flight);
  s.get("max_retries", b.max_retries);
  s.get("timeout_s", b.timeout_s);
  s.get("score_template", b.score_template);
  s.finish();
  require(!b.endpoint.empty(), name + ".endpoint", "missing backend endpoint");
  require(b.max_in_flight >= 1 && b.max_in_flight <= 1024, name + ".max_in_flight", "must be in [1, 1024]");
  require(b.max_retries >= 1, name + ".max_retries", "must be >= 1");
  require(b.timeout_s >= 1, name + ".timeout_s", "must be >= 1");
  require(b.score_template == "chatml" || b.score_template == "plain", name + ".score_template",
          "must be chatml or plain");
  if (env) {
    if (auto key = env(kApiKeyEnv)) b.api_key = *key;
  }
  return b;
}

json backend_json(const BackendConfig& b, bool secrets) {
  return {{"endpoint", b.endpoint},
          {"api_key", secrets ? b.api_key : (b.api_key.empty() ? "" : "<redacted>")},
          {"model", b.model},
          {"max_in_flight", b.max_in_flight},
          {"max_retries", b.max_retries},
          {"timeout_s", b.timeout_s},
          {"score_template", b.score_template}};
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json RunConfig::effective(bool include_secrets) const {
  json j = {
      {"seed", seed},
      {"system_prompt", system_prompt},
      {"eval",
       {{"n", eval.n},
        {"temperature", eval.temperature},
        {"max_tokens", eval.max_tokens},
        {"abstain", eval.abstain}}},
      {"training",
       {{"group_size", training.group_size},
        {"temperature", training.temperature},
        {"max_tokens", training.max_tokens},
        {"kl_coef", training.kl_coef},
        {"clip_eps", training.clip_eps},
        {"kl_estimator", training.kl_estimator},
        {"updates_per_batch", training.updates_per_batch},
        {"learning_rate", training.learning_rate},
        {"use_verifier", training.use_verifier},
        {"use_anchor", training.use_anchor}}},
      {"filter",
       {{"n", filter.n},
        {"delta", opt(filter.delta ? filter.delta : std::optional<double>(1.0 / filter.n))},
        {"cap", opt(filter.cap)},
        {"temperature", filter.temperature}}},
      {"verifier", {{"mode", verifier.mode}}},
      {"scenario",
       {{"corrupt_mode", scenario.corrupt_mode},
        {"corrupt_count", opt(scenario.corrupt_count)},
        {"drop_optional", scenario.drop_optional},
        {"judge_retries", scenario.judge_retries}}},
      {"toy",
       {{"operands", toy.operands},
        {"operand_min", toy.operand_min},
        {"operand_max", toy.operand_max},
        {"window", toy.window},
        {"max_tokens", toy.max_tokens},
        {"pretrain_steps", toy.pretrain_steps},
        {"pretrain_lr", toy.pretrain_lr},
        {"learning_rate", toy.learning_rate},
        {"steps", toy.steps},
        {"histories_per_step", toy.histories_per_step},
        {"eval_every", toy.eval_every}}},
  };
  const std::pair<const char*, const std::optional<BackendConfig>*> sections[] = {
      {"backend", &backend}, {"judge", &judge}, {"reference", &reference}, {"simulator", &simulator}};
  for (const auto& [name, b] : sections)
    j[name] = *b ? backend_json(**b, include_secrets) : json(nullptr);
  return j;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(effective(true).dump())); }

RunConfig parse_config(const json& doc, const EnvLookup& env) {
  RunConfig c;
  if (doc.is_null()) return c;
  Section root(doc, "");
  root.get("seed", c.seed);
  root.get("system_prompt", c.system_prompt);
  if (auto s = root.child("eval")) {
    s->get("n", c.eval.n);
    s->get("temperature", c.eval.temperature);
    s->get("max_tokens", c.eval.max_tokens);
    s->get("abstain", c.eval.abstain);
    s->finish();
  }
  if (auto s = root.child("training")) {
    s->get("group_size", c.training.group_size);
    s->get("temperature", c.training.temperature);
    s->get("max_tokens", c.training.max_tokens);
    s->get("kl_coef", c.training.kl_coef);
    s->get("clip_eps", c.training.clip_eps);
    s->get("kl_estimator", c.training.kl_estimator);
    s->get("updates_per_batch", c.training.updates_per_batch);
    s->get("learning_rate", c.training.learning_rate);
    s->get("use_verifier", c.training.use_verifier);
    s->get("use_anchor", c.training.use_anchor);
    s->finish();
  }
  if (auto s = root.child("filter")) {
    s->get("n", c.filter.n);
    s->get("delta", c.filter.delta);
    s->get("cap", c.filter.cap);
    s->get("temperature", c.filter.temperature);
    s->finish();
  }
  if (auto s = root.child("verifier")) {
    s->get("mode", c.verifier.mode);
    s->finish();
  }
  if (auto s = root.child("scenario")) {
    s->get("corrupt_mode", c.scenario.corrupt_mode);
    s->get("corrupt_count", c.scenario.corrupt_count);
    s->get("drop_optional", c.scenario.drop_optional);
    s->get("judge_retries", c.scenario.judge_retries);
    s->finish();
  }
  if (auto s = root.child("toy")) {
    s->get("operands", c.toy.operands);
    s->get("operand_min", c.toy.operand_min);
    s->get("operand_max", c.toy.operand_max);
    s->get("window", c.toy.window);
    s->get("max_tokens", c.toy.max_tokens);
    s->get("pretrain_steps", c.toy.pretrain_steps);
    s->get("pretrain_lr", c.toy.pretrain_lr);
    s->get("learning_rate", c.toy.learning_rate);
    s->get("steps", c.toy.steps);
    s->get("histories_per_step", c.toy.histories_per_step);
    s->get("eval_every", c.toy.eval_every);
    s->finish();
  }
  if (auto s = root.child("backend")) c.backend = read_backend(*s, "backend", env);
  if (auto s = root.child("judge")) c.judge = read_backend(*s, "judge", env);
  if (auto s = root.child("reference")) c.reference = read_backend(*s, "reference", env);
  if (auto s = root.child("simulator")) c.simulator = read_backend(*s, "simulator", env);
  root.finish();

  require(c.eval.n >= 1, "eval.n", "must be >= 1");
  require(c.eval.temperature >= 0.0, "eval.temperature", "must be >= 0");
  require(c.eval.max_tokens >= 1, "eval.max_tokens", "must be >= 1");
  require(c.training.group_size >= 2, "training.group_size", "must be >= 2");
  require(c.training.temperature >= 0.0, "training.temperature", "must be >= 0");
  require(c.training.max_tokens >= 1, "training.max_tokens", "must be >= 1");
  require(c.training.kl_coef >= 0.0, "training.kl_coef", "must be >= 0");
  require(c.training.clip_eps > 0.0 && c.training.clip_eps < 1.0, "training.clip_eps",
          "must be in (0, 1)");
  require(c.training.kl_estimator == "k3" || c.training.kl_estimator == "exact",
          "training.kl_estimator", "must be k3 or exact");
  require(c.training.updates_per_batch >= 1, "training.updates_per_batch", "must be >= 1");
  require(c.training.learning_rate >= 0.0, "training.learning_rate", "must be >= 0");
  require(c.filter.n >= 1, "filter.n", "must be >= 1");
  require(!c.filter.delta || *c.filter.delta >= 0.0, "filter.delta", "must be >= 0");
  require(!c.filter.cap || *c.filter.cap >= 0, "filter.cap", "must be >= 0");
  require(c.filter.temperature >= 0.0, "filter.temperature", "must be >= 0");
  try {
    extract_mode_from_string(c.verifier.mode);
  } catch (const ValidationError&) {
    Section::fail("verifier.mode", "unknown mode '" + c.verifier.mode + "'");
  }
  require(c.scenario.corrupt_mode == "deterministic" || c.scenario.corrupt_mode == "llm",
          "scenario.corrupt_mode", "must be deterministic or llm");
  require(!c.scenario.corrupt_count || *c.scenario.corrupt_count >= 1, "scenario.corrupt_count",
          "must be >= 1");
  require(c.scenario.judge_retries >= 0, "scenario.judge_retries", "must be >= 0");
  require(c.toy.operands >= 1, "toy.operands", "must be >= 1");
  require(c.toy.operand_min >= 0 && c.toy.operand_max <= 9 && c.toy.operand_min <= c.toy.operand_max,
          "toy.operand_min", "operands must lie in 0-9");
  require(c.toy.window >= 1 && c.toy.window <= 12, "toy.window", "must be in [1, 12]");
  require(c.toy.max_tokens >= 1, "toy.max_tokens", "must be >= 1");
  require(c.toy.pretrain_steps >= 0, "toy.pretrain_steps", "must be >= 0");
  require(c.toy.pretrain_lr >= 0.0, "toy.pretrain_lr", "must be >= 0");
  require(c.toy.learning_rate >= 0.0, "toy.learning_rate", "must be >= 0");
  require(c.toy.steps >= 0, "toy.steps", "must be >= 0");
  require(c.toy.histories_per_step >= 1, "toy.histories_per_step", "must be >= 1");
  require(c.toy.eval_every >= 1, "toy.eval_every", "must be >= 1");
  return c;
}

RunConfig load_config(const std::string& path, const EnvLookup& env) {
  const auto text = read_file(path);
  if (trim(text).empty()) return parse_config(json(nullptr), env);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path + ": " + e.what());
  }
  return parse_config(doc, env);
}

}  // namespace rlsta
