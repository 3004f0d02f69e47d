#include "commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include "rlsta/capability_filter.hpp"
#include "rlsta/config.hpp"
#include "rlsta/errors.hpp"
#include "rlsta/inertia.hpp"
#include "rlsta/jsonl.hpp"
#include "rlsta/mock_backend.hpp"
#include "rlsta/report.hpp"
#include "rlsta/reward.hpp"
#include "rlsta/rollout.hpp"
#include "rlsta/scenario.hpp"
#include "rlsta/toy_lab.hpp"
#include "rlsta/verifier.hpp"

namespace fs = std::filesystem;

namespace rlsta::cli {
namespace {

constexpr int kExitValidation = 2;
constexpr int kExitBackend = 3;
constexpr int kExitPartial = 4;

void note(const std::string& msg) { std::cerr << "rlsta: " << msg << "\n"; }

// Per-invocation state: configuration, run directory and the outputs to list in the
// manifest.
struct Session {
  std::string command;
  std::vector<std::string> args;
  std::string config_path;
  std::string run_dir;
  bool seed_set = false;
  std::uint64_t seed = 0;
  RunConfig cfg;
  std::vector<std::string> outputs;

  void load() {
    cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed_set) cfg.seed = seed;
  }

  std::string output(const std::string& path) {
    std::string p = path;
    if (!run_dir.empty() && fs::path(path).is_relative()) p = (fs::path(run_dir) / path).string();
    if (auto parent = fs::path(p).parent_path(); !parent.empty()) fs::create_directories(parent);
    outputs.push_back(p);
    return p;
  }

  void begin() {
    if (run_dir.empty()) return;
    fs::create_directories(run_dir);
    write_file_atomic((fs::path(run_dir) / "config.json").string(), cfg.effective(false).dump(2) + "\n");
  }

  void finish(int exit_code) {
    if (run_dir.empty()) return;
    json outs = json::object();
    for (const auto& p : outputs)
      if (fs::exists(p)) outs[fs::path(p).lexically_relative(run_dir).string()] = git_blob_hash(read_file(p));
    json manifest = {{"command", command},
                     {"args", args},
                     {"seed", cfg.seed},
                     {"config_hash", cfg.hash()},
                     {"exit_code", exit_code},
                     {"outputs", outs}};
    write_file_atomic((fs::path(run_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  }
};

BackendHandle open_backend(Session& s, const std::string& flag, std::optional<BackendConfig>& section,
                           const std::string& role) {
  BackendConfig bc = section.value_or(BackendConfig{});
  if (!flag.empty()) bc.endpoint = flag;
  if (bc.endpoint.empty())
    throw ValidationError("no " + role + " endpoint: pass --" + role + " or set " + role +
                          ".endpoint in the config");
  if (bc.api_key.empty())
    if (auto key = process_env(kApiKeyEnv)) bc.api_key = *key;
  section = bc;
  (void)s;
  return make_backend(bc.endpoint, bc.options());
}

// A JSON Lines output that survives interruption. Finished lines already on disk are
// kept, torn or unfinished ones dropped, new lines are appended as they complete and
// the file is rewritten in canonical order at the end.
class ResumableOutput {
 public:
  using KeyFn = std::function<std::optional<std::string>(const json&)>;

  ResumableOutput(std::string path, KeyFn key) : path_(std::move(path)), key_(std::move(key)) {
    std::string kept;
    if (fs::exists(path_)) {
      for (const auto& line : split_lines(read_file(path_))) {
        if (trim(line).empty()) continue;
        json v;
        try {
          v = json::parse(line);
        } catch (const json::parse_error&) {
          continue;
        }
        auto k = key_(v);
        if (!k || done_.count(*k)) continue;
        kept += dump_line(v);
        done_.emplace(*k, std::move(v));
      }
      if (!done_.empty()) note("resuming " + path_ + ": " + std::to_string(done_.size()) + " finished record(s) kept");
    }
    write_file_atomic(path_, kept);
    writer_ = std::make_unique<JsonlWriter>(path_, true);
  }

  bool has(const std::string& key) const { return done_.count(key) > 0; }
  const json& get(const std::string& key) const { return done_.at(key); }

  // Lines whose key says "not finished" are written for inspection but not kept.
  void add(const json& value) {
    writer_->write(value);
    if (auto k = key_(value)) done_[*k] = value;
    else pending_.push_back(value);
  }

  void finalize(const std::vector<std::string>& order) {
    writer_.reset();
    std::string content;
    std::set<std::string> seen;
    for (const auto& k : order) {
      auto it = done_.find(k);
      if (it == done_.end() || !seen.insert(k).second) continue;
      content += dump_line(it->second);
    }
    for (const auto& v : pending_) content += dump_line(v);
    write_file_atomic(path_, content);
  }

 private:
  std::string path_;
  KeyFn key_;
  std::map<std::string, json> done_;
  std::vector<json> pending_;
  std::unique_ptr<JsonlWriter> writer_;
};

std::string str_or(const json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (j.contains(k) && j.at(k).is_string()) return j.at(k).get<std::string>();
  return {};
}

std::map<std::string, ShardedInstruction> load_instructions(const std::string& path,
                                                            std::vector<std::string>* order = nullptr) {
  std::map<std::string, ShardedInstruction> out;
  for (auto& instr : read_jsonl_as<ShardedInstruction>(path)) {
    validate(instr);
    if (order) order->push_back(instr.problem_id);
    if (!out.emplace(instr.problem_id, instr).second)
      throw ValidationError(path + ": duplicate problem_id " + instr.problem_id);
  }
  return out;
}

std::map<std::string, std::string> gold_map(const std::map<std::string, ShardedInstruction>& instrs) {
  std::map<std::string, std::string> gold;
  for (const auto& [id, instr] : instrs) gold[id] = instr.gold_answer;
  return gold;
}

std::string record_key(const std::string& problem_id, int index) {
  return problem_id + "#" + std::to_string(index);
}

// --- shard -------------------------------------------------------------------------

struct ShardArgs {
  std::string in, out, judge;
  int retries = -1;
};

int cmd_shard(Session& s, const ShardArgs& a) {
  auto judge = open_backend(s, a.judge, s.cfg.judge, "judge");
  const int retries = a.retries >= 0 ? a.retries : s.cfg.scenario.judge_retries;
  s.begin();
  ResumableOutput out(s.output(a.out), [](const json& j) -> std::optional<std::string> {
    return j.value("problem_id", std::string());
  });
  std::vector<std::string> order;
  int failed = 0;
  for (const auto& line : read_jsonl(a.in)) {
    const auto& j = line.value;
    const std::string id = str_or(j, {"problem_id", "id"});
    const std::string text = str_or(j, {"source_text", "question", "problem"});
    const std::string gold = str_or(j, {"gold_answer", "answer"});
    if (id.empty() || text.empty() || gold.empty())
      throw ValidationError(a.in + ":" + std::to_string(line.line_number) +
                            ": need problem_id, question and answer");
    order.push_back(id);
    if (out.has(id)) continue;
    try {
      out.add(json(segment(id, text, gold, *judge, retries)));
    } catch (const SchemaError& e) {
      ++failed;
      note("shard " + id + ": " + e.what() + "; raw output: " + e.raw_output());
    } catch (const ValidationError& e) {
      ++failed;
      note("shard " + id + ": " + e.what());
    }
  }
  out.finalize(order);
  return failed ? kExitPartial : 0;
}

// --- corrupt -----------------------------------------------------------------------

struct CorruptArgs {
  std::string in, out, mode, judge;
  int max_shards = -1;
};

int cmd_corrupt(Session& s, const CorruptArgs& a) {
  if (!a.mode.empty()) s.cfg.scenario.corrupt_mode = a.mode;
  if (a.max_shards >= 0) s.cfg.scenario.corrupt_count = a.max_shards;
  CorruptOptions opt;
  if (s.cfg.scenario.corrupt_mode == "deterministic") opt.mode = CorruptMode::deterministic;
  else if (s.cfg.scenario.corrupt_mode == "llm") opt.mode = CorruptMode::llm;
  else throw ValidationError("--mode must be deterministic or llm");
  BackendHandle judge;
  if (opt.mode == CorruptMode::llm) {
    judge = open_backend(s, a.judge, s.cfg.judge, "judge");
    opt.judge = judge.get();
  }
  opt.seed = s.cfg.seed;
  opt.max_shards = s.cfg.scenario.corrupt_count;
  opt.retries = s.cfg.scenario.judge_retries;
  std::vector<std::string> order;
  const auto instrs = load_instructions(a.in, &order);
  s.begin();
  ResumableOutput out(s.output(a.out), [](const json& j) -> std::optional<std::string> {
    return j.value("problem_id", std::string());
  });
  int failed = 0;
  for (const auto& id : order) {
    if (out.has(id)) continue;
    try {
      out.add(json(corrupt(instrs.at(id), opt)));
    } catch (const SchemaError& e) {
      ++failed;
      note("corrupt " + id + ": " + e.what() + "; raw output: " + e.raw_output());
    }
  }
  out.finalize(order);
  return failed ? kExitPartial : 0;
}

// --- rollout -----------------------------------------------------------------------

struct RolloutArgs {
  std::string scenario, in, out, backend, simulator, corruptions;
  int n = -1;
  double temp = -1.0;
  int max_tokens = -1;
  bool abstain = false;
};

int rollout_groups(Session& s, const RolloutArgs& a, Backend& backend) {
  SamplingParams params{s.cfg.training.temperature, s.cfg.training.max_tokens, std::nullopt};
  if (a.temp >= 0.0) params.temperature = a.temp;
  if (a.max_tokens > 0) params.max_tokens = a.max_tokens;
  const int g = a.n > 0 ? a.n : s.cfg.training.group_size;
  s.begin();
  auto key_of = [](const json& j) -> std::optional<std::string> {
    return record_key(j.value("problem_id", std::string()), j.value("source_index", 0));
  };
  ResumableOutput out(s.output(a.out), key_of);
  std::vector<std::string> order;
  int index = 0;
  for (const auto& line : read_jsonl(a.in)) {
    const auto& j = line.value;
    const int source_index = index++;
    if (!j.contains("history")) continue;  // a filter verdict that was not retained
    const std::string id = j.at("problem_id").get<std::string>();
    const std::string key = record_key(id, source_index);
    order.push_back(key);
    if (out.has(key)) continue;
    std::vector<Turn> history;
    try {
      history = j.at("history").get<std::vector<Turn>>();
      validate_history(history);
    } catch (const json::exception& e) {
      throw ValidationError(a.in + ":" + std::to_string(line.line_number) + ": " + e.what());
    }
    auto group = sample_group(history, backend, g, params, derive_seed(s.cfg.seed, key, 0), id);
    group.full_instruction = j.value("full_instruction", std::string());
    group.gold_answer = j.value("gold_answer", std::string());
    json v = group;
    v["source_index"] = source_index;
    out.add(v);
  }
  out.finalize(order);
  return 0;
}

int cmd_rollout(Session& s, const RolloutArgs& a) {
  if (a.n > 0 && a.scenario != "group") s.cfg.eval.n = a.n;
  if (a.temp >= 0.0 && a.scenario != "group") s.cfg.eval.temperature = a.temp;
  if (a.max_tokens > 0 && a.scenario != "group") s.cfg.eval.max_tokens = a.max_tokens;
  if (a.abstain) s.cfg.eval.abstain = true;
  auto backend = open_backend(s, a.backend, s.cfg.backend, "backend");
  if (a.scenario == "group") return rollout_groups(s, a, *backend);

  RolloutOptions ropt;
  ropt.system_prompt = s.cfg.system_prompt;
  ropt.abstain = s.cfg.eval.abstain;
  ropt.params = {s.cfg.eval.temperature, s.cfg.eval.max_tokens, std::nullopt};
  validate(ropt.params);

  BackendHandle simulator;
  if (a.scenario == "simulated") simulator = open_backend(s, a.simulator, s.cfg.simulator, "simulator");
  else if (a.scenario != "single" && a.scenario != "mt_add" && a.scenario != "mt_refine")
    throw ValidationError("--scenario must be single, mt_add, mt_refine, simulated or group");

  std::vector<std::string> ids;
  const auto instrs = load_instructions(a.in, &ids);
  std::map<std::string, Corruption> corruptions;
  if (a.scenario == "mt_refine" && !a.corruptions.empty())
    for (auto& c : read_jsonl_as<Corruption>(a.corruptions)) corruptions[c.problem_id] = c;

  s.begin();
  ResumableOutput out(s.output(a.out), [](const json& j) -> std::optional<std::string> {
    if (!j.value("complete", false)) return std::nullopt;
    return record_key(j.value("problem_id", std::string()), j.value("sample_index", 0));
  });
  std::vector<std::string> order;
  int incomplete = 0;
  for (const auto& id : ids) {
    const auto& instr = instrs.at(id);
    std::optional<TurnPlan> plan;
    if (a.scenario == "mt_add") {
      plan = build_mt_add(instr, s.cfg.scenario.drop_optional);
    } else if (a.scenario == "mt_refine") {
      auto it = corruptions.find(id);
      Corruption c;
      if (it != corruptions.end()) {
        c = it->second;
      } else {
        CorruptOptions copt;
        copt.seed = s.cfg.seed;
        copt.max_shards = s.cfg.scenario.corrupt_count;
        c = corrupt(instr, copt);
      }
      try {
        plan = build_mt_refine(instr, c);
      } catch (const ValidationError& e) {
        note("rollout " + id + ": skipped: " + e.what());
        ++incomplete;
        continue;
      }
    }
    for (int i = 0; i < s.cfg.eval.n; ++i) {
      const std::string key = record_key(id, i);
      order.push_back(key);
      if (out.has(key)) continue;
      const std::uint64_t seed = derive_seed(s.cfg.seed, id, static_cast<std::uint64_t>(i));
      ConversationRecord rec;
      if (a.scenario == "single") {
        try {
          rec = run_single_turn(instr, *backend, ropt, seed);
        } catch (const BackendError& e) {
          if (e.retryable()) throw;
          rec.problem_id = id;
          rec.seed = seed;
          rec.complete = false;
          rec.failure = e.what();
        }
      } else if (a.scenario == "simulated") {
        rec = run_simulated_user(instr, *backend, *simulator, ropt, seed, {}, note);
      } else {
        rec = run_multi_turn(*plan, *backend, ropt, seed);
      }
      rec.sample_index = i;
      if (!rec.complete) {
        ++incomplete;
        note("rollout " + key + ": incomplete: " + rec.failure.value_or("unknown failure"));
      }
      out.add(json(rec));
    }
  }
  out.finalize(order);
  return incomplete ? kExitPartial : 0;
}

// --- score -------------------------------------------------------------------------

struct ScoreArgs {
  std::string records, gold, mode, report;
  std::vector<int> ks{1, 8};
};

int cmd_score(Session& s, const ScoreArgs& a) {
  if (!a.mode.empty()) s.cfg.verifier.mode = a.mode;
  const auto mode = extract_mode_from_string(s.cfg.verifier.mode);
  if (mode == ExtractMode::judge) throw ValidationError("score: judge mode is not available offline");
  auto records = read_jsonl_as<ConversationRecord>(a.records);
  const auto gold = gold_map(load_instructions(a.gold));
  auto summary = score_records(records, gold, mode, a.ks);
  s.begin();
  const std::string json_out = to_json(summary).dump(2) + "\n";
  if (a.report.empty()) std::cout << json_out;
  else write_file_atomic(s.output(a.report), json_out);
  return 0;
}

// --- filter ------------------------------------------------------------------------

struct FilterArgs {
  std::string histories, gold, backend, out;
  int n = -1;
  double delta = -1.0;
  int cap = -1;
};

int cmd_filter(Session& s, const FilterArgs& a) {
  if (a.n > 0) s.cfg.filter.n = a.n;
  if (a.delta >= 0.0) s.cfg.filter.delta = a.delta;
  if (a.cap >= 0) s.cfg.filter.cap = a.cap;
  auto backend = open_backend(s, a.backend, s.cfg.backend, "backend");
  FilterOptions fopt;
  fopt.n = s.cfg.filter.n;
  fopt.delta = s.cfg.filter.delta;
  fopt.mode = extract_mode_from_string(s.cfg.verifier.mode);
  fopt.params = {s.cfg.filter.temperature, s.cfg.eval.max_tokens, std::nullopt};
  fopt.system_prompt = s.cfg.system_prompt;

  std::map<std::string, ShardedInstruction> instrs;
  if (!a.gold.empty()) instrs = load_instructions(a.gold);

  s.begin();
  const std::string path = s.output(a.out);
  ResumableOutput out(path, [](const json& j) -> std::optional<std::string> {
    return record_key(j.value("problem_id", std::string()), j.value("source_index", 0));
  });
  std::vector<std::string> order;
  int index = 0;
  for (const auto& line : read_jsonl(a.histories)) {
    const auto& j = line.value;
    const int source_index = index++;
    std::string id, full, gold;
    std::vector<Turn> history;
    try {
      if (j.contains("turns")) {
        auto rec = j.get<ConversationRecord>();
        if (!rec.complete) continue;
        id = rec.problem_id;
        history = final_history(rec);
      } else {
        id = j.at("problem_id").get<std::string>();
        history = j.at("history").get<std::vector<Turn>>();
        full = j.value("full_instruction", std::string());
        gold = j.value("gold_answer", std::string());
      }
      validate_history(history);
    } catch (const std::exception& e) {
      throw ValidationError(a.histories + ":" + std::to_string(line.line_number) + ": " + e.what());
    }
    if (full.empty() || gold.empty()) {
      auto it = instrs.find(id);
      if (it == instrs.end())
        throw ValidationError(a.histories + ":" + std::to_string(line.line_number) +
                              ": no full instruction for " + id + " (pass --gold)");
      full = merge(it->second);
      gold = it->second.gold_answer;
    }
    const std::string key = record_key(id, source_index);
    order.push_back(key);
    if (out.has(key)) continue;
    auto verdict = filter_history(id, history, full, gold, *backend, fopt, derive_seed(s.cfg.seed, key, 0));
    json v = {{"problem_id", id}, {"source_index", source_index}, {"verdict", verdict},
              {"history", history}, {"full_instruction", full}, {"gold_answer", gold}};
    out.add(v);
  }
  out.finalize(order);

  // Keep histories only for retained (and, with a cap, selected) verdicts.
  std::vector<json> all;
  std::vector<FilterVerdict> verdicts;
  for (const auto& line : read_jsonl(path)) {
    all.push_back(line.value);
    verdicts.push_back(line.value.at("verdict").get<FilterVerdict>());
  }
  std::vector<std::size_t> keep;
  if (s.cfg.filter.cap) keep = cap_retained(verdicts, static_cast<std::size_t>(*s.cfg.filter.cap), s.cfg.seed);
  else keep = cap_retained(verdicts, verdicts.size(), s.cfg.seed);
  std::set<std::size_t> kept(keep.begin(), keep.end());
  std::string content;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!kept.count(i)) {
      all[i].erase("history");
      all[i].erase("full_instruction");
      all[i].erase("gold_answer");
    }
    content += dump_line(all[i]);
  }
  write_file_atomic(path, content);
  note("filter: " + std::to_string(kept.size()) + " of " + std::to_string(all.size()) + " histories retained");
  return 0;
}

// --- advantage ---------------------------------------------------------------------

struct AdvantageArgs {
  std::string groups, ref, out, mode;
  bool no_verifier = false;
  bool no_anchor = false;
};

int cmd_advantage(Session& s, const AdvantageArgs& a) {
  if (a.no_verifier) s.cfg.training.use_verifier = false;
  if (a.no_anchor) s.cfg.training.use_anchor = false;
  if (!a.mode.empty()) s.cfg.verifier.mode = a.mode;
  RewardOptions ropt;
  ropt.use_verifier = s.cfg.training.use_verifier;
  ropt.use_anchor = s.cfg.training.use_anchor;
  ropt.verifier_mode = extract_mode_from_string(s.cfg.verifier.mode);
  ropt.system_prompt = s.cfg.system_prompt;
  BackendHandle ref;
  if (ropt.use_anchor) ref = open_backend(s, a.ref, s.cfg.reference, "ref");
  s.begin();
  ResumableOutput out(s.output(a.out), [](const json& j) -> std::optional<std::string> {
    return record_key(j.value("problem_id", std::string()), j.value("source_index", 0));
  });
  std::vector<std::string> order;
  int index = 0;
  for (const auto& line : read_jsonl(a.groups)) {
    const int source_index = line.value.value("source_index", index);
    ++index;
    RolloutGroup group;
    try {
      group = line.value.get<RolloutGroup>();
    } catch (const std::exception& e) {
      throw ValidationError(a.groups + ":" + std::to_string(line.line_number) + ": " + e.what());
    }
    const std::string key = record_key(group.problem_id, source_index);
    order.push_back(key);
    if (out.has(key)) continue;
    if (group.full_instruction.empty() || group.gold_answer.empty())
      throw ValidationError(a.groups + ":" + std::to_string(line.line_number) +
                            ": group needs full_instruction and gold_answer");
    UniformBackend unused(2);
    score_group(group, ref ? *ref : static_cast<Backend&>(unused), ropt);
    json v = group;
    v["source_index"] = source_index;
    out.add(v);
  }
  out.finalize(order);
  return 0;
}

// --- train-toy ---------------------------------------------------------------------

struct TrainToyArgs {
  std::string task = "sum";
  std::string out = "metrics.csv";
  std::string policy_out;
  std::string alpha = "auto";
  int steps = -1;
  int group = -1;
  double lr = -1.0;
  int histories = -1;
  bool no_verifier = false;
  bool quiet = false;
};

int cmd_train_toy(Session& s, const TrainToyArgs& a) {
  if (a.task != "sum") throw ValidationError("--task: only 'sum' is available");
  if (a.steps >= 0) s.cfg.toy.steps = a.steps;
  if (a.group > 0) s.cfg.training.group_size = a.group;
  if (a.lr >= 0.0) s.cfg.toy.learning_rate = a.lr;
  if (a.histories > 0) s.cfg.toy.histories_per_step = a.histories;
  if (a.no_verifier) s.cfg.training.use_verifier = false;
  if (a.alpha == "0" || a.alpha == "off") s.cfg.training.use_anchor = false;
  else if (a.alpha != "auto") throw ValidationError("--alpha must be auto (1/G) or 0");

  RlstaConfig rc;
  rc.task = {s.cfg.toy.operands, s.cfg.toy.operand_min, s.cfg.toy.operand_max};
  rc.max_tokens = s.cfg.toy.max_tokens;
  rc.steps = s.cfg.toy.steps;
  rc.histories_per_step = s.cfg.toy.histories_per_step;
  rc.group_size = s.cfg.training.group_size;
  rc.filter_n = s.cfg.filter.n;
  rc.filter_delta = s.cfg.filter.delta;
  rc.learning_rate = s.cfg.toy.learning_rate;
  rc.updates_per_batch = s.cfg.training.updates_per_batch;
  rc.objective = {s.cfg.training.clip_eps, s.cfg.training.kl_coef,
                  kl_estimator_from_string(s.cfg.training.kl_estimator)};
  rc.use_verifier = s.cfg.training.use_verifier;
  rc.use_anchor = s.cfg.training.use_anchor;
  rc.seed = s.cfg.seed;
  rc.eval_every = s.cfg.toy.eval_every;

  s.begin();
  const std::string out = s.output(a.out);
  const std::string marker = out + ".complete";
  const std::string policy_out = a.policy_out.empty() ? std::string() : s.output(a.policy_out);
  const std::string hash = s.cfg.hash();
  if (fs::exists(out) && fs::exists(marker) && trim(read_file(marker)) == hash &&
      (policy_out.empty() || fs::exists(policy_out))) {
    note("train-toy: " + out + " is complete for this configuration; nothing to do");
    return 0;
  }
  fs::remove(marker);

  ToyPolicy policy(s.cfg.toy.window);
  PretrainConfig pc;
  pc.steps = s.cfg.toy.pretrain_steps;
  pc.lr = s.cfg.toy.pretrain_lr;
  pc.seed = s.cfg.seed;
  pc.max_tokens = s.cfg.toy.max_tokens;
  const auto pre = pretrain_single_turn(policy, rc.task, pc);
  note("pretrained: single-turn " + std::to_string(pre.single_acc) + ", multi-turn " +
       std::to_string(pre.multi_acc));
  const ToyPolicy reference = policy;

  std::string csv = metrics_header() + "\n";
  run_rlsta_toy(policy, reference, rc, [&](const MetricsRow& row) {
    csv += format_metrics(row) + "\n";
    if (!a.quiet) std::cerr << format_metrics(row) << "\n";
  });
  write_file_atomic(out, csv);
  if (!policy_out.empty()) write_file_atomic(policy_out, policy.to_json().dump() + "\n");
  write_file_atomic(marker, hash + "\n");
  return 0;
}

// --- analyze-inertia ---------------------------------------------------------------

struct InertiaArgs {
  std::string records, single, gold, judge, out;
  double threshold = 0.7;
};

struct Exchange {
  std::string query, response;
};

std::vector<Exchange> exchanges(const ConversationRecord& r) {
  std::vector<Exchange> out;
  for (std::size_t i = 0; i + 1 < r.turns.size(); ++i)
    if (r.turns[i].role == Role::user && r.turns[i + 1].role == Role::assistant)
      out.push_back({r.turns[i].text, r.turns[i + 1].text});
  return out;
}

int cmd_analyze_inertia(Session& s, const InertiaArgs& a) {
  auto judge = open_backend(s, a.judge, s.cfg.judge, "judge");
  const auto mode = extract_mode_from_string(s.cfg.verifier.mode);
  const auto gold = gold_map(load_instructions(a.gold));
  auto verify_all = [&](std::vector<ConversationRecord>& rs) {
    for (auto& r : rs) {
      if (r.verified) continue;
      auto it = gold.find(r.problem_id);
      if (it == gold.end()) throw ValidationError("analyze-inertia: no gold answer for " + r.problem_id);
      r.verified = r.complete ? verify(r.final_answer_text, it->second, mode) : 0;
    }
  };
  auto records = read_jsonl_as<ConversationRecord>(a.records);
  std::vector<ConversationRecord> singles;
  if (!a.single.empty()) singles = read_jsonl_as<ConversationRecord>(a.single);
  std::vector<ConversationRecord> multi;
  for (auto& r : records) (r.scenario_kind == ScenarioKind::single_turn ? singles : multi).push_back(r);
  verify_all(singles);
  verify_all(multi);

  std::vector<std::string> problems;
  for (const auto& r : multi)
    if (problems.empty() || std::find(problems.begin(), problems.end(), r.problem_id) == problems.end())
      problems.push_back(r.problem_id);
  std::map<std::string, std::pair<int, int>> tally;
  std::map<std::string, std::string> example;
  for (const auto& r : singles) {
    auto& t = tally[r.problem_id];
    t.first += 1;
    t.second += *r.verified;
    if (*r.verified == 1 && !example.count(r.problem_id)) example[r.problem_id] = r.final_answer_text;
  }
  std::vector<std::string> selected;
  if (tally.empty()) {
    note("analyze-inertia: no single-turn records; every problem is analysed");
    selected = problems;
  } else {
    std::map<std::string, double> acc;
    for (const auto& [id, t] : tally) acc[id] = static_cast<double>(t.second) / t.first;
    selected = select_analysis_set(problems, acc, a.threshold, note);
  }
  const std::set<std::string> chosen(selected.begin(), selected.end());

  s.begin();
  const std::string out_path = s.output(a.out);
  // Judge results are cached line by line so an interrupted run can pick up again.
  const std::string cache_path = out_path + ".partial.jsonl";
  ResumableOutput cache(cache_path, [](const json& j) -> std::optional<std::string> {
    return j.value("kind", std::string()) + ":" + j.value("key", std::string());
  });
  std::vector<std::string> order;
  std::vector<IntensityReport> reports;
  std::vector<RootCauseLabel> causes;
  json skipped = json::array();
  for (const auto& r : multi) {
    if (!chosen.count(r.problem_id)) continue;
    const std::string key = record_key(r.problem_id, r.sample_index);
    const auto ex = exchanges(r);
    if (!r.complete || ex.size() < 2 || !example.count(r.problem_id)) {
      skipped.push_back({{"key", key},
                         {"reason", !r.complete ? "incomplete record"
                                    : ex.size() < 2 ? "fewer than two exchanges"
                                                    : "no correct single-turn attempt to compare against"}});
      continue;
    }
    const std::string ikey = "intensity:" + key;
    order.push_back(ikey);
    if (!cache.has(ikey)) {
      IntensityInput in;
      in.problem_id = r.problem_id;
      in.example_attempt = example.at(r.problem_id);
      in.first_query = ex[ex.size() - 2].query;
      in.first_response = ex[ex.size() - 2].response;
      in.second_query = ex.back().query;
      in.second_response = ex.back().response;
      in.correct_answer = gold.at(r.problem_id);
      in.history_quality = *r.verified == 1 ? "high" : "low";
      cache.add({{"kind", "intensity"}, {"key", key}, {"value", score_intensity(in, *judge)}});
    }
    reports.push_back(cache.get(ikey).at("value").get<IntensityReport>());
    if (*r.verified == 0) {
      const std::string ckey = "root_cause:" + key;
      order.push_back(ckey);
      if (!cache.has(ckey))
        cache.add({{"kind", "root_cause"},
                   {"key", key},
                   {"value", classify_root_cause(r, gold.at(r.problem_id), *judge)}});
      causes.push_back(cache.get(ckey).at("value").get<RootCauseLabel>());
    }
  }
  cache.finalize(order);

  json comparisons = json::object();
  const std::pair<const char*, Tier IntensityReport::*> pairs[] = {
      {"example_r1", &IntensityReport::tier_example_r1},
      {"example_r2", &IntensityReport::tier_example_r2},
      {"r1_r2", &IntensityReport::tier_r1_r2}};
  for (const auto& [name, member] : pairs) {
    std::vector<Tier> hi, lo;
    for (const auto& rep : reports) (rep.history_quality == "high" ? hi : lo).push_back(rep.*member);
    if (hi.empty() || lo.empty()) {
      comparisons[name] = nullptr;
      continue;
    }
    comparisons[name] = compare_distributions(hi, lo);
  }
  if (reports.empty()) note("analyze-inertia: no records could be scored");
  json doc = {{"reports", reports},
              {"comparisons", comparisons},
              {"root_causes", causes},
              {"root_cause_proportions", causes.empty() ? json(nullptr) : json(root_cause_proportions(causes))},
              {"analysis_set", selected},
              {"skipped", skipped}};
  write_file_atomic(out_path, doc.dump(2) + "\n");
  fs::remove(cache_path);
  return 0;
}

// --- report ------------------------------------------------------------------------

struct ReportArgs {
  std::string scores, metrics, inertia, out, csv;
};

int cmd_report(Session& s, const ReportArgs& a) {
  ReportInputs in;
  if (!a.scores.empty()) in.scores_path = a.scores;
  if (!a.metrics.empty()) in.metrics_path = a.metrics;
  if (!a.inertia.empty()) in.inertia_path = a.inertia;
  in.run_seed = s.cfg.seed;
  in.config_hash = s.cfg.hash();
  const std::string text = render_report(in);
  s.begin();
  if (a.out.empty()) std::cout << text;
  else write_file_atomic(s.output(a.out), text);
  if (!a.csv.empty()) {
    if (a.metrics.empty()) throw ValidationError("--csv needs --metrics");
    write_file_atomic(s.output(a.csv), metrics_csv(a.metrics));
  }
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Multi-turn RL with single-turn anchors: scenario building, rollouts, filtering, rewards and a toy trainer"};
  app.require_subcommand(1);
  Session s;
  app.add_option("--config", s.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--run-dir", s.run_dir, "write outputs, config snapshot and manifest here");
  auto* seed_opt = app.add_option("--seed", s.seed, "run seed (overrides the config)");

  ShardArgs shard;
  auto* c_shard = app.add_subcommand("shard", "segment problems into shards with a judge");
  c_shard->add_option("--in", shard.in, "problems JSONL (problem_id, question, answer)")->required()->check(CLI::ExistingFile);
  c_shard->add_option("--out", shard.out, "sharded instructions JSONL")->required();
  c_shard->add_option("--judge", shard.judge, "judge endpoint (mock:<file>, http(s)://...)");
  c_shard->add_option("--retries", shard.retries, "schema retries per prompt");

  CorruptArgs corr;
  auto* c_corrupt = app.add_subcommand("corrupt", "corrupt shard numbers for MT-Refine");
  c_corrupt->add_option("--in", corr.in, "sharded instructions JSONL")->required()->check(CLI::ExistingFile);
  c_corrupt->add_option("--out", corr.out, "corruptions JSONL")->required();
  c_corrupt->add_option("--mode", corr.mode, "deterministic or llm");
  c_corrupt->add_option("--judge", corr.judge, "judge endpoint for llm mode");
  c_corrupt->add_option("--max-shards", corr.max_shards, "corrupt at most this many numeric shards");

  RolloutArgs roll;
  auto* c_rollout = app.add_subcommand("rollout", "simulate conversations or sample groups");
  c_rollout->add_option("--scenario", roll.scenario, "single, mt_add, mt_refine, simulated or group")->required();
  c_rollout->add_option("--in", roll.in, "sharded JSONL, or filter output for group")->required()->check(CLI::ExistingFile);
  c_rollout->add_option("--out", roll.out, "output JSONL")->required();
  c_rollout->add_option("--backend", roll.backend, "policy endpoint");
  c_rollout->add_option("--simulator", roll.simulator, "user simulator endpoint (simulated)");
  c_rollout->add_option("--corruptions", roll.corruptions, "corruptions JSONL (mt_refine)")->check(CLI::ExistingFile);
  c_rollout->add_option("--n", roll.n, "samples per problem (group size for group)");
  c_rollout->add_option("--temp", roll.temp, "sampling temperature");
  c_rollout->add_option("--max-tokens", roll.max_tokens, "max tokens per reply");
  c_rollout->add_flag("--abstain", roll.abstain, "prepend the abstain instruction");

  ScoreArgs score;
  std::string ks;
  auto* c_score = app.add_subcommand("score", "verify records and aggregate accuracy, pass@k, LiC");
  c_score->add_option("--records", score.records, "conversation records JSONL")->required()->check(CLI::ExistingFile);
  c_score->add_option("--gold", score.gold, "sharded instructions JSONL")->required()->check(CLI::ExistingFile);
  c_score->add_option("--mode", score.mode, "boxed_then_last_number, last_four_numbers or exact");
  c_score->add_option("--report", score.report, "write the score JSON here (stdout otherwise)");
  c_score->add_option("--k", score.ks, "pass@k values")->delimiter(',');

  FilterArgs filt;
  auto* c_filter = app.add_subcommand("filter", "latent-capability filtering of histories");
  c_filter->add_option("--histories", filt.histories, "records or history JSONL")->required()->check(CLI::ExistingFile);
  c_filter->add_option("--gold", filt.gold, "sharded JSONL for full instructions")->check(CLI::ExistingFile);
  c_filter->add_option("--backend", filt.backend, "policy endpoint");
  c_filter->add_option("--n", filt.n, "samples per estimate");
  c_filter->add_option("--delta", filt.delta, "margin (default 1/n)");
  c_filter->add_option("--cap", filt.cap, "keep at most this many retained histories");
  c_filter->add_option("--out", filt.out, "verdicts and retained histories JSONL")->required();

  AdvantageArgs adv;
  auto* c_adv = app.add_subcommand("advantage", "score groups and export the training batch");
  c_adv->add_option("--groups", adv.groups, "groups JSONL")->required()->check(CLI::ExistingFile);
  c_adv->add_option("--ref", adv.ref, "frozen reference endpoint");
  c_adv->add_option("--out", adv.out, "batch JSONL")->required();
  c_adv->add_option("--mode", adv.mode, "verifier extraction mode");
  c_adv->add_flag("--no-verifier", adv.no_verifier, "zero the verifier reward");
  c_adv->add_flag("--no-anchor", adv.no_anchor, "drop the anchor reward");

  TrainToyArgs toy;
  auto* c_toy = app.add_subcommand("train-toy", "pretrain and RL-train the toy policy");
  c_toy->add_option("--task", toy.task, "task (sum)");
  c_toy->add_option("--steps", toy.steps, "RL steps");
  c_toy->add_option("--group", toy.group, "group size G");
  c_toy->add_option("--alpha", toy.alpha, "anchor weight: auto (1/G) or 0");
  c_toy->add_option("--lr", toy.lr, "learning rate");
  c_toy->add_option("--histories", toy.histories, "histories per step");
  c_toy->add_option("--out", toy.out, "metrics CSV");
  c_toy->add_option("--policy-out", toy.policy_out, "trained policy JSON");
  c_toy->add_flag("--no-verifier", toy.no_verifier, "anchor reward only");
  c_toy->add_flag("--quiet", toy.quiet, "no progress on stderr");

  InertiaArgs inert;
  auto* c_inert = app.add_subcommand("analyze-inertia", "contextual-inertia intensity and root causes");
  c_inert->add_option("--records", inert.records, "conversation records JSONL")->required()->check(CLI::ExistingFile);
  c_inert->add_option("--single", inert.single, "single-turn records JSONL")->check(CLI::ExistingFile);
  c_inert->add_option("--gold", inert.gold, "sharded JSONL")->required()->check(CLI::ExistingFile);
  c_inert->add_option("--judge", inert.judge, "judge endpoint");
  c_inert->add_option("--threshold", inert.threshold, "single-turn accuracy gate");
  c_inert->add_option("--out", inert.out, "inertia JSON")->required();

  ReportArgs rep;
  auto* c_report = app.add_subcommand("report", "render a plain-text report");
  c_report->add_option("--scores", rep.scores, "score JSON")->check(CLI::ExistingFile);
  c_report->add_option("--metrics", rep.metrics, "toy metrics CSV")->check(CLI::ExistingFile);
  c_report->add_option("--inertia", rep.inertia, "inertia JSON")->check(CLI::ExistingFile);
  c_report->add_option("--out", rep.out, "report path (stdout otherwise)");
  c_report->add_option("--csv", rep.csv, "copy of the training curve for plotting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }
  for (int i = 1; i < argc; ++i) s.args.emplace_back(argv[i]);
  s.seed_set = seed_opt->count() > 0;

  int rc = 0;
  try {
    s.load();
    auto* sub = app.get_subcommands().front();
    s.command = sub->get_name();
    if (sub == c_shard) rc = cmd_shard(s, shard);
    else if (sub == c_corrupt) rc = cmd_corrupt(s, corr);
    else if (sub == c_rollout) rc = cmd_rollout(s, roll);
    else if (sub == c_score) rc = cmd_score(s, score);
    else if (sub == c_filter) rc = cmd_filter(s, filt);
    else if (sub == c_adv) rc = cmd_advantage(s, adv);
    else if (sub == c_toy) rc = cmd_train_toy(s, toy);
    else if (sub == c_inert) rc = cmd_analyze_inertia(s, inert);
    else if (sub == c_report) rc = cmd_report(s, rep);
  } catch (const ValidationError& e) {
    note(std::string("error: ") + e.what());
    rc = kExitValidation;
  } catch (const SchemaError& e) {
    note(std::string("judge error: ") + e.what() + "\nraw output: " + e.raw_output());
    rc = kExitBackend;
  } catch (const BackendError& e) {
    note(std::string("backend error: ") + e.what());
    if (!e.payload().empty()) note("partial state: " + e.payload());
    rc = kExitBackend;
  } catch (const CapabilityError& e) {
    note(std::string("backend capability: ") + e.what());
    rc = kExitBackend;
  } catch (const NumericalError& e) {
    note(std::string("numerical failure: ") + e.what() + "\n" + e.diagnostic());
    rc = 1;
  } catch (const fs::filesystem_error& e) {
    note(std::string("filesystem: ") + e.what());
    rc = kExitValidation;
  }
  try {
    s.finish(rc);
  } catch (const std::exception& e) {
    note(std::string("could not write manifest: ") + e.what());
  }
  return rc;
}

}  // namespace rlsta::cli
