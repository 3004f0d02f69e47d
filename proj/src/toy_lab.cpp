#include "rlsta/toy_lab.hpp"
#include "rlsta/errors.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "rlsta/capability_filter.hpp"
#include "rlsta/reward.hpp"
#include "rlsta/rollout.hpp"

namespace rlsta {

void SumTask::validate() const {
  if (k < 1) throw ValidationError("sum task: operand count must be >= 1");
  if (lo < 0 || hi > 9 || lo > hi) throw ValidationError("sum task: operands must lie in 0-9");
}

std::vector<int> SumTask::sample(Rng& rng) const {
  std::vector<int> ops;
  for (int i = 0; i < k; ++i) ops.push_back(lo + static_cast<int>(rng.below(hi - lo + 1)));
  return ops;
}

std::vector<std::vector<int>> SumTask::all_instances() const {
  std::vector<std::vector<int>> out{{}};
  for (int i = 0; i < k; ++i) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : out)
      for (int v = lo; v <= hi; ++v) {
        auto p = prefix;
        p.push_back(v);
        next.push_back(std::move(p));
      }
    out = std::move(next);
  }
  return out;
}

std::string SumTask::answer(const std::vector<int>& operands) {
  int s = 0;
  for (int v : operands) s += v;
  return std::to_string(s);
}

std::string SumTask::single_turn_text(const std::vector<int>& operands) {
  std::string s = "SUM";
  for (int v : operands) s += " " + std::to_string(v);
  return s + " =";
}

std::vector<std::string> SumTask::multi_turn_texts(const std::vector<int>& operands) {
  std::vector<std::string> out{"SUM?"};
  for (int v : operands) out.push_back(std::to_string(v));
  return out;
}

std::string SumTask::problem_id(const std::vector<int>& operands) {
  std::string s = "sum";
  for (int v : operands) s += "-" + std::to_string(v);
  return s;
}

ShardedInstruction SumTask::instruction(const std::vector<int>& operands) const {
  ShardedInstruction instr;
  instr.problem_id = problem_id(operands);
  instr.initial_query = "SUM?";
  for (std::size_t i = 0; i < operands.size(); ++i)
    instr.shards.push_back({static_cast<int>(i), std::to_string(operands[i]), true});
  instr.gold_answer = answer(operands);
  instr.source_text = single_turn_text(operands);
  return instr;
}

TurnPlan SumTask::plan(const std::vector<int>& operands) const {
  auto p = build_mt_add(instruction(operands));
  // The toy grammar has no newline-joined form; its full-information query is the
  // single-turn surface.
  p.full_instruction = single_turn_text(operands);
  return p;
}

namespace {

using Key = ToyPolicy::Key;
using KeyDist = std::map<Key, double>;

Key push_user(const ToyPolicy& policy, Key key, const std::string& text) {
  key = policy.push(key, toy::kUser);
  for (int id : toy::tokenize(text)) key = policy.push(key, id);
  return policy.push(key, toy::kAssistant);
}

// Distribution of the window after the model's reply (end token not streamed).
void expand_reply(const ToyPolicy& policy, Key key, double p, int depth, int max_tokens,
                  KeyDist& out) {
  if (depth == max_tokens) {
    out[key] += p;
    return;
  }
  std::vector<double> lp;
  policy.log_probs_key(key, lp);
  for (int v = 0; v < toy::kVocab; ++v) {
    const double q = p * std::exp(lp[v]);
    if (q == 0.0) continue;
    if (v == toy::kEnd) {
      out[key] += q;
    } else {
      expand_reply(policy, policy.push(key, v), q, depth + 1, max_tokens, out);
    }
  }
}

double correct_from(const ToyPolicy& policy, Key key, const std::vector<int>& gold, int max_tokens) {
  if (gold.size() > static_cast<std::size_t>(max_tokens)) return 0.0;
  std::vector<double> lp;
  double logp = 0.0;
  for (int id : gold) {
    policy.log_probs_key(key, lp);
    logp += lp[id];
    key = policy.push(key, id);
  }
  if (gold.size() < static_cast<std::size_t>(max_tokens)) {
    policy.log_probs_key(key, lp);
    logp += lp[toy::kEnd];
  }
  return std::exp(logp);
}

}  // namespace

double exact_reply_accuracy(const ToyPolicy& policy, const std::vector<Turn>& history,
                            const std::string& gold, int max_tokens) {
  return correct_from(policy, policy.key_of(policy.encode_prompt(history)), toy::tokenize(gold),
                      max_tokens);
}

double exact_conversation_accuracy(const ToyPolicy& policy, const std::vector<int>& operands,
                                   int max_tokens) {
  const auto texts = SumTask::multi_turn_texts(operands);
  const auto gold = toy::tokenize(SumTask::answer(operands));
  KeyDist dist{{policy.empty_key(), 1.0}};
  for (std::size_t t = 0; t + 1 < texts.size(); ++t) {
    KeyDist next;
    for (const auto& [key, p] : dist)
      expand_reply(policy, push_user(policy, key, texts[t]), p, 0, max_tokens, next);
    dist = std::move(next);
  }
  double acc = 0.0;
  for (const auto& [key, p] : dist)
    acc += p * correct_from(policy, push_user(policy, key, texts.back()), gold, max_tokens);
  return acc;
}

double exact_single_turn_accuracy(const ToyPolicy& policy, const SumTask& task, int max_tokens) {
  double total = 0.0;
  const auto all = task.all_instances();
  for (const auto& ops : all) {
    const Key key = push_user(policy, policy.empty_key(), SumTask::single_turn_text(ops));
    total += correct_from(policy, key, toy::tokenize(SumTask::answer(ops)), max_tokens);
  }
  return total / static_cast<double>(all.size());
}

double exact_multi_turn_accuracy(const ToyPolicy& policy, const SumTask& task, int max_tokens) {
  double total = 0.0;
  const auto all = task.all_instances();
  for (const auto& ops : all) total += exact_conversation_accuracy(policy, ops, max_tokens);
  return total / static_cast<double>(all.size());
}

PretrainResult pretrain_single_turn(ToyPolicy& policy, const SumTask& task,
                                    const PretrainConfig& cfg) {
  task.validate();
  if (cfg.steps < 0 || cfg.lr < 0.0) throw ValidationError("pretrain: steps and lr must be >= 0");
  Rng rng(cfg.seed);
  std::vector<double> lp;
  auto& theta = policy.mutable_params();
  auto ascend = [&](std::size_t row, int target, const std::vector<double>& logp) {
    for (int v = 0; v < toy::kVocab; ++v)
      theta[row * toy::kVocab + v] += cfg.lr * ((v == target ? 1.0 : 0.0) - std::exp(logp[v]));
  };
  for (int step = 0; step < cfg.steps; ++step) {
    const auto ops = task.sample(rng);
    Key key = push_user(policy, policy.empty_key(), SumTask::single_turn_text(ops));
    auto targets = toy::tokenize(SumTask::answer(ops));
    if (targets.size() > static_cast<std::size_t>(cfg.max_tokens))
      targets.resize(static_cast<std::size_t>(cfg.max_tokens));
    else if (targets.size() < static_cast<std::size_t>(cfg.max_tokens))
      targets.push_back(toy::kEnd);
    for (int target : targets) {
      const auto row = policy.touch_key(key);
      policy.log_probs_key(key, lp);
      ascend(row, target, lp);
      // Backoff: the default row learns the unigram distribution of targets.
      policy.log_probs_row(theta, 0, lp);
      ascend(0, target, lp);
      key = policy.push(key, target);
    }
  }
  PretrainResult res;
  res.single_acc = exact_single_turn_accuracy(policy, task, cfg.max_tokens);
  res.multi_acc = exact_multi_turn_accuracy(policy, task, cfg.max_tokens);
  if (cfg.enforce_gap && (res.single_acc < 0.9 || res.multi_acc > 0.5 * res.single_acc)) {
    std::ostringstream msg;
    msg << "pretraining budget exhausted: single-turn accuracy " << res.single_acc
        << ", multi-turn accuracy " << res.multi_acc
        << " (need single >= 0.9 and multi <= 0.5 * single); increase the step budget";
    throw ValidationError(msg.str());
  }
  return res;
}

std::string metrics_header() {
  return "step,single_acc,multi_acc,objective,kl,retained,mean_reward,clip_fraction";
}

std::string format_metrics(const MetricsRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6g,%.6g,%d,%.6f,%.6f", r.step, r.single_acc,
                r.multi_acc, r.objective, r.kl, r.retained, r.mean_reward, r.clip_fraction);
  return buf;
}

MetricsRow parse_metrics(const std::string& line) {
  MetricsRow r;
  char tail = 0;
  const int n = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%d,%lf,%lf%c", &r.step,
                            &r.single_acc, &r.multi_acc, &r.objective, &r.kl, &r.retained,
                            &r.mean_reward, &r.clip_fraction, &tail);
  if (n != 8) throw ValidationError("malformed metrics line: '" + line + "'");
  return r;
}

std::vector<MetricsRow> run_rlsta_toy(ToyPolicy& policy, const ToyPolicy& reference,
                                      const RlstaConfig& cfg,
                                      const std::function<void(const MetricsRow&)>& on_row) {
  cfg.task.validate();
  validate(cfg.objective);
  if (cfg.group_size < 2) throw ValidationError("group size must be >= 2");
  if (cfg.histories_per_step < 1 || cfg.steps < 0 || cfg.updates_per_batch < 1 ||
      cfg.eval_every < 1)
    throw ValidationError("toy run: bad step configuration");
  if (reference.window() != policy.window())
    throw ValidationError("toy run: reference and policy windows differ");

  ToyBackend live(policy, cfg.max_tokens, "toy-policy");
  ToyBackend ref(reference, cfg.max_tokens, "toy-reference");
  const SamplingParams train_params{1.0, cfg.max_tokens, std::nullopt};

  RolloutOptions rollout;
  rollout.params = train_params;
  FilterOptions fopt;
  fopt.n = cfg.filter_n;
  fopt.delta = cfg.filter_delta;
  fopt.mode = ExtractMode::exact;
  fopt.params = train_params;
  RewardOptions ropt;
  ropt.use_verifier = cfg.use_verifier;
  ropt.use_anchor = cfg.use_anchor;
  ropt.verifier_mode = ExtractMode::exact;

  std::vector<MetricsRow> rows;
  auto emit = [&](MetricsRow row) {
    row.single_acc = exact_single_turn_accuracy(policy, cfg.task, cfg.max_tokens);
    row.multi_acc = exact_multi_turn_accuracy(policy, cfg.task, cfg.max_tokens);
    rows.push_back(row);
    if (on_row) on_row(row);
  };

  MetricsRow initial;
  emit(initial);

  for (int step = 1; step <= cfg.steps; ++step) {
    const auto step_seed = derive_seed(cfg.seed, "step", static_cast<std::uint64_t>(step));
    Rng rng(step_seed);
    std::vector<std::vector<PolicySample>> batch;
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (int h = 0; h < cfg.histories_per_step; ++h) {
      const auto ops = cfg.task.sample(rng);
      auto plan = cfg.task.plan(ops);
      const std::string final_turn = plan.user_turns.back();
      plan.user_turns.pop_back();
      plan.delivers.pop_back();
      auto rec = run_multi_turn(plan, live, rollout, derive_seed(step_seed, "history", h));
      if (!rec.complete) throw BackendError("toy rollout failed: " + rec.failure.value_or(""), false);
      auto history = rec.turns;
      history.push_back({Role::user, final_turn, std::nullopt});

      const auto verdict = filter_history(plan.problem_id, history, plan.full_instruction,
                                          plan.gold_answer, live, fopt,
                                          derive_seed(step_seed, "filter", h));
      if (!verdict.retained) continue;

      auto group = sample_group(history, live, cfg.group_size, train_params,
                                derive_seed(step_seed, "group", h), plan.problem_id);
      group.full_instruction = plan.full_instruction;
      group.gold_answer = plan.gold_answer;
      score_group(group, ref, ropt);
      for (const auto& r : group.rewards) {
        reward_sum += r.r_total;
        ++reward_count;
      }
      batch.push_back(prepare_group(group, policy));
    }

    MetricsRow row;
    row.step = step;
    row.retained = static_cast<int>(batch.size());
    row.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
    if (batch.empty()) {
      if (step == 1)
        throw ValidationError("filter retained no histories: the single/multi-turn gap premise does not hold");
    } else {
      for (int u = 0; u < cfg.updates_per_batch; ++u) {
        auto m = train_step(policy, batch, reference.params(), cfg.learning_rate, cfg.objective,
                            row.mean_reward);
        if (u == 0) {
          row.objective = m.objective;
          row.kl = m.mean_kl;
          row.clip_fraction = m.clip_fraction;
        }
      }
    }
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      emit(row);
    }
  }
  return rows;
}

double param_distance(const ToyPolicy& policy, const std::vector<double>& a,
                      const std::vector<double>& b) {
  auto x = a;
  auto y = b;
  policy.conform(x);
  policy.conform(y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

}  // namespace rlsta
