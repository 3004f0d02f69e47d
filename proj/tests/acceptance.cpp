// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "rlsta/capability_filter.hpp"
#include "rlsta/errors.hpp"
#include "rlsta/grpo.hpp"
#include "rlsta/mock_backend.hpp"
#include "rlsta/reward.hpp"
#include "rlsta/rollout.hpp"
#include "rlsta/scenario.hpp"
#include "rlsta/toy_lab.hpp"
#include "rlsta/verifier.hpp"

using namespace rlsta;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 6) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

// --- 1 ---------------------------------------------------------------------------

Verdict lic_arithmetic() {
  const double v = lic_score(0.359, 0.524);
  return {std::abs(v - 0.685) <= 0.001, "lic_score(0.359, 0.524) = " + num(v)};
}

// --- 2 ---------------------------------------------------------------------------

double token_logprob(const ToyPolicy& p, const std::vector<double>& theta, const TokenContext& ctx, int tok) {
  std::vector<double> lp;
  p.log_probs(theta, ctx, lp);
  return lp[static_cast<std::size_t>(tok)];
}

Verdict gradient_fidelity() {
  const double h = 1e-5;
  const std::size_t sizes[] = {2, 4, 8};
  double worst = 0.0;
  int groups = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(2, "grad", seed));
    const std::size_t g = sizes[rng.below(3)];
    ToyPolicy policy(2);
    std::vector<PolicySample> group(g);
    for (auto& s : group) {
      const auto plen = 1 + rng.below(3);
      for (std::uint64_t k = 0; k < plen; ++k) s.prompt.push_back(static_cast<int>(rng.below(toy::kVocab)));
      const auto rlen = 1 + rng.below(6);
      TokenContext ctx = s.prompt;
      for (std::uint64_t k = 0; k < rlen; ++k) {
        policy.touch(ctx);
        s.tokens.push_back(static_cast<int>(rng.below(toy::kVocab)));
        ctx.push_back(s.tokens.back());
      }
    }
    for (auto& x : policy.mutable_params()) x = 2.0 * rng.uniform() - 1.0;
    // sampler a little off the current policy so some ratios leave the clip band
    auto theta_old = policy.params();
    for (auto& x : theta_old) x += 0.2 * rng.uniform() - 0.1;
    auto theta_ref = policy.params();
    for (auto& x : theta_ref) x += 0.6 * rng.uniform() - 0.3;
    std::vector<double> rewards(g);
    for (auto& r : rewards) r = rng.uniform();
    const auto adv = group_advantages(rewards);
    for (std::size_t i = 0; i < g; ++i) {
      auto& s = group[i];
      s.advantage = adv[i];
      TokenContext ctx = s.prompt;
      for (int tok : s.tokens) {
        s.old_logprobs.push_back(token_logprob(policy, theta_old, ctx, tok));
        ctx.push_back(tok);
      }
    }
    const ObjectiveConfig cfg{0.2, 0.5, seed % 2 ? KlEstimator::exact : KlEstimator::k3};
    std::vector<double> grad;
    objective_and_gradient(policy, group, policy.params(), theta_ref, cfg, grad);
    auto t = policy.params();
    std::vector<double> fd(t.size());
    double scale = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double keep = t[j];
      t[j] = keep + h;
      const double up = objective(policy, group, t, theta_ref, cfg).objective;
      t[j] = keep - h;
      const double down = objective(policy, group, t, theta_ref, cfg).objective;
      t[j] = keep;
      fd[j] = (up - down) / (2 * h);
      scale = std::max(scale, std::abs(fd[j]));
    }
    if (!(scale > 0.0)) return {false, "group " + std::to_string(seed) + " has a zero gradient"};
    for (std::size_t j = 0; j < t.size(); ++j) worst = std::max(worst, std::abs(grad[j] - fd[j]) / scale);
    ++groups;
  }
  return {worst <= 1e-4, std::to_string(groups) + " groups, max relative error " + num(worst, 3)};
}

// --- 3 ---------------------------------------------------------------------------

Verdict anchor_oracle() {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(64);
    std::vector<double> lp(n);
    long double sum = 0.0L;
    for (auto& x : lp) {
      const double p = 1e-6 + (1.0 - 1e-6) * rng.uniform();
      x = std::log(p);
      sum += static_cast<long double>(x);
    }
    const double oracle = static_cast<double>(std::exp(sum / static_cast<long double>(n)));
    worst = std::max(worst, std::abs(anchor_reward(lp) - oracle));
  }
  int uniform_misses = 0;
  for (int v = 2; v <= 64; ++v) {
    UniformBackend u(v);
    for (int len = 1; len <= 40; ++len) {
      std::string text = "w";
      for (int k = 1; k < len; ++k) text += " w";
      uniform_misses += anchor_reward(u.score({}, text)) != 1.0 / v;
    }
  }
  return {worst <= 1e-12 && uniform_misses == 0,
          "max deviation " + num(worst, 3) + " over 1000 sequences, " + std::to_string(uniform_misses) +
              " inexact uniform cases"};
}

// --- 4 ---------------------------------------------------------------------------

Verdict advantage_laws() {
  Rng rng(4);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int g = 2 + static_cast<int>(rng.below(15));
    std::vector<int> rv(static_cast<std::size_t>(g));
    for (auto& x : rv) x = static_cast<int>(rng.below(2));
    rv[rng.below(static_cast<std::uint64_t>(g))] = 0;
    std::vector<double> r;
    for (int v : rv) r.push_back(combine(v, 1.0 - rng.uniform(), g));
    const auto a = group_advantages(r);
    double sum = 0.0;
    for (double x : a) sum += x;
    violations += std::abs(sum) > 1e-9;
    const double c = 10.0 * rng.uniform() - 5.0;
    const double k = 0.01 + 20.0 * rng.uniform();
    auto shifted = r, scaled = r;
    for (auto& x : shifted) x += c;
    for (auto& x : scaled) x *= k;
    const auto as = group_advantages(shifted), ak = group_advantages(scaled);
    for (std::size_t i = 0; i < a.size(); ++i) {
      violations += std::abs(as[i] - a[i]) > 1e-9;
      violations += std::abs(ak[i] - a[i]) > 1e-9;
      violations += rv[i] == 1 && !(a[i] > 0.0);
    }
  }
  return {violations == 0, "1000 groups, " + std::to_string(violations) + " violations"};
}

// --- 5 ---------------------------------------------------------------------------

Verdict filtering_oracle() {
  const std::vector<Turn> single{{Role::system, "s", std::nullopt}, {Role::user, "FULL", std::nullopt}};
  const std::vector<Turn> history{{Role::system, "s", std::nullopt},
                                  {Role::user, "HIST a", std::nullopt},
                                  {Role::assistant, "b", std::nullopt},
                                  {Role::user, "c", std::nullopt}};
  auto table = [](const char* key, double p) {
    json line = {{"contains", key},
                 {"outcomes", json::array({{{"completion", "\\boxed{1}"}, {"weight", p}},
                                           {{"completion", "\\boxed{0}"}, {"weight", 1.0 - p}}})}};
    return line.dump();
  };
  Rng rng(5);
  int agree = 0, instances = 0;
  while (instances < 1000) {
    const double ps = rng.uniform(), pm = rng.uniform();
    if (std::abs(ps - pm) < 0.25) continue;
    auto mock = MockBackend::from_jsonl(table("FULL", ps) + "\n" + table("HIST", pm), "two-sided");
    FilterOptions opt;
    opt.n = 64;
    const bool exact = retain(exact_accuracy(single, mock, "1", opt.mode), exact_accuracy(history, mock, "1", opt.mode),
                              opt.margin());
    const auto v = filter_history("p", history, "FULL", "1", mock, opt, static_cast<std::uint64_t>(instances));
    agree += v.retained == exact;
    ++instances;
  }
  return {agree >= 990, std::to_string(agree) + "/1000 Monte Carlo verdicts match"};
}

// --- 6 ---------------------------------------------------------------------------

Verdict toy_rlsta() {
  const auto g = json::parse(read_file(RLSTA_GOLDEN "/toy_thresholds.json"));
  const auto& t = g.at("task");
  const SumTask task{t.at("k"), t.at("lo"), t.at("hi")};
  ToyPolicy reference(g.at("window"));
  PretrainConfig pc;
  pc.steps = g.at("pretrain").at("steps");
  pc.seed = g.at("pretrain").at("seed");
  pc.enforce_gap = false;
  const auto pre = pretrain_single_turn(reference, task, pc);
  const auto& gp = g.at("pretrain");
  if (pre.single_acc < gp.at("min_single").get<double>() ||
      pre.multi_acc > gp.at("max_multi_ratio").get<double>() * pre.single_acc)
    return {false, "pretraining missed its gate: single " + num(pre.single_acc) + ", multi " + num(pre.multi_acc)};

  const auto& gr = g.at("rlsta");
  auto train = [&](bool verifier) {
    RlstaConfig cfg;
    cfg.task = task;
    cfg.steps = gr.at("steps");
    cfg.eval_every = cfg.steps;
    cfg.learning_rate = gr.at("learning_rate");
    cfg.seed = gr.at("seed");
    cfg.use_verifier = verifier;
    ToyPolicy policy = reference;
    return run_rlsta_toy(policy, reference, cfg);
  };
  if (gr.at("steps").get<int>() > gr.at("max_steps").get<int>()) return {false, "step budget exceeded"};
  const auto full = train(true);
  const auto bare = train(false);
  const double gap = full.front().single_acc - full.front().multi_acc;
  const double closed = (full.back().multi_acc - full.front().multi_acc) / gap;
  const double closed_bare = (bare.back().multi_acc - bare.front().multi_acc) / gap;
  const double drop = full.front().single_acc - full.back().single_acc;
  const bool ok = closed >= gr.at("min_gap_closed").get<double>() &&
                  closed_bare >= gr.at("min_gap_closed_no_verifier").get<double>() &&
                  drop <= gr.at("max_single_drop").get<double>();
  return {ok, "single " + num(pre.single_acc, 4) + ", multi " + num(pre.multi_acc, 4) + "; after " +
                  std::to_string(full.back().step) + " steps gap closed " + num(closed, 4) + " (no verifier " +
                  num(closed_bare, 4) + "), single-turn drop " + num(drop, 4)};
}

// --- 7 ---------------------------------------------------------------------------

int cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + RLSTA_CLI + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / "rlsta_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string fix = RLSTA_FIXTURES;
  std::vector<std::string> differing;
  for (const char* scenario : {"single", "mt_add", "mt_refine"}) {
    const std::string base = std::string("--seed 17 rollout --scenario ") + scenario + " --in " + fix +
                             "/sharded.jsonl --backend mock:" + fix + "/policy.jsonl --n 8 --out ";
    const int a = cli(dir, base + "a.jsonl"), b = cli(dir, base + "b.jsonl");
    if (a != 0 || b != 0 || read_file((dir / "a.jsonl").string()) != read_file((dir / "b.jsonl").string()))
      differing.push_back(std::string("rollout ") + scenario);
    fs::remove(dir / "a.jsonl");
    fs::remove(dir / "b.jsonl");
  }
  write_file_atomic((dir / "c.json").string(), R"({"seed": 17, "toy": {"steps": 20, "eval_every": 10}})");
  const int a = cli(dir, "--config c.json train-toy --quiet --out a.csv --policy-out a.json");
  const int b = cli(dir, "--config c.json train-toy --quiet --out b.csv --policy-out b.json");
  if (a != 0 || b != 0 || read_file((dir / "a.csv").string()) != read_file((dir / "b.csv").string()) ||
      read_file((dir / "a.json").string()) != read_file((dir / "b.json").string()))
    differing.push_back("train-toy");
  fs::remove_all(dir);
  return {differing.empty(), differing.empty() ? "rollout (3 scenarios) and train-toy artifacts identical"
                                               : "differing: " + join(differing, ", ")};
}

// --- 8 ---------------------------------------------------------------------------

std::string digits_masked(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool d = std::isdigit(static_cast<unsigned char>(s[i]));
    if (!d) out += s[i];
    else if (i == 0 || !std::isdigit(static_cast<unsigned char>(s[i - 1]))) out += '#';
  }
  return out;
}

ShardedInstruction random_instruction(Rng& rng, int index) {
  static const std::vector<std::string> words = {"apples", "cost", "each", "and", "then", "total", "of", "boxes"};
  ShardedInstruction s;
  s.problem_id = "gen" + std::to_string(index);
  s.initial_query = "how many " + words[rng.below(words.size())];
  s.gold_answer = std::to_string(rng.below(1000));
  const auto n = 1 + rng.below(kMaxShards);
  for (std::uint64_t k = 0; k < n; ++k) {
    Shard sh;
    sh.id = static_cast<int>(k);
    sh.is_required = k == 0 || rng.below(4) != 0;
    const auto parts = 1 + rng.below(5);
    for (std::uint64_t p = 0; p < parts; ++p) {
      if (p) sh.text += " ";
      sh.text += rng.below(3) == 0 ? std::to_string(rng.below(100000)) : words[rng.below(words.size())];
    }
    if (k == 0) sh.text += " " + std::to_string(1 + rng.below(500));  // at least one number to corrupt
    s.shards.push_back(sh);
  }
  s.source_text = merge(s);
  return s;
}

Verdict scenario_integrity() {
  Rng rng(8);
  int violations = 0;
  for (int i = 0; i < 500; ++i) {
    const auto instr = random_instruction(rng, i);
    const std::size_t n = instr.shards.size();

    const bool drop = rng.below(2) == 1;
    const auto add = build_mt_add(instr, drop);
    std::multiset<int> got;
    for (const auto& d : add.delivers) got.insert(d.begin(), d.end());
    for (const auto& sh : instr.shards) {
      const auto c = got.count(sh.id);
      if (sh.is_required || !drop) violations += c != 1;
      else violations += c != 0;
    }
    if (!drop) violations += join(add.user_turns, "\n") != merge(instr);

    const auto corr = corrupt(instr, {CorruptMode::deterministic, static_cast<std::uint64_t>(i)});
    for (const auto& p : corr.plans) {
      violations += digits_masked(p.corrupted_text) != digits_masked(p.original_text);
      const bool numeric = p.original_text.find_first_of("0123456789") != std::string::npos;
      violations += numeric != p.changed();
      for (const auto& sp : p.changed_spans) violations += std::stoull(sp.replacement) == std::stoull(sp.original);
    }
    const auto refine = build_mt_refine(instr, corr);
    std::set<int> covered;
    for (const auto& d : refine.delivers) covered.insert(d.begin(), d.end());
    violations += covered.size() != n;
    auto lines = split_lines(refine.user_turns.front());
    for (std::size_t t = 1; t < refine.user_turns.size(); ++t)
      lines.at(1 + static_cast<std::size_t>(refine.delivers[t].at(0))) = refine.user_turns[t];
    violations += join(lines, "\n") != merge(instr);
  }
  return {violations == 0, "500 MT-Add and 500 MT-Refine plans, " + std::to_string(violations) + " violations"};
}

// --- 9 ---------------------------------------------------------------------------

Verdict verifier_goldens() {
  const auto base = read_file(RLSTA_FIXTURES "/case_base.txt");
  const auto fixed = read_file(RLSTA_FIXTURES "/case_rlsta.txt");
  const int a = verify(base, "3000", ExtractMode::boxed_then_last_number);
  const int b = verify(fixed, "3000", ExtractMode::boxed_then_last_number);
  const int c = verify(base, "600", ExtractMode::last_four_numbers);
  return {a == 0 && b == 1 && c == 1, "base/3000 -> " + std::to_string(a) + ", rlsta/3000 -> " + std::to_string(b) +
                                          ", last-four base/600 -> " + std::to_string(c)};
}

// --- 10 --------------------------------------------------------------------------

Verdict pass_at_k_enumeration() {
  int checked = 0, mismatches = 0;
  for (int n = 1; n <= 8; ++n)
    for (int c = 0; c <= n; ++c)
      for (int k = 1; k <= n; ++k) {
        // samples 0..c-1 are the correct ones
        long hits = 0, total = 0;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
          if (__builtin_popcount(mask) != k) continue;
          ++total;
          hits += (mask & ((1u << c) - 1u)) != 0;
        }
        mismatches += pass_at_k(n, c, k) != static_cast<double>(hits) / static_cast<double>(total);
        ++checked;
      }
  return {mismatches == 0, std::to_string(checked) + " triples, " + std::to_string(mismatches) + " mismatches"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"LiC arithmetic", lic_arithmetic},
      {"GRPO gradient fidelity", gradient_fidelity},
      {"anchor reward oracle", anchor_oracle},
      {"advantage laws", advantage_laws},
      {"filtering oracle", filtering_oracle},
      {"end-to-end toy RLSTA", toy_rlsta},
      {"determinism", determinism},
      {"scenario integrity", scenario_integrity},
      {"verifier goldens", verifier_goldens},
      {"pass@k enumeration", pass_at_k_enumeration},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
