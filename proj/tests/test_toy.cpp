#include <doctest.h>

#include "rlsta/capability_filter.hpp"
#include "rlsta/errors.hpp"
#include "rlsta/rollout.hpp"
#include "rlsta/toy_lab.hpp"

using namespace rlsta;

namespace {

const json& golden() {
  static const json g = json::parse(read_file(RLSTA_GOLDEN "/toy_thresholds.json"));
  return g;
}

SumTask golden_task() {
  const auto& t = golden().at("task");
  return {t.at("k"), t.at("lo"), t.at("hi")};
}

// Pretrained once, shared by the slower cases.
const ToyPolicy& pretrained() {
  static const ToyPolicy p = [] {
    ToyPolicy policy(golden().at("window"));
    PretrainConfig cfg;
    cfg.steps = golden().at("pretrain").at("steps");
    cfg.seed = golden().at("pretrain").at("seed");
    pretrain_single_turn(policy, golden_task(), cfg);
    return policy;
  }();
  return p;
}

}  // namespace

TEST_CASE("toy vocabulary round trips") {
  const auto ids = toy::tokenize("SUM 3 4 =");
  CHECK(ids == std::vector<int>{toy::kSum, 3, 4, toy::kEquals});
  CHECK(toy::tokenize(toy::render(ids)) == ids);
  CHECK_THROWS_AS(toy::tokenize("SUM x"), ValidationError);
  CHECK(toy::surface(toy::kEnd).empty());
  CHECK(toy::surface(7) == "7");
}

TEST_CASE("sum task renderings") {
  const SumTask task{3, 0, 9};
  const std::vector<int> ops{9, 8, 7};
  CHECK(SumTask::answer(ops) == "24");
  CHECK(SumTask::single_turn_text(ops) == "SUM 9 8 7 =");
  const auto mt = SumTask::multi_turn_texts(ops);
  REQUIRE(mt.size() == 4);
  CHECK(mt[0] == "SUM?");
  CHECK(task.all_instances().size() == 1000);
  for (const auto& t : mt) CHECK_NOTHROW(toy::tokenize(t));
  const auto plan = task.plan(ops);
  CHECK(plan.full_instruction == SumTask::single_turn_text(ops));
  CHECK(plan.user_turns == mt);
  CHECK_THROWS_AS((SumTask{0, 0, 9}).validate(), ValidationError);
  CHECK_THROWS_AS((SumTask{2, 3, 12}).validate(), ValidationError);
}

TEST_CASE("every row is a distribution; unseen windows share the default row") {
  ToyPolicy p(3);
  Rng rng(1);
  for (auto& x : p.mutable_params()) x = 10.0 * rng.uniform() - 5.0;
  for (int i = 0; i < 20; ++i) p.touch({static_cast<int>(rng.below(toy::kVocab)), static_cast<int>(rng.below(toy::kVocab))});
  for (auto& x : p.mutable_params()) x = 30.0 * rng.uniform() - 15.0;
  std::vector<double> lp;
  for (std::size_t r = 0; r < p.num_rows(); ++r) {
    p.log_probs_row(p.params(), r, lp);
    double s = 0.0;
    for (double v : lp) s += std::exp(v);
    CHECK(std::abs(s - 1.0) <= 1e-10);
  }
  const auto unseen = p.key_of({toy::kQuery, toy::kQuery, toy::kQuery});
  CHECK(p.row_of(unseen) == 0);
  std::vector<double> a, b;
  p.log_probs_key(unseen, a);
  p.log_probs_row(p.params(), 0, b);
  CHECK(a == b);
}

TEST_CASE("policy serialization") {
  ToyPolicy p(2);
  p.touch({1, 2});
  p.mutable_params()[20] = 0.5;
  CHECK(ToyPolicy::from_json(json::parse(p.to_json().dump())) == p);
}

TEST_CASE("pretraining reaches the recorded single-turn competence and multi-turn inertia") {
  const auto& g = golden().at("pretrain");
  const auto& p = pretrained();
  const double single = exact_single_turn_accuracy(p, golden_task(), 2);
  const double multi = exact_multi_turn_accuracy(p, golden_task(), 2);
  CHECK(single >= g.at("min_single").get<double>());
  CHECK(multi <= g.at("max_multi_ratio").get<double>() * single);
  CHECK(single == doctest::Approx(g.at("recorded_single").get<double>()).epsilon(1e-9));
  CHECK(multi == doctest::Approx(g.at("recorded_multi").get<double>()).epsilon(1e-9));
}

TEST_CASE("pretraining is seeded and lr 0 is a no-op") {
  const SumTask task{2, 0, 2};
  PretrainConfig cfg;
  cfg.steps = 300;
  cfg.enforce_gap = false;
  ToyPolicy a(4), b(4);
  pretrain_single_turn(a, task, cfg);
  pretrain_single_turn(b, task, cfg);
  CHECK(a == b);

  ToyPolicy fresh(4);
  const double before = exact_single_turn_accuracy(fresh, task, 2);
  cfg.lr = 0.0;
  const auto r = pretrain_single_turn(fresh, task, cfg);
  CHECK(r.single_acc == doctest::Approx(before).epsilon(1e-12));

  ToyPolicy weak(4);
  cfg.lr = 0.5;
  cfg.steps = 1;
  cfg.enforce_gap = true;
  CHECK_THROWS_AS(pretrain_single_turn(weak, task, cfg), ValidationError);
}

TEST_CASE("exact conversation accuracy agrees with Monte Carlo rollouts") {
  const auto& p = pretrained();
  ToyBackend backend(p, 2);
  RolloutOptions opt;
  opt.params = {1.0, 2, std::nullopt};
  const auto task = golden_task();
  for (const std::vector<int>& ops : {std::vector<int>{1, 3}, std::vector<int>{4, 4}}) {
    const double exact = exact_conversation_accuracy(p, ops, 2);
    const int n = 4000;
    int correct = 0;
    for (int i = 0; i < n; ++i) {
      const auto r = run_multi_turn(task.plan(ops), backend, opt, derive_seed(2, "mc", static_cast<std::uint64_t>(i)));
      correct += verify(r.final_answer_text, SumTask::answer(ops), ExtractMode::exact);
    }
    const double se = std::sqrt(std::max(exact * (1 - exact), 1e-4) / n);
    CAPTURE(exact);
    CHECK(std::abs(correct / double(n) - exact) <= 3 * se);

    const std::vector<Turn> single{{Role::system, "", std::nullopt},
                                   {Role::user, SumTask::single_turn_text(ops), std::nullopt}};
    CHECK(exact_accuracy(single, backend, SumTask::answer(ops), ExtractMode::exact) ==
          doctest::Approx(exact_reply_accuracy(p, single, SumTask::answer(ops), 2)).epsilon(1e-12));
    double total = 0.0;
    for (const auto& o : backend.enumerate_outcomes(single)) total += o.probability;
    CHECK(std::abs(total - 1.0) <= 1e-10);
  }
}

TEST_CASE("toy backend scoring matches its sampler") {
  const auto& p = pretrained();
  ToyBackend backend(p, 2);
  const std::vector<Turn> ctx{{Role::system, "", std::nullopt}, {Role::user, "SUM 2 2 =", std::nullopt}};
  const auto t = backend.chat(ctx, {1.0, 2, 5});
  double sampled = 0.0;
  for (const auto& tl : *t.token_logprobs) sampled += tl.logprob;
  CHECK(backend.score(ctx, t.text).total_logprob() == doctest::Approx(sampled).epsilon(1e-12));
}

TEST_CASE("metrics lines") {
  MetricsRow row{40, 0.9, 0.45, -0.01, 1e-3, 12, 0.6, 0.05};
  const auto back = parse_metrics(format_metrics(row));
  CHECK(back.step == 40);
  CHECK(back.retained == 12);
  CHECK(back.multi_acc == doctest::Approx(0.45));
  CHECK_THROWS_AS(parse_metrics("1,2,3"), ValidationError);
  CHECK(metrics_header().find("multi") != std::string::npos);
}

TEST_CASE("an untrained policy has no gap for the filter to find") {
  ToyPolicy fresh(golden().at("window").get<int>());
  RlstaConfig cfg;
  cfg.steps = 3;
  CHECK_THROWS_AS(run_rlsta_toy(fresh, fresh, cfg), ValidationError);
}

TEST_CASE("a short RLSTA run is seeded and emits rows on schedule") {
  const auto& ref = pretrained();
  RlstaConfig cfg;
  cfg.task = golden_task();
  cfg.steps = 20;
  cfg.eval_every = 10;
  ToyPolicy a = ref, b = ref;
  const auto rows = run_rlsta_toy(a, ref, cfg);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].step == 0);
  CHECK(rows[2].step == 20);
  CHECK(rows[1].retained > 0);
  run_rlsta_toy(b, ref, cfg);
  CHECK(a == b);
}

TEST_CASE("a dominant KL term keeps parameters near the reference") {
  const auto& g = golden().at("kl_anchor");
  const auto& ref = pretrained();
  auto distance_after = [&](double beta) {
    ToyPolicy policy = ref;
    RlstaConfig cfg;
    cfg.task = golden_task();
    cfg.steps = g.at("steps");
    cfg.eval_every = cfg.steps;
    cfg.learning_rate = g.at("learning_rate");
    cfg.objective.kl_coef = beta;
    run_rlsta_toy(policy, ref, cfg);
    return param_distance(policy, policy.params(), ref.params());
  };
  const double anchored = distance_after(g.at("kl_coef"));
  const double free = distance_after(0.0);
  CAPTURE(anchored);
  CAPTURE(free);
  CHECK(anchored < free);
  CHECK(anchored <= g.at("max_distance").get<double>());
}
