#include <doctest.h>

#include "rlsta/errors.hpp"
#include "rlsta/mock_backend.hpp"
#include "rlsta/reward.hpp"

using namespace rlsta;

namespace {

RolloutGroup hand_group(const std::vector<std::string>& texts) {
  RolloutGroup g;
  g.problem_id = "apples";
  g.history = {{Role::system, "sys", std::nullopt}, {Role::user, "apples?", std::nullopt}};
  g.full_instruction = "how many apples\nMarta starts with 12 apples";
  g.gold_answer = "14";
  for (std::size_t i = 0; i < texts.size(); ++i) {
    GroupSample s;
    s.sample_index = static_cast<int>(i);
    s.text = texts[i];
    s.token_logprobs = {{texts[i], -0.5}};
    g.samples.push_back(s);
  }
  return g;
}

}  // namespace

TEST_CASE("anchor reward") {
  UniformBackend u(4);
  for (const char* c : {"a", "a b", "a b c d e f g h i j"})
    CHECK(anchor_reward(u.score({}, c)) == 0.25);
  CHECK(std::abs(anchor_reward({std::log(0.5), std::log(0.5), std::log(0.125)}) - 0.3149802624737183) <= 1e-12);
  CHECK_THROWS_AS(anchor_reward(std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS(anchor_reward(u.score({}, "")), ValidationError);
  // thousands of tokens do not underflow
  CHECK(anchor_reward(std::vector<double>(5000, std::log(0.9))) == doctest::Approx(0.9));
}

TEST_CASE("anchor reward depends only on the total over a fixed token count") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    const double total = -5.0 * rng.uniform() * static_cast<double>(n);
    std::vector<double> w(n);
    double ws = 0.0;
    for (auto& x : w) ws += (x = rng.uniform() + 1e-3);
    std::vector<double> split(n);
    for (std::size_t i = 0; i < n; ++i) split[i] = total * w[i] / ws;
    CHECK(anchor_reward(split) == doctest::Approx(anchor_reward(std::vector<double>(n, total / n))).epsilon(1e-12));
  }
}

TEST_CASE("combined reward") {
  CHECK(default_alpha(8) == 0.125);
  CHECK(combine(1, 0.4, 8) == doctest::Approx(1.05).epsilon(1e-15));
  CHECK(combine(0, 1.0, 8) == 0.125);
  CHECK(combine(1, 1e-300, 8) == 1.0);
  CHECK_THROWS_AS(combine(1, 0.4, 1), ValidationError);
}

TEST_CASE("group advantages") {
  CHECK(group_advantages({1, 0}) == std::vector<double>{1, -1});
  CHECK(group_advantages({0.3, 0.3, 0.3}) == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(group_advantages({1.0}), ValidationError);
  const auto golden = json::parse(read_file(RLSTA_GOLDEN "/advantages.json"));
  for (const auto& c : golden) {
    const auto got = group_advantages(c.at("rewards").get<std::vector<double>>());
    const auto want = c.at("advantages").get<std::vector<double>>();
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("advantage invariants on random groups") {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t g = 2 + rng.below(15);
    std::vector<double> r(g);
    for (auto& x : r) x = 4.0 * rng.uniform() - 2.0;
    const auto a = group_advantages(r);
    double sum = 0.0;
    for (double x : a) sum += x;
    CHECK(std::abs(sum) <= 1e-9);

    const double c = 10.0 * rng.uniform() - 5.0;
    const double k = 0.01 + 20.0 * rng.uniform();
    auto shifted = r, scaled = r;
    for (auto& x : shifted) x += c;
    for (auto& x : scaled) x *= k;
    const auto as = group_advantages(shifted), ak = group_advantages(scaled);
    for (std::size_t i = 0; i < g; ++i) {
      CHECK(std::abs(as[i] - a[i]) <= 1e-9);
      CHECK(std::abs(ak[i] - a[i]) <= 1e-9);
    }
  }
}

TEST_CASE("a correct response beats the mean whenever some response is wrong") {
  Rng rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    const int g = 2 + static_cast<int>(rng.below(15));
    std::vector<int> rv(static_cast<std::size_t>(g));
    for (auto& x : rv) x = static_cast<int>(rng.below(2));
    rv[rng.below(static_cast<std::uint64_t>(g))] = 0;
    std::vector<double> r;
    for (int v : rv) r.push_back(combine(v, 1.0 - rng.uniform(), g));  // r_s in (0, 1]
    const auto a = group_advantages(r);
    for (int i = 0; i < g; ++i)
      if (rv[static_cast<std::size_t>(i)] == 1) CHECK(a[static_cast<std::size_t>(i)] > 0.0);
  }
}

TEST_CASE("scoring a group") {
  auto group = hand_group({"so \\boxed{14}", "so \\boxed{19}", "14 apples", "no"});
  UniformBackend ref(4);
  score_group(group, ref, {});
  REQUIRE(group.rewards.size() == 4);
  const std::vector<int> rv{1, 0, 1, 0};
  double mean = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& rb = group.rewards[i];
    CHECK(rb.r_v == rv[i]);
    CHECK(rb.alpha == 0.25);
    CHECK(rb.r_s == doctest::Approx(0.25));
    CHECK(rb.r_total == rb.r_v + rb.alpha * rb.r_s);
    CHECK(rb.verifier_mode == "boxed_then_last_number");
    CHECK(rb.reference_context ==
          context_fingerprint({{Role::system, std::string(kDefaultSystemPrompt), std::nullopt},
                               {Role::user, group.full_instruction, std::nullopt}}));
    mean += rb.advantage;
  }
  CHECK(std::abs(mean) <= 1e-12);
  CHECK(group.rewards[0].advantage > 0);

  RewardOptions no_ver;
  no_ver.use_verifier = false;
  score_group(group, ref, no_ver);
  for (const auto& rb : group.rewards) {
    CHECK(rb.r_v == 0);
    CHECK(rb.verifier_mode == "none");
    CHECK(rb.advantage == 0.0);  // equal r_s everywhere: degenerate group
  }

  RewardOptions no_anchor;
  no_anchor.use_anchor = false;
  score_group(group, ref, no_anchor);
  for (const auto& rb : group.rewards) CHECK(rb.alpha == 0.0);
  CHECK(json(group).get<RolloutGroup>() == group);
}

TEST_CASE("the anchor separates answers the verifier cannot") {
  auto group = hand_group({"so \\boxed{19}", "so \\boxed{20}"});
  auto ref = MockBackend::from_jsonl(
      R"({"default": true, "outcomes": [{"completion": "so \\boxed{19}", "weight": 0.7}, {"completion": "so \\boxed{20}", "weight": 0.3}]})",
      "ref");
  RewardOptions opt;
  opt.use_verifier = false;
  score_group(group, ref, opt);
  CHECK(group.rewards[0].r_s > group.rewards[1].r_s);
  CHECK(group.rewards[0].advantage == doctest::Approx(1.0));
  CHECK(group.rewards[1].advantage == doctest::Approx(-1.0));
}
