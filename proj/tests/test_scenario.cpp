#include <doctest.h>

#include <regex>

#include "rlsta/errors.hpp"
#include "rlsta/jsonl.hpp"
#include "rlsta/mock_backend.hpp"
#include "rlsta/scenario.hpp"

using namespace rlsta;

namespace {

std::vector<ShardedInstruction> fixture_instructions() {
  std::vector<ShardedInstruction> out;
  for (const auto& line : split_lines(read_file(RLSTA_FIXTURES "/sharded.jsonl")))
    if (!trim(line).empty()) out.push_back(json::parse(line).get<ShardedInstruction>());
  return out;
}

ShardedInstruction trees3() {
  ShardedInstruction s;
  s.problem_id = "trees";
  s.initial_query = "How many trees did workers plant?";
  s.shards = {{0, "There are 15 trees", true},
              {1, "After, there are 21 trees", true},
              {2, "Reported 2024 totals: 1250 trees and 7 crews", true}};
  s.gold_answer = "6";
  return s;
}

std::string digits_masked(const std::string& s) { return std::regex_replace(s, std::regex("[0-9]+"), "#"); }

}  // namespace

TEST_CASE("deterministic corruption matches the frozen oracle output") {
  auto instrs = fixture_instructions();
  instrs.push_back(trees3());
  std::vector<json> golden;
  for (const auto& line : split_lines(read_file(RLSTA_GOLDEN "/corrupt_seed7.jsonl")))
    if (!trim(line).empty()) golden.push_back(json::parse(line));
  REQUIRE(golden.size() == instrs.size());
  for (std::size_t i = 0; i < instrs.size(); ++i) {
    CAPTURE(instrs[i].problem_id);
    const auto c = corrupt(instrs[i], {CorruptMode::deterministic, 7});
    CHECK(json(c) == golden[i]);
  }
}

TEST_CASE("the trees shard under its recorded seed") {
  const auto g = json::parse(read_file(RLSTA_GOLDEN "/corrupt_trees.json"));
  ShardedInstruction s;
  s.problem_id = g.at("problem_id");
  s.initial_query = g.at("initial_query");
  s.shards = {{0, g.at("shard"), true}};
  const auto c = corrupt(s, {CorruptMode::deterministic, g.at("seed").get<std::uint64_t>()});
  CHECK(c.plans[0].corrupted_text == g.at("corrupted").get<std::string>());
  CHECK(c.plans[0].corrupted_text == "There are 17 trees");
}

TEST_CASE("shards without digits pass through flagged") {
  auto instrs = fixture_instructions();
  const auto c = corrupt(instrs[1], {CorruptMode::deterministic, 3});
  CHECK(c.plans[3].no_numeric);
  CHECK_FALSE(c.plans[3].changed());
  CHECK(c.plans[3].changed_spans.empty());
  CHECK_FALSE(c.plans[0].no_numeric);
}

TEST_CASE("same seed, same plan; other seeds differ somewhere") {
  const auto a = corrupt(trees3(), {CorruptMode::deterministic, 99});
  CHECK(corrupt(trees3(), {CorruptMode::deterministic, 99}) == a);
  bool differs = false;
  for (std::uint64_t s = 100; s < 110; ++s) differs |= !(corrupt(trees3(), {CorruptMode::deterministic, s}) == a);
  CHECK(differs);
}

TEST_CASE("corruption only touches digit runs, always changes them, never goes negative") {
  Rng pick(2024);
  const std::vector<std::string> words = {"trees", "and", " ", ", ", "x", "total:", "-"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    const auto parts = 1 + pick.below(8);
    for (std::uint64_t k = 0; k < parts; ++k) {
      if (pick.below(2)) {
        text += std::to_string(pick.below(100000));
      } else {
        text += words[pick.below(words.size())];
      }
      text += " ";
    }
    Rng rng(static_cast<std::uint64_t>(trial));
    std::vector<ChangedSpan> spans;
    const auto out = corrupt_digits(text, rng, &spans);
    CAPTURE(text);
    CHECK(digits_masked(out) == digits_masked(text));
    for (const auto& sp : spans) {
      CHECK(text.compare(sp.offset, sp.original.size(), sp.original) == 0);
      CHECK(std::stoull(sp.replacement) != std::stoull(sp.original));
      CHECK(sp.replacement.find_first_not_of("0123456789") == std::string::npos);
    }
  }
}

TEST_CASE("llm corruption parses modified shards and rejects non-digit edits") {
  auto instrs = fixture_instructions();
  auto good = MockBackend::from_jsonl(
      R"({"default": true, "outcomes": [{"completion": "{\"modified_shards\": [{\"shard_id\": 0, \"shard\": \"Marta starts with 20 apples\"}, {\"shard_id\": 1, \"shard\": \"then she buys 3 more apples\"}, {\"shard_id\": 2, \"shard\": \"she gives 1 apples to her friend\"}]}"}]})",
      "j");
  CorruptOptions opt{CorruptMode::llm, 0};
  opt.judge = &good;
  const auto c = corrupt(instrs[0], opt);
  CHECK(c.corrupted_i0 ==
        "how many apples Marta has now\nMarta starts with 20 apples\nthen she buys 3 more apples\nshe gives 1 apples to her friend");
  REQUIRE(c.plans[0].changed_spans.size() == 1);
  CHECK(c.plans[0].changed_spans[0].original == "12");
  CHECK(c.plans[0].changed_spans[0].replacement == "20");

  auto sloppy = MockBackend::from_jsonl(
      R"({"default": true, "outcomes": [{"completion": "{\"modified_shards\": [{\"shard_id\": 0, \"shard\": \"Marta now has 20 apples\"}, {\"shard_id\": 1, \"shard\": \"then she buys 3 more apples\"}, {\"shard_id\": 2, \"shard\": \"she gives 1 apples to her friend\"}]}"}]})",
      "j");
  opt.judge = &sloppy;
  CHECK_THROWS_AS(corrupt(instrs[0], opt), SchemaError);
  opt.judge = nullptr;
  CHECK_THROWS_AS(corrupt(instrs[0], opt), ValidationError);
}

TEST_CASE("max_shards limits corruption to a seeded subset") {
  CorruptOptions opt{CorruptMode::deterministic, 5};
  opt.max_shards = 1;
  const auto c = corrupt(trees3(), opt);
  int changed = 0;
  for (const auto& p : c.plans) changed += p.changed();
  CHECK(changed == 1);
  CHECK(build_mt_refine(trees3(), c).user_turns.size() == 2);
}

TEST_CASE("mt_add plan") {
  const auto s = trees3();
  const auto plan = build_mt_add(s);
  CHECK(plan.user_turns.size() == 4);
  CHECK(join(plan.user_turns, "\n") == merge(s));
  std::vector<int> seen;
  for (const auto& d : plan.delivers) seen.insert(seen.end(), d.begin(), d.end());
  CHECK(seen == std::vector<int>{0, 1, 2});

  auto bus = fixture_instructions()[1];
  CHECK(build_mt_add(bus).user_turns.size() == 5);
  const auto dropped = build_mt_add(bus, true);
  CHECK(dropped.user_turns.size() == 4);
  CHECK(std::find(dropped.user_turns.begin(), dropped.user_turns.end(), "the driver wears a red cap") ==
        dropped.user_turns.end());
}

TEST_CASE("single-turn plan") {
  const auto plan = build_single_turn(trees3());
  REQUIRE(plan.user_turns.size() == 1);
  CHECK(plan.user_turns[0] == merge(trees3()));
}

TEST_CASE("mt_refine plan: corrections restore the original digits") {
  auto s = trees3();
  s.shards.pop_back();
  const auto c = corrupt(s, {CorruptMode::deterministic, 1});
  const auto plan = build_mt_refine(s, c);
  REQUIRE(plan.user_turns.size() == 3);
  CHECK(plan.user_turns[0] == c.corrupted_i0);
  CHECK(plan.user_turns[1] == s.shards[0].text);
  CHECK(plan.user_turns[2] == s.shards[1].text);

  // apply each correction by replacing the corrupted line
  auto lines = split_lines(c.corrupted_i0);
  for (std::size_t t = 1; t < plan.user_turns.size(); ++t)
    lines.at(1 + static_cast<std::size_t>(plan.delivers[t][0])) = plan.user_turns[t];
  CHECK(join(lines, "\n") == merge(s));

  Corruption none = c;
  for (auto& p : none.plans) {
    p.corrupted_text = p.original_text;
    p.changed_spans.clear();
  }
  CHECK_THROWS_AS(build_mt_refine(s, none), ValidationError);
}

TEST_CASE("segmenting the worked trees example") {
  auto judge = MockBackend::from_fixture(RLSTA_FIXTURES "/judge_trees.jsonl");
  const auto s = segment("trees",
                         "There are 15 trees in the grove. Grove workers will plant trees in the grove today. After "
                         "they are done, there will be 21 trees. How many trees did the grove workers plant today?",
                         "6", judge);
  CHECK(s.initial_query == "I need to calculate the number of trees planted by the grove workers today");
  CHECK(s.shards.size() == 3);
  CHECK(s.gold_answer == "6");
}

TEST_CASE("segmenting fixture problems") {
  auto judge = MockBackend::from_fixture(RLSTA_FIXTURES "/judge.jsonl");
  auto expected = fixture_instructions();
  std::vector<json> problems;
  for (const auto& line : split_lines(read_file(RLSTA_FIXTURES "/problems.jsonl")))
    if (!trim(line).empty()) problems.push_back(json::parse(line));
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const auto s = segment(problems[i]["problem_id"], problems[i]["question"], problems[i]["answer"], judge);
    CHECK(s == expected[i]);
  }
  // one sentence: one required shard
  const auto& product = expected[2];
  REQUIRE(product.shards.size() == 1);
  CHECK(product.shards[0].is_required);
  CHECK(product.initial_query == "what is 6 times 7");
}

TEST_CASE("segment errors") {
  auto junk = MockBackend::from_jsonl(R"({"default": true, "outcomes": [{"completion": "I cannot do that"}]})", "j");
  CHECK_THROWS_AS(segment("p", "Some text.", "1", junk, 1), SchemaError);
  CHECK_THROWS_AS(segment("p", "   ", "1", junk, 1), ValidationError);

  json many = json::array();
  for (int i = 0; i < 11; ++i) many.push_back({{"segment", "part " + std::to_string(i)}, {"is_required", 1}});
  json entry = {{"default", true}, {"outcomes", {{{"completion", json{{"segments", many}}.dump()}}}}};
  auto chatty = MockBackend::from_jsonl(entry.dump(), "j");
  CHECK_THROWS_AS(segment("p", "Some text.", "1", chatty, 0), SchemaError);
}

TEST_CASE("plan and corruption round trips") {
  const auto c = corrupt(trees3(), {CorruptMode::deterministic, 4});
  CHECK(json(c).get<Corruption>() == c);
  const auto plan = build_mt_refine(trees3(), c);
  CHECK(json(plan).get<TurnPlan>() == plan);
}
