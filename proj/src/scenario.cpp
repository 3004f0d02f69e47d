#include "rlsta/scenario.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "rlsta/prompts.hpp"

namespace rlsta {

namespace {

bool digit(char c) { return c >= '0' && c <= '9'; }

struct Run {
  bool digits;
  std::size_t offset;
  std::string text;
};

std::vector<Run> runs(std::string_view s) {
  std::vector<Run> out;
  std::size_t i = 0;
  while (i < s.size()) {
    bool d = digit(s[i]);
    std::size_t j = i;
    while (j < s.size() && digit(s[j]) == d) ++j;
    out.push_back({d, i, std::string(s.substr(i, j - i))});
    i = j;
  }
  return out;
}

bool has_digit(std::string_view s) { return std::any_of(s.begin(), s.end(), digit); }

std::string strip_leading_zeros(const std::string& s) {
  auto nz = s.find_first_not_of('0');
  return nz == std::string::npos ? "0" : s.substr(nz);
}

// Spans where `modified` differs from `original`, or nullopt when anything other
// than digit runs changed.
std::optional<std::vector<ChangedSpan>> digit_diff(std::string_view original,
                                                   std::string_view modified) {
  auto a = runs(original);
  auto b = runs(modified);
  if (a.size() != b.size()) return std::nullopt;
  std::vector<ChangedSpan> spans;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].digits != b[i].digits) return std::nullopt;
    if (!a[i].digits) {
      if (a[i].text != b[i].text) return std::nullopt;
      continue;
    }
    if (strip_leading_zeros(a[i].text) != strip_leading_zeros(b[i].text))
      spans.push_back({a[i].offset, a[i].text, b[i].text});
    else if (a[i].text != b[i].text)
      return std::nullopt;  // same value, different spelling
  }
  return spans;
}

std::string corrupt_run(const std::string& run, Rng& rng) {
  const int mag = static_cast<int>(rng.below(3)) + 1;
  const bool up = rng.below(2) == 1;
  if (run.size() > 15) {
    // Too long for exact integer arithmetic; nudge the last digit.
    std::string out = run;
    int d = out.back() - '0';
    int nd = up ? d + mag : d - mag;
    if (nd > 9 || nd < 0) nd = up ? d - mag : d + mag;
    out.back() = static_cast<char>('0' + nd);
    return out;
  }
  const std::uint64_t v = std::stoull(run);
  std::uint64_t scale = 1;
  for (std::size_t i = 2; i < run.size(); ++i) scale *= 10;
  const std::uint64_t delta = static_cast<std::uint64_t>(mag) * scale;
  std::uint64_t nv = 0;
  if (up || v < delta) {
    nv = v + delta;
  } else {
    nv = v - delta;
  }
  std::string out = std::to_string(nv);
  if (run.size() > 1 && run[0] == '0' && out.size() < run.size())
    out.insert(0, run.size() - out.size(), '0');
  return out;
}

std::string corrupted_i0(const ShardedInstruction& instr, const std::vector<CorruptionPlan>& plans) {
  std::string s = instr.initial_query;
  for (const auto& p : plans) s += "\n" + p.corrupted_text;
  return s;
}

// Which shards to corrupt: all numeric ones, or a seeded subset of max_shards.
std::set<int> select_shards(const ShardedInstruction& instr, const CorruptOptions& options) {
  std::vector<int> numeric;
  for (const auto& s : instr.shards)
    if (has_digit(s.text)) numeric.push_back(s.id);
  if (options.max_shards && *options.max_shards < static_cast<int>(numeric.size())) {
    if (*options.max_shards < 1) throw ValidationError("corrupt: max_shards must be >= 1");
    Rng rng(derive_seed(options.seed, instr.problem_id + "#select", 0));
    // partial Fisher-Yates
    for (int i = 0; i < *options.max_shards; ++i) {
      auto j = i + static_cast<int>(rng.below(numeric.size() - i));
      std::swap(numeric[i], numeric[j]);
    }
    numeric.resize(*options.max_shards);
  }
  return {numeric.begin(), numeric.end()};
}

}  // namespace

std::string corrupt_digits(std::string_view text, Rng& rng, std::vector<ChangedSpan>* spans) {
  std::string out;
  for (const auto& r : runs(text)) {
    if (!r.digits) {
      out += r.text;
      continue;
    }
    auto rep = corrupt_run(r.text, rng);
    if (spans) spans->push_back({r.offset, r.text, rep});
    out += rep;
  }
  return out;
}

Corruption corrupt(const ShardedInstruction& instr, const CorruptOptions& options) {
  validate(instr);
  const auto selected = select_shards(instr, options);
  Corruption result;
  result.problem_id = instr.problem_id;
  for (const auto& s : instr.shards) {
    CorruptionPlan p;
    p.shard_id = s.id;
    p.original_text = s.text;
    p.corrupted_text = s.text;
    p.no_numeric = !has_digit(s.text);
    result.plans.push_back(std::move(p));
  }

  if (options.mode == CorruptMode::deterministic) {
    for (auto& p : result.plans) {
      if (!selected.count(p.shard_id)) continue;
      Rng rng(derive_seed(options.seed, instr.problem_id, static_cast<std::uint64_t>(p.shard_id)));
      p.corrupted_text = corrupt_digits(p.original_text, rng, &p.changed_spans);
    }
  } else {
    if (options.judge == nullptr) throw ValidationError("llm corruption needs a judge backend");
    if (!selected.empty()) {
      json listing = json::array();
      for (const auto& p : result.plans)
        if (selected.count(p.shard_id))
          listing.push_back({{"shard_id", p.shard_id}, {"shard", p.original_text}});
      auto user = format_template(prompts::corruption_template(), {{"shards_text", listing.dump(2)}});
      std::map<int, std::pair<std::string, std::vector<ChangedSpan>>> parsed;
      query_json(*options.judge, kDefaultSystemPrompt, user, options.retries, [&](const json& j) {
        parsed.clear();
        const auto& mods = j.at("modified_shards");
        for (const auto& m : mods) {
          int id = m.at("shard_id").get<int>();
          auto text = m.at("shard").get<std::string>();
          if (!selected.count(id)) throw std::runtime_error("unexpected shard_id " + std::to_string(id));
          const auto& orig = result.plans.at(static_cast<std::size_t>(id)).original_text;
          auto spans = digit_diff(orig, text);
          if (!spans) throw std::runtime_error("shard " + std::to_string(id) + ": non-digit text changed");
          if (spans->empty()) throw std::runtime_error("shard " + std::to_string(id) + ": no value changed");
          parsed[id] = {text, std::move(*spans)};
        }
        if (parsed.size() != selected.size()) throw std::runtime_error("not every shard was modified");
      });
      for (auto& [id, v] : parsed) {
        auto& p = result.plans.at(static_cast<std::size_t>(id));
        p.corrupted_text = v.first;
        p.changed_spans = v.second;
      }
    }
  }
  result.corrupted_i0 = corrupted_i0(instr, result.plans);
  return result;
}

TurnPlan build_single_turn(const ShardedInstruction& instr) {
  validate(instr);
  TurnPlan plan;
  plan.problem_id = instr.problem_id;
  plan.kind = ScenarioKind::single_turn;
  plan.full_instruction = merge(instr);
  plan.gold_answer = instr.gold_answer;
  plan.user_turns = {plan.full_instruction};
  std::vector<int> all;
  for (const auto& s : instr.shards) all.push_back(s.id);
  plan.delivers = {all};
  return plan;
}

TurnPlan build_mt_add(const ShardedInstruction& instr, bool drop_optional) {
  validate(instr);
  TurnPlan plan;
  plan.problem_id = instr.problem_id;
  plan.kind = ScenarioKind::mt_add;
  plan.full_instruction = merge(instr);
  plan.gold_answer = instr.gold_answer;
  plan.user_turns.push_back(instr.initial_query);
  plan.delivers.emplace_back();
  for (const auto& s : instr.shards) {
    if (drop_optional && !s.is_required) continue;
    plan.user_turns.push_back(s.text);
    plan.delivers.push_back({s.id});
  }
  return plan;
}

TurnPlan build_mt_refine(const ShardedInstruction& instr, const Corruption& corruption) {
  validate(instr);
  if (corruption.plans.size() != instr.shards.size())
    throw ValidationError("mt_refine: corruption does not match the instruction's shards");
  TurnPlan plan;
  plan.problem_id = instr.problem_id;
  plan.kind = ScenarioKind::mt_refine;
  plan.full_instruction = merge(instr);
  plan.gold_answer = instr.gold_answer;
  plan.user_turns.push_back(corruption.corrupted_i0);
  plan.delivers.emplace_back();
  for (const auto& p : corruption.plans) {
    if (p.original_text != instr.shards.at(static_cast<std::size_t>(p.shard_id)).text)
      throw ValidationError("mt_refine: corruption plan text does not match shard " +
                            std::to_string(p.shard_id));
    if (!p.changed()) {
      plan.delivers.front().push_back(p.shard_id);
      continue;
    }
    plan.user_turns.push_back(p.original_text);
    plan.delivers.push_back({p.shard_id});
  }
  if (plan.user_turns.size() < 2)
    throw ValidationError("mt_refine: no shard was corrupted, the scenario would be single-turn");
  return plan;
}

std::string render_segmentation_prompt(const std::string& source_text) {
  return std::string(prompts::segmentation()) + "Q: " + source_text;
}

std::string render_rephrasing_prompt(const std::string& source_text, const json& segments) {
  return std::string(prompts::rephrasing()) + "Q: " + source_text + "\n\nSegments:\n" +
         segments.dump(4);
}

ShardedInstruction segment(const std::string& problem_id, const std::string& source_text,
                           const std::string& gold_answer, Backend& judge, int retries) {
  if (trim(source_text).empty()) throw ValidationError("segment: empty source text");
  json segments;
  query_json(judge, kDefaultSystemPrompt, render_segmentation_prompt(source_text), retries,
             [&](const json& j) {
               const json& list = j.is_object() ? j.at("segments") : j;
               if (!list.is_array() || list.empty()) throw std::runtime_error("no segments");
               if (list.size() > kMaxShards + 1)
                 throw std::runtime_error("more than 10 segments");
               segments = json::array();
               for (const auto& s : list) {
                 auto text = trim(s.at("segment").get<std::string>());
                 if (text.empty()) throw std::runtime_error("empty segment");
                 int req = s.contains("is_required") ? s.at("is_required").get<int>() : 1;
                 segments.push_back({{"segment", text}, {"is_required", req ? 1 : 0}});
               }
             });
  if (segments.size() > kMaxShards) {
    throw SchemaError("segment: judge produced " + std::to_string(segments.size()) +
                          " segments, at most 10 are allowed",
                      segments.dump());
  }

  ShardedInstruction out;
  out.problem_id = problem_id;
  out.source_text = source_text;
  out.gold_answer = gold_answer;
  query_json(judge, kDefaultSystemPrompt, render_rephrasing_prompt(source_text, segments), retries,
             [&](const json& j) {
               out.shards.clear();
               out.initial_query = trim(j.at("initial_query").get<std::string>());
               if (out.initial_query.empty()) throw std::runtime_error("empty initial_query");
               const auto initial_segment = trim(j.at("initial_segment").get<std::string>());
               const json hints = j.value("hints", json::array());
               for (const auto& h : hints) {
                 auto seg = trim(h.value("segment", ""));
                 auto text = trim(h.at("hint").get<std::string>());
                 if (text.empty()) throw std::runtime_error("empty hint");
                 bool required = true;
                 for (const auto& s : segments)
                   if (s.at("segment").get<std::string>() == seg) required = s.at("is_required") == 1;
                 out.shards.push_back({static_cast<int>(out.shards.size()), text, required});
               }
               if (out.shards.empty()) {
                 // A one-segment problem: the original segment is the only shard.
                 if (segments.size() != 1) throw std::runtime_error("no hints returned");
                 auto seg = initial_segment.empty() ? segments[0].at("segment").get<std::string>()
                                                    : initial_segment;
                 out.shards.push_back({0, seg, true});
               }
               if (out.shards.size() + 1 < segments.size())
                 throw std::runtime_error("hints do not cover every segment");
               if (out.shards.size() > kMaxShards) throw std::runtime_error("too many hints");
             });
  validate(out);
  return out;
}

void to_json(json& j, const ChangedSpan& s) {
  j = {{"offset", s.offset}, {"original", s.original}, {"replacement", s.replacement}};
}
void from_json(const json& j, ChangedSpan& s) {
  j.at("offset").get_to(s.offset);
  j.at("original").get_to(s.original);
  j.at("replacement").get_to(s.replacement);
}
void to_json(json& j, const CorruptionPlan& p) {
  j = {{"shard_id", p.shard_id},         {"original_text", p.original_text},
       {"corrupted_text", p.corrupted_text}, {"changed_spans", p.changed_spans},
       {"no_numeric", p.no_numeric}};
}
void from_json(const json& j, CorruptionPlan& p) {
  j.at("shard_id").get_to(p.shard_id);
  j.at("original_text").get_to(p.original_text);
  j.at("corrupted_text").get_to(p.corrupted_text);
  j.at("changed_spans").get_to(p.changed_spans);
  p.no_numeric = j.value("no_numeric", false);
}
void to_json(json& j, const Corruption& c) {
  j = {{"problem_id", c.problem_id}, {"corrupted_i0", c.corrupted_i0}, {"plans", c.plans}};
}
void from_json(const json& j, Corruption& c) {
  j.at("problem_id").get_to(c.problem_id);
  j.at("corrupted_i0").get_to(c.corrupted_i0);
  j.at("plans").get_to(c.plans);
}
void to_json(json& j, const TurnPlan& p) {
  j = {{"problem_id", p.problem_id},        {"scenario_kind", to_string(p.kind)},
       {"user_turns", p.user_turns},        {"delivers", p.delivers},
       {"gold_answer", p.gold_answer},      {"full_instruction", p.full_instruction}};
}
void from_json(const json& j, TurnPlan& p) {
  j.at("problem_id").get_to(p.problem_id);
  p.kind = scenario_kind_from_string(j.at("scenario_kind").get<std::string>());
  j.at("user_turns").get_to(p.user_turns);
  j.at("delivers").get_to(p.delivers);
  j.at("gold_answer").get_to(p.gold_answer);
  j.at("full_instruction").get_to(p.full_instruction);
}

}  // namespace rlsta
