#include "rlsta/inertia.hpp"

#include <algorithm>
#include <cmath>

#include "rlsta/prompts.hpp"
#include "rlsta/rollout.hpp"

namespace rlsta {

std::string to_string(Tier t) {
  switch (t) {
    case Tier::low: return "Low";
    case Tier::medium: return "Medium";
    case Tier::high: return "High";
  }
  return "?";
}

Tier tier_from_string(const std::string& s) {
  if (s == "Low") return Tier::low;
  if (s == "Medium") return Tier::medium;
  if (s == "High") return Tier::high;
  throw ValidationError("unknown tier '" + s + "'");
}

Tier tier_of(int score) {
  if (score == 1 || score == 2) return Tier::low;
  if (score == 3) return Tier::medium;
  if (score == 4 || score == 5) return Tier::high;
  throw ValidationError("similarity score must be 1-5, got " + std::to_string(score));
}

std::string render_similarity_prompt(const IntensityInput& in) {
  return format_template(prompts::similarity_user_template(),
                         {{"example_answer_attempt", in.example_attempt},
                          {"first_turn_query", in.first_query},
                          {"first_turn_response", in.first_response},
                          {"second_turn_query", in.second_query},
                          {"second_turn_response", in.second_response},
                          {"correct_answer", in.correct_answer}});
}

namespace {

int score_field(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  int s = 0;
  if (v.is_number_integer()) {
    s = v.get<int>();
  } else if (v.is_string()) {
    s = std::stoi(v.get<std::string>());
  } else {
    throw std::runtime_error(std::string(key) + " is not an integer");
  }
  if (s < 1 || s > 5) throw std::runtime_error(std::string(key) + " out of range 1-5");
  return s;
}

}  // namespace

IntensityReport score_intensity(const IntensityInput& in, Backend& judge, int retries) {
  if (trim(in.example_attempt).empty() || trim(in.first_response).empty() ||
      trim(in.second_response).empty())
    throw ValidationError("score_intensity: empty input for " + in.problem_id);
  IntensityReport r;
  r.problem_id = in.problem_id;
  r.history_quality = in.history_quality;
  query_json(judge, prompts::similarity_system(), render_similarity_prompt(in), retries,
             [&](const json& j) {
               const json& a = j.contains("similarity_assessment") ? j.at("similarity_assessment") : j;
               r.example_r1 = score_field(a, "example-r1");
               r.example_r2 = score_field(a, "example-r2");
               r.r1_r2 = score_field(a, "r1-r2");
             });
  r.tier_example_r1 = tier_of(r.example_r1);
  r.tier_example_r2 = tier_of(r.example_r2);
  r.tier_r1_r2 = tier_of(r.r1_r2);
  return r;
}

QualityPartition partition_by_quality(const std::vector<ConversationRecord>& records) {
  QualityPartition out;
  for (const auto& r : records) {
    if (!r.verified) throw ValidationError("partition: record " + r.problem_id + " is not verified");
    (*r.verified == 1 ? out.high : out.low).push_back(r);
  }
  return out;
}

double total_variation(const std::array<double, 3>& p, const std::array<double, 3>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < 3; ++i) s += std::fabs(p[i] - q[i]);
  return 0.5 * s;
}

double chi_square_p_value(double x, int df) {
  if (df <= 0) return 1.0;
  if (df == 1) return std::erfc(std::sqrt(x / 2.0));
  if (df == 2) return std::exp(-x / 2.0);
  throw ValidationError("chi-square p-value only implemented for df <= 2");
}

DistributionComparison compare_counts(const std::array<long, 3>& high,
                                      const std::array<long, 3>& low) {
  DistributionComparison c;
  c.counts_high = high;
  c.counts_low = low;
  long nh = 0, nl = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (high[i] < 0 || low[i] < 0) throw ValidationError("compare: negative count");
    nh += high[i];
    nl += low[i];
  }
  if (nh == 0 || nl == 0)
    throw ValidationError("compare: insufficient data, one side of the partition is empty");
  for (std::size_t i = 0; i < 3; ++i) {
    c.hist_high[i] = static_cast<double>(high[i]) / static_cast<double>(nh);
    c.hist_low[i] = static_cast<double>(low[i]) / static_cast<double>(nl);
  }
  c.tv = total_variation(c.hist_high, c.hist_low);
  const double n = static_cast<double>(nh + nl);
  int used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double col = static_cast<double>(high[i] + low[i]);
    if (col == 0.0) continue;
    ++used;
    const double eh = col * static_cast<double>(nh) / n;
    const double el = col * static_cast<double>(nl) / n;
    c.chi_square += (high[i] - eh) * (high[i] - eh) / eh + (low[i] - el) * (low[i] - el) / el;
  }
  c.df = std::max(0, used - 1);
  c.p_value = chi_square_p_value(c.chi_square, c.df);
  return c;
}

DistributionComparison compare_distributions(const std::vector<Tier>& high,
                                             const std::vector<Tier>& low) {
  std::array<long, 3> h{}, l{};
  for (auto t : high) ++h[static_cast<std::size_t>(t)];
  for (auto t : low) ++l[static_cast<std::size_t>(t)];
  return compare_counts(h, l);
}

RootCauseLabel classify_root_cause(const ConversationRecord& failed,
                                   const std::string& correct_answer, Backend& judge) {
  if (!failed.verified || *failed.verified != 0)
    throw ValidationError("root cause: conversation " + failed.problem_id +
                          " did not end in a verified failure");
  const auto user = format_template(prompts::root_cause_template(),
                                    {{"conversation", render_transcript(failed.turns)},
                                     {"correct_answer", correct_answer}});
  RootCauseLabel out;
  out.problem_id = failed.problem_id;
  query_json(judge, kDefaultSystemPrompt, user, 1, [&](const json& j) {
    const auto label = j.at("label").get<std::string>();
    if (std::find(kRootCauseLabels.begin(), kRootCauseLabels.end(), label) == kRootCauseLabels.end())
      throw std::runtime_error("unknown label '" + label + "'");
    out.label = label;
    out.judge_rationale = j.value("rationale", "");
  });
  return out;
}

std::map<std::string, double> root_cause_proportions(const std::vector<RootCauseLabel>& labels) {
  std::map<std::string, double> out;
  for (const auto& l : kRootCauseLabels) out[l] = 0.0;
  if (labels.empty()) return out;
  for (const auto& l : labels) out.at(l.label) += 1.0;
  for (auto& [k, v] : out) v /= static_cast<double>(labels.size());
  return out;
}

std::vector<std::string> select_analysis_set(const std::vector<std::string>& problems,
                                             const std::map<std::string, double>& accuracy,
                                             double threshold,
                                             const std::function<void(const std::string&)>& warn) {
  std::vector<std::string> out;
  for (const auto& p : problems) {
    auto it = accuracy.find(p);
    if (it == accuracy.end()) throw ValidationError("no single-turn accuracy for problem " + p);
    if (it->second > threshold) out.push_back(p);
  }
  if (out.empty() && warn) warn("analysis set is empty: no problem has single-turn accuracy above the threshold");
  return out;
}

void to_json(json& j, const IntensityReport& r) {
  j = {{"problem_id", r.problem_id},
       {"scores", {{"example_r1", r.example_r1}, {"example_r2", r.example_r2}, {"r1_r2", r.r1_r2}}},
       {"tiers",
        {{"example_r1", to_string(r.tier_example_r1)},
         {"example_r2", to_string(r.tier_example_r2)},
         {"r1_r2", to_string(r.tier_r1_r2)}}},
       {"history_quality", r.history_quality}};
}

void from_json(const json& j, IntensityReport& r) {
  j.at("problem_id").get_to(r.problem_id);
  const auto& s = j.at("scores");
  r.example_r1 = s.at("example_r1").get<int>();
  r.example_r2 = s.at("example_r2").get<int>();
  r.r1_r2 = s.at("r1_r2").get<int>();
  r.tier_example_r1 = tier_of(r.example_r1);
  r.tier_example_r2 = tier_of(r.example_r2);
  r.tier_r1_r2 = tier_of(r.r1_r2);
  r.history_quality = j.at("history_quality").get<std::string>();
}

void to_json(json& j, const DistributionComparison& c) {
  j = {{"counts_high", c.counts_high}, {"counts_low", c.counts_low},
       {"hist_high", c.hist_high},     {"hist_low", c.hist_low},
       {"tv", c.tv},                   {"chi_square", c.chi_square},
       {"df", c.df},                   {"p_value", c.p_value}};
}

void to_json(json& j, const RootCauseLabel& r) {
  j = {{"problem_id", r.problem_id}, {"label", r.label}, {"judge_rationale", r.judge_rationale}};
}

void from_json(const json& j, RootCauseLabel& r) {
  j.at("problem_id").get_to(r.problem_id);
  j.at("label").get_to(r.label);
  r.judge_rationale = j.value("judge_rationale", "");
}

}  // namespace rlsta
