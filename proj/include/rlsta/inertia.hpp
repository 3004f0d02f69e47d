#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rlsta/backend.hpp"

namespace rlsta {

enum class Tier { low, medium, high };

std::string to_string(Tier t);
Tier tier_from_string(const std::string& s);
// 1-2 low, 3 medium, 4-5 high; anything else is a ValidationError.
Tier tier_of(int score);

struct IntensityInput {
  std::string problem_id;
  std::string example_attempt;
  std::string first_query;
  std::string first_response;
  std::string second_query;
  std::string second_response;
  std::string correct_answer;
  std::string history_quality;  // "high" or "low"
};

struct IntensityReport {
  std::string problem_id;
  int example_r1 = 0;
  int example_r2 = 0;
  int r1_r2 = 0;
  Tier tier_example_r1 = Tier::low;
  Tier tier_example_r2 = Tier::low;
  Tier tier_r1_r2 = Tier::low;
  std::string history_quality;
};

std::string render_similarity_prompt(const IntensityInput& in);
IntensityReport score_intensity(const IntensityInput& in, Backend& judge,
                                int retries = kJudgeRetries);

struct QualityPartition {
  std::vector<ConversationRecord> high;  // final answer verified 1
  std::vector<ConversationRecord> low;
};

QualityPartition partition_by_quality(const std::vector<ConversationRecord>& records);

struct DistributionComparison {
  std::array<long, 3> counts_high{};  // low, medium, high tiers
  std::array<long, 3> counts_low{};
  std::array<double, 3> hist_high{};
  std::array<double, 3> hist_low{};
  double tv = 0.0;
  double chi_square = 0.0;
  int df = 0;
  double p_value = 1.0;
};

DistributionComparison compare_counts(const std::array<long, 3>& high,
                                      const std::array<long, 3>& low);
DistributionComparison compare_distributions(const std::vector<Tier>& high,
                                             const std::vector<Tier>& low);

// Total variation between two 3-bin distributions.
double total_variation(const std::array<double, 3>& p, const std::array<double, 3>& q);

// Upper tail of the chi-square distribution (df 0, 1 or 2).
double chi_square_p_value(double x, int df);

inline const std::array<std::string, 3> kRootCauseLabels = {
    "misleading_context", "propagated_error", "local_reasoning_failure"};

struct RootCauseLabel {
  std::string problem_id;
  std::string label;
  std::string judge_rationale;
};

// Needs a record whose final answer verified 0. An unknown label gets one reprompt.
RootCauseLabel classify_root_cause(const ConversationRecord& failed,
                                   const std::string& correct_answer, Backend& judge);

std::map<std::string, double> root_cause_proportions(const std::vector<RootCauseLabel>& labels);

// Problems whose single-turn accuracy is strictly above the threshold.
std::vector<std::string> select_analysis_set(const std::vector<std::string>& problems,
                                             const std::map<std::string, double>& accuracy,
                                             double threshold = 0.7,
                                             const std::function<void(const std::string&)>& warn = {});

void to_json(json& j, const IntensityReport& r);
void from_json(const json& j, IntensityReport& r);
void to_json(json& j, const DistributionComparison& c);
void to_json(json& j, const RootCauseLabel& r);
void from_json(const json& j, RootCauseLabel& r);

}  // namespace rlsta
