#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlsta/conversation.hpp"
#include "rlsta/verifier.hpp"

namespace rlsta {

struct ProblemScore {
  std::string problem_id;
  std::string scenario;
  int n = 0;
  int correct = 0;
  double accuracy = 0.0;
  std::map<int, double> pass_at;  // k -> pass@k
};

struct ScoreSummary {
  std::string mode;
  std::vector<ProblemScore> problems;  // sorted by (scenario, problem_id)
  // scenario -> mean accuracy and mean pass@k over problems
  std::map<std::string, double> accuracy;
  std::map<std::string, std::map<int, double>> pass_at;
  // multi-turn scenario -> LiC against single_turn
  std::map<std::string, double> lic;
};

// Verifies every record against the gold answers (unless a record already carries a
// verdict) and aggregates per problem and per scenario. Incomplete records count as
// failures.
ScoreSummary score_records(std::vector<ConversationRecord>& records,
                           const std::map<std::string, std::string>& gold, ExtractMode mode,
                           const std::vector<int>& ks = {1, 8});

json to_json(const ScoreSummary& s);

struct ReportInputs {
  std::optional<std::string> scores_path;
  std::optional<std::string> metrics_path;
  std::optional<std::string> inertia_path;
  std::uint64_t run_seed = 0;
  std::string config_hash;
};

// Plain-text report; identical inputs give identical bytes.
std::string render_report(const ReportInputs& inputs);

// Optional CSV of the training curve (step,single_acc,multi_acc,...), passed through
// unchanged for plotting.
std::string metrics_csv(const std::string& metrics_path);

}  // namespace rlsta
