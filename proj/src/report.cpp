#include "rlsta/report.hpp"
#include "rlsta/errors.hpp"

#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "rlsta/inertia.hpp"
#include "rlsta/rollout.hpp"
#include "rlsta/toy_lab.hpp"

namespace rlsta {

ScoreSummary score_records(std::vector<ConversationRecord>& records,
                           const std::map<std::string, std::string>& gold, ExtractMode mode,
                           const std::vector<int>& ks) {
  ScoreSummary out;
  out.mode = to_string(mode);
  std::map<std::pair<std::string, std::string>, std::pair<int, int>> tally;  // (scenario, id)
  for (auto& r : records) {
    if (!r.verified) {
      auto it = gold.find(r.problem_id);
      if (it == gold.end()) throw ValidationError("score: no gold answer for problem " + r.problem_id);
      r.verified = r.complete ? verify(r.final_answer_text, it->second, mode) : 0;
    }
    auto& t = tally[{to_string(r.scenario_kind), r.problem_id}];
    t.first += 1;
    t.second += *r.verified;
  }
  std::map<std::string, std::vector<const ProblemScore*>> by_scenario;
  for (const auto& [key, t] : tally) {
    ProblemScore p;
    p.scenario = key.first;
    p.problem_id = key.second;
    p.n = t.first;
    p.correct = t.second;
    p.accuracy = static_cast<double>(p.correct) / p.n;
    for (int k : ks)
      if (k <= p.n) p.pass_at[k] = pass_at_k(p.n, p.correct, k);
    out.problems.push_back(std::move(p));
  }
  for (const auto& p : out.problems) by_scenario[p.scenario].push_back(&p);
  for (const auto& [scenario, ps] : by_scenario) {
    double acc = 0.0;
    std::map<int, std::pair<double, int>> pk;
    for (const auto* p : ps) {
      acc += p->accuracy;
      for (const auto& [k, v] : p->pass_at) {
        pk[k].first += v;
        pk[k].second += 1;
      }
    }
    out.accuracy[scenario] = acc / static_cast<double>(ps.size());
    for (const auto& [k, v] : pk)
      if (v.second == static_cast<int>(ps.size())) out.pass_at[scenario][k] = v.first / v.second;
  }
  auto single = out.accuracy.find("single_turn");
  if (single != out.accuracy.end() && single->second > 0.0) {
    for (const auto& [scenario, acc] : out.accuracy)
      if (scenario != "single_turn") out.lic[scenario] = lic_score(acc, single->second);
  }
  return out;
}

json to_json(const ScoreSummary& s) {
  json problems = json::array();
  for (const auto& p : s.problems) {
    json pk = json::object();
    for (const auto& [k, v] : p.pass_at) pk["pass@" + std::to_string(k)] = v;
    problems.push_back({{"problem_id", p.problem_id},
                        {"scenario", p.scenario},
                        {"n", p.n},
                        {"correct", p.correct},
                        {"accuracy", p.accuracy},
                        {"pass_at_k", pk}});
  }
  json agg = json::object();
  for (const auto& [scenario, acc] : s.accuracy) {
    json pk = json::object();
    if (auto it = s.pass_at.find(scenario); it != s.pass_at.end())
      for (const auto& [k, v] : it->second) pk["pass@" + std::to_string(k)] = v;
    agg[scenario] = {{"accuracy", acc}, {"pass_at_k", pk}};
  }
  return {{"mode", s.mode}, {"problems", problems}, {"aggregate", agg}, {"lic", s.lic}};
}

namespace {

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

// Parses a JSON artifact, naming the line of a syntax error.
json load_json_artifact(const std::string& path, const std::string& content) {
  try {
    return json::parse(content);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < content.size() && i + 1 < e.byte; ++i)
      if (content[i] == '\n') ++line;
    throw ValidationError(path + ":" + std::to_string(line) + ": corrupt artifact: " + e.what());
  }
}

void render_scores(std::ostringstream& out, const std::string& path, const std::string& content) {
  const json doc = load_json_artifact(path, content);
  std::map<std::string, double> accuracy;
  std::map<std::string, json> pass;
  try {
    for (const auto& [scenario, v] : doc.at("aggregate").items()) {
      accuracy[scenario] = v.at("accuracy").get<double>();
      pass[scenario] = v.value("pass_at_k", json::object());
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": corrupt score artifact: " + e.what());
  }
  std::set<std::string> ks;
  for (const auto& [s, pk] : pass)
    for (const auto& [k, v] : pk.items()) ks.insert(k);

  out << "\n## Accuracy\n\n";
  out << pad("scenario", 14) << pad("accuracy", 10);
  for (const auto& k : ks) out << pad(k, 10);
  out << "\n";
  for (const auto& [scenario, acc] : accuracy) {
    out << pad(scenario, 14) << pad(fmt(acc), 10);
    for (const auto& k : ks)
      out << pad(pass[scenario].contains(k) ? fmt(pass[scenario][k].get<double>()) : "-", 10);
    out << "\n";
  }
  auto single = accuracy.find("single_turn");
  out << "\n## LiC\n\n";
  if (single == accuracy.end() || single->second <= 0.0) {
    out << "(no single-turn accuracy to compare against)\n";
    return;
  }
  for (const auto& [scenario, acc] : accuracy) {
    if (scenario == "single_turn") continue;
    out << pad(scenario, 14) << fmt(lic_score(acc, single->second)) << "\n";
  }
}

void render_metrics(std::ostringstream& out, const std::string& path, const std::string& content) {
  std::vector<MetricsRow> rows;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(content)) {
    ++line_no;
    if (trim(line).empty() || line.rfind("step,", 0) == 0) continue;
    try {
      rows.push_back(parse_metrics(line));
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  out << "\n## Training curve\n\n";
  if (rows.empty()) {
    out << "(no metrics rows)\n";
    return;
  }
  out << pad("step", 8) << pad("single", 10) << pad("multi", 10) << pad("objective", 12)
      << pad("kl", 12) << "retained\n";
  for (const auto& r : rows) {
    char obj[32], kl[32];
    std::snprintf(obj, sizeof obj, "%.4g", r.objective);
    std::snprintf(kl, sizeof kl, "%.4g", r.kl);
    out << pad(std::to_string(r.step), 8) << pad(fmt(r.single_acc), 10) << pad(fmt(r.multi_acc), 10)
        << pad(obj, 12) << pad(kl, 12) << r.retained << "\n";
  }
  const auto& first = rows.front();
  const auto& last = rows.back();
  const double gap = first.single_acc - first.multi_acc;
  out << "\ninitial gap " << fmt(gap) << ", final multi-turn " << fmt(last.multi_acc);
  if (gap > 0.0) out << ", gap closed " << fmt((last.multi_acc - first.multi_acc) / gap);
  out << ", single-turn change " << fmt(last.single_acc - first.single_acc) << "\n";
}

void render_inertia(std::ostringstream& out, const std::string& path, const std::string& content) {
  const json doc = load_json_artifact(path, content);
  out << "\n## Contextual inertia\n";
  try {
    const auto& reports = doc.at("reports");
    for (std::size_t i = 0; i < reports.size(); ++i) {
      try {
        (void)reports[i].get<IntensityReport>();
      } catch (const std::exception& e) {
        throw ValidationError(path + ": reports[" + std::to_string(i) + "]: " + e.what());
      }
    }
    out << "\nintensity reports: " << reports.size() << "\n";
    const auto& cmp = doc.at("comparisons");
    for (const auto& pair : {"example_r1", "example_r2", "r1_r2"}) {
      out << "\n### " << pair << "\n\n";
      if (!cmp.contains(pair) || cmp.at(pair).is_null()) {
        out << "insufficient data (one quality side is empty)\n";
        continue;
      }
      const auto& c = cmp.at(pair);
      out << pad("tier", 10) << pad("high-q", 10) << "low-q\n";
      const char* names[] = {"Low", "Medium", "High"};
      for (std::size_t t = 0; t < 3; ++t)
        out << pad(names[t], 10) << pad(fmt(c.at("hist_high")[t].get<double>()), 10)
            << fmt(c.at("hist_low")[t].get<double>()) << "\n";
      out << "TV " << fmt(c.at("tv").get<double>()) << ", chi-square "
          << fmt(c.at("chi_square").get<double>(), 4) << " (df " << c.at("df").get<int>()
          << "), p " << fmt(c.at("p_value").get<double>(), 4) << "\n";
    }
    if (doc.contains("root_cause_proportions") && !doc.at("root_cause_proportions").is_null()) {
      out << "\n### root causes\n\n";
      for (const auto& [label, v] : doc.at("root_cause_proportions").items())
        out << pad(label, 26) << fmt(v.get<double>()) << "\n";
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": corrupt inertia artifact: " + e.what());
  }
}

}  // namespace

std::string render_report(const ReportInputs& in) {
  if (!in.scores_path && !in.metrics_path && !in.inertia_path)
    throw ValidationError("report: at least one input artifact is required");
  std::ostringstream out;
  std::vector<std::pair<std::string, std::string>> inputs;  // (path, content)
  for (const auto* p : {&in.scores_path, &in.metrics_path, &in.inertia_path})
    if (*p) inputs.emplace_back(**p, read_file(**p));

  out << "# RLSTA report\n\n";
  out << "run_seed     " << in.run_seed << "\n";
  out << "config_hash  " << (in.config_hash.empty() ? "-" : in.config_hash) << "\n";
  for (const auto& [path, content] : inputs)
    out << "input        " << std::filesystem::path(path).filename().string() << " "
        << git_blob_hash(content) << "\n";

  std::size_t i = 0;
  if (in.scores_path) render_scores(out, inputs[i].first, inputs[i].second), ++i;
  if (in.metrics_path) render_metrics(out, inputs[i].first, inputs[i].second), ++i;
  if (in.inertia_path) render_inertia(out, inputs[i].first, inputs[i].second), ++i;
  std::string text;
  auto lines = split_lines(out.str());
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (const auto& line : lines) {
    auto end = line.find_last_not_of(' ');
    text += end == std::string::npos ? std::string() : line.substr(0, end + 1);
    text += '\n';
  }
  return text;
}

std::string metrics_csv(const std::string& metrics_path) { return read_file(metrics_path); }

}  // namespace rlsta
