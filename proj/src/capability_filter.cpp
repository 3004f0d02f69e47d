#include "rlsta/capability_filter.hpp"

#include <algorithm>

namespace rlsta {

double estimate_accuracy(const std::vector<Turn>& context, Backend& backend, int n,
                         const std::string& gold, ExtractMode mode, const SamplingParams& params,
                         std::uint64_t seed, const std::string& tag) {
  if (n < 1) throw ValidationError("estimate_accuracy: n must be >= 1");
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    SamplingParams p = params;
    p.seed = derive_seed(seed, tag, static_cast<std::uint64_t>(i));
    try {
      correct += verify(backend.chat(context, p).text, gold, mode);
    } catch (const BackendError& e) {
      json tally = {{"tag", tag}, {"completed", i}, {"correct", correct}, {"requested", n}};
      throw BackendError(std::string(e.what()) + " (partial tally " + std::to_string(correct) +
                             "/" + std::to_string(i) + ")",
                         false, tally.dump());
    }
  }
  return static_cast<double>(correct) / n;
}

double exact_accuracy(const std::vector<Turn>& context, Backend& backend, const std::string& gold,
                      ExtractMode mode) {
  double acc = 0.0;
  for (const auto& o : backend.enumerate_outcomes(context))
    acc += o.probability * verify(o.completion, gold, mode);
  return acc;
}

bool retain(double acc_single, double acc_multi, double margin) {
  // Rates are multiples of 1/n; the slack absorbs rounding in the subtraction.
  return acc_single - acc_multi >= margin - 1e-12;
}

FilterVerdict filter_history(const std::string& problem_id, const std::vector<Turn>& history,
                             const std::string& full_instruction, const std::string& gold,
                             Backend& backend, const FilterOptions& options, std::uint64_t seed) {
  validate_chat_messages(history);
  if (options.n < 1) throw ValidationError("filter: n must be >= 1");
  const std::vector<Turn> single{{Role::system, options.system_prompt, std::nullopt},
                                 {Role::user, full_instruction, std::nullopt}};
  FilterVerdict v;
  v.problem_id = problem_id;
  v.n_samples = options.n;
  v.margin_used = options.margin();
  v.acc_single = estimate_accuracy(single, backend, options.n, gold, options.mode, options.params,
                                   seed, problem_id + "#single");
  v.acc_multi = estimate_accuracy(history, backend, options.n, gold, options.mode, options.params,
                                  seed, problem_id + "#multi");
  v.retained = retain(v.acc_single, v.acc_multi, v.margin_used);
  return v;
}

std::vector<std::size_t> cap_retained(const std::vector<FilterVerdict>& verdicts, std::size_t cap,
                                      std::uint64_t seed) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < verdicts.size(); ++i)
    if (verdicts[i].retained) idx.push_back(i);
  if (idx.size() <= cap) return idx;
  Rng rng(mix64(seed ^ 0x5eedcafeULL));
  for (std::size_t i = 0; i < cap; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void to_json(json& j, const FilterVerdict& v) {
  j = {{"problem_id", v.problem_id}, {"acc_single", v.acc_single},
       {"acc_multi", v.acc_multi},   {"n_samples", v.n_samples},
       {"margin_used", v.margin_used}, {"retained", v.retained}};
}

void from_json(const json& j, FilterVerdict& v) {
  j.at("problem_id").get_to(v.problem_id);
  j.at("acc_single").get_to(v.acc_single);
  j.at("acc_multi").get_to(v.acc_multi);
  j.at("n_samples").get_to(v.n_samples);
  j.at("margin_used").get_to(v.margin_used);
  j.at("retained").get_to(v.retained);
}

}  // namespace rlsta
