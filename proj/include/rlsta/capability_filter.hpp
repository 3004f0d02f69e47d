#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rlsta/backend.hpp"
#include "rlsta/verifier.hpp"

namespace rlsta {

struct FilterVerdict {
  std::string problem_id;
  double acc_single = 0.0;
  double acc_multi = 0.0;
  int n_samples = 0;
  double margin_used = 0.0;
  bool retained = false;

  friend bool operator==(const FilterVerdict&, const FilterVerdict&) = default;
};

struct FilterOptions {
  int n = 8;
  std::optional<double> delta;  // defaults to 1/n
  ExtractMode mode = ExtractMode::boxed_then_last_number;
  SamplingParams params{1.0, 1024, std::nullopt};
  std::string system_prompt = std::string(kDefaultSystemPrompt);

  double margin() const { return delta ? *delta : 1.0 / n; }
};

// Fraction of n samples from `context` that verify against gold. Sample i uses
// seed derive_seed(seed, tag, i).
double estimate_accuracy(const std::vector<Turn>& context, Backend& backend, int n,
                         const std::string& gold, ExtractMode mode, const SamplingParams& params,
                         std::uint64_t seed, const std::string& tag);

// Exact E[Ver] at temperature 1 from the backend's outcome table.
double exact_accuracy(const std::vector<Turn>& context, Backend& backend, const std::string& gold,
                      ExtractMode mode);

// retained iff acc_single - acc_multi >= margin.
bool retain(double acc_single, double acc_multi, double margin);

// Single-turn accuracy on {system, full_instruction} against multi-turn accuracy on H.
FilterVerdict filter_history(const std::string& problem_id, const std::vector<Turn>& history,
                             const std::string& full_instruction, const std::string& gold,
                             Backend& backend, const FilterOptions& options, std::uint64_t seed);

// Seeded subset of at most `cap` retained verdict indices, in input order.
std::vector<std::size_t> cap_retained(const std::vector<FilterVerdict>& verdicts, std::size_t cap,
                                      std::uint64_t seed);

void to_json(json& j, const FilterVerdict& v);
void from_json(const json& j, FilterVerdict& v);

}  // namespace rlsta
