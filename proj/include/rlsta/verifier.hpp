#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlsta/backend.hpp"

namespace rlsta {

enum class ExtractMode {
  boxed_then_last_number,
  last_four_numbers,
  judge,
  exact,  // whole trimmed response must equal gold; used by the toy task
};

std::string to_string(ExtractMode mode);
ExtractMode extract_mode_from_string(const std::string& s);

// Numeric literals in order of appearance ("1,234.50", "-3", "0.5").
std::vector<std::string> find_numbers(std::string_view text);

// Content of the last \boxed{...}, braces balanced.
std::optional<std::string> last_boxed(std::string_view text);

// Strips commas, a leading '+', leading zeros and trailing fractional zeros.
// Non-numeric input is returned trimmed and otherwise untouched.
std::string canonicalize_number(std::string_view s);

// boxed_then_last_number / judge: at most one answer. last_four_numbers: up to four.
// Empty result means nothing was extracted.
std::vector<std::string> extract_answer(std::string_view response, ExtractMode mode,
                                        Backend* judge = nullptr);

// Ver(response) in {0, 1}.
int verify(std::string_view response, std::string_view gold, ExtractMode mode,
           Backend* judge = nullptr);

// Multi-turn over single-turn performance.
double lic_score(double multi_perf, double single_perf);

}  // namespace rlsta
