#include "rlsta/verifier.hpp"
#include "rlsta/errors.hpp"

#include <algorithm>
#include <cctype>

#include "rlsta/prompts.hpp"

namespace rlsta {

namespace {

bool digit(char c) { return c >= '0' && c <= '9'; }
bool alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Reads digits with optional thousands grouping starting at i. Returns end index.
std::size_t scan_integer(std::string_view s, std::size_t i) {
  std::size_t j = i;
  while (j < s.size() && digit(s[j])) ++j;
  const std::size_t lead = j - i;
  if (lead >= 1 && lead <= 3) {
    // "1,234,567": every group after a comma must be exactly three digits.
    std::size_t k = j;
    while (k + 3 < s.size() && s[k] == ',' && digit(s[k + 1]) && digit(s[k + 2]) &&
           digit(s[k + 3]) && (k + 4 >= s.size() || !digit(s[k + 4]))) {
      k += 4;
    }
    j = k;
  }
  return j;
}

bool numeric_literal(std::string_view s) {
  auto nums = find_numbers(s);
  return nums.size() == 1 && trim(s) == nums[0];
}

}  // namespace

std::string to_string(ExtractMode mode) {
  switch (mode) {
    case ExtractMode::boxed_then_last_number: return "boxed_then_last_number";
    case ExtractMode::last_four_numbers: return "last_four_numbers";
    case ExtractMode::judge: return "judge";
    case ExtractMode::exact: return "exact";
  }
  return "?";
}

ExtractMode extract_mode_from_string(const std::string& s) {
  if (s == "boxed_then_last_number") return ExtractMode::boxed_then_last_number;
  if (s == "last_four_numbers") return ExtractMode::last_four_numbers;
  if (s == "judge") return ExtractMode::judge;
  if (s == "exact") return ExtractMode::exact;
  throw ValidationError("unknown verifier mode '" + s + "'");
}

std::vector<std::string> find_numbers(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!digit(s[i]) || (i > 0 && (std::isalpha(static_cast<unsigned char>(s[i - 1])) != 0))) {
      // digits glued to letters ("x2", "mp3") are identifiers, not numbers
      if (digit(s[i])) {
        while (i < s.size() && digit(s[i])) ++i;
      } else {
        ++i;
      }
      continue;
    }
    std::size_t start = i;
    if (start > 0 && s[start - 1] == '-' && (start == 1 || !alnum(s[start - 2]))) --start;
    std::size_t j = scan_integer(s, i);
    if (j + 1 < s.size() && s[j] == '.' && digit(s[j + 1])) {
      j += 1;
      while (j < s.size() && digit(s[j])) ++j;
    }
    out.emplace_back(s.substr(start, j - start));
    i = j;
  }
  return out;
}

std::optional<std::string> last_boxed(std::string_view s) {
  constexpr std::string_view tag = "\\boxed{";
  auto pos = s.rfind(tag);
  if (pos == std::string_view::npos) return std::nullopt;
  std::size_t i = pos + tag.size();
  int depth = 1;
  std::size_t j = i;
  for (; j < s.size(); ++j) {
    if (s[j] == '{') ++depth;
    if (s[j] == '}' && --depth == 0) break;
  }
  if (depth != 0) return std::nullopt;
  return std::string(s.substr(i, j - i));
}

std::string canonicalize_number(std::string_view raw) {
  std::string s = trim(raw);
  std::string t;
  for (char c : s)
    if (c != ',') t += c;
  bool neg = false;
  std::size_t i = 0;
  if (i < t.size() && (t[i] == '-' || t[i] == '+')) {
    neg = t[i] == '-';
    ++i;
  }
  std::string intpart, frac;
  bool dot = false;
  for (std::size_t k = i; k < t.size(); ++k) {
    if (digit(t[k])) {
      (dot ? frac : intpart) += t[k];
    } else if (t[k] == '.' && !dot) {
      dot = true;
    } else {
      return s;  // not a plain number
    }
  }
  if (intpart.empty() && frac.empty()) return s;
  auto nz = intpart.find_first_not_of('0');
  intpart = nz == std::string::npos ? "0" : intpart.substr(nz);
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  std::string out = intpart;
  if (!frac.empty()) out += "." + frac;
  if (neg && out != "0") out = "-" + out;
  return out;
}

std::vector<std::string> extract_answer(std::string_view response, ExtractMode mode,
                                        Backend* judge) {
  switch (mode) {
    case ExtractMode::boxed_then_last_number: {
      if (auto boxed = last_boxed(response)) {
        if (numeric_literal(*boxed)) return {trim(*boxed)};
        auto inner = find_numbers(*boxed);
        if (!inner.empty()) return {inner.back()};
        auto t = trim(*boxed);
        if (!t.empty()) return {t};
      }
      auto nums = find_numbers(response);
      if (nums.empty()) return {};
      return {nums.back()};
    }
    case ExtractMode::last_four_numbers: {
      auto nums = find_numbers(response);
      if (nums.size() > 4) nums.erase(nums.begin(), nums.end() - 4);
      return nums;
    }
    case ExtractMode::exact: {
      auto t = trim(response);
      if (t.empty()) return {};
      return {t};
    }
    case ExtractMode::judge: {
      if (judge == nullptr) throw ValidationError("judge extraction needs a judge backend");
      auto user = format_template(prompts::answer_extraction_template(),
                                  {{"response", std::string(response)}});
      auto reply = query_json(*judge, kDefaultSystemPrompt, user, kJudgeRetries, [](const json& j) {
        if (!j.is_object() || !j.contains("answer")) throw std::runtime_error("missing 'answer'");
        const auto& a = j.at("answer");
        if (!a.is_null() && !a.is_string() && !a.is_number())
          throw std::runtime_error("'answer' must be a string, number or null");
      });
      const auto& a = reply.at("answer");
      if (a.is_null()) return {};
      std::string v = a.is_string() ? a.get<std::string>() : a.dump();
      if (trim(v).empty()) return {};
      return {trim(v)};
    }
  }
  return {};
}

int verify(std::string_view response, std::string_view gold, ExtractMode mode, Backend* judge) {
  auto got = extract_answer(response, mode, judge);
  if (mode == ExtractMode::exact) return !got.empty() && got[0] == trim(gold) ? 1 : 0;
  const auto g = canonicalize_number(gold);
  return std::any_of(got.begin(), got.end(),
                     [&](const std::string& a) { return canonicalize_number(a) == g; })
             ? 1
             : 0;
}

double lic_score(double multi_perf, double single_perf) {
  if (!(single_perf > 0.0)) throw ValidationError("LiC score undefined: single-turn performance is 0");
  if (multi_perf < 0.0) throw ValidationError("LiC score: performance must be non-negative");
  return multi_perf / single_perf;
}

}  // namespace rlsta
