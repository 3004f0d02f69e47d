#pragma once

#include <string>
#include <string_view>

// Prompt assets live in assets/prompts and are compiled in byte-for-byte.
namespace rlsta::prompts {

namespace assets {
extern const char* const similarity_system;
extern const char* const similarity_user;
extern const char* const segmentation;
extern const char* const rephrasing;
extern const char* const abstain;
extern const char* const corruption;
extern const char* const user_simulator;
extern const char* const answer_extraction;
extern const char* const root_cause;
}  // namespace assets

// Bumped whenever one of our own (non-verbatim) prompts changes wording.
inline constexpr std::string_view kPromptVersion = "2026.10-1";

std::string_view similarity_system();
std::string_view similarity_user_template();
std::string_view segmentation();
std::string_view rephrasing();
std::string_view abstain();
std::string_view corruption_template();
std::string_view user_simulator_template();
std::string_view answer_extraction_template();
std::string_view root_cause_template();

}  // namespace rlsta::prompts
