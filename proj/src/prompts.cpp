#include "rlsta/prompts.hpp"

namespace rlsta::prompts {

std::string_view similarity_system() { return assets::similarity_system; }
std::string_view similarity_user_template() { return assets::similarity_user; }
std::string_view segmentation() { return assets::segmentation; }
std::string_view rephrasing() { return assets::rephrasing; }
std::string_view abstain() { return assets::abstain; }
std::string_view corruption_template() { return assets::corruption; }
std::string_view user_simulator_template() { return assets::user_simulator; }
std::string_view answer_extraction_template() { return assets::answer_extraction; }
std::string_view root_cause_template() { return assets::root_cause; }

}  // namespace rlsta::prompts
