#include "rlsta/openai_backend.hpp"

#include <httplib.h>

namespace rlsta {

namespace {

struct SlotGuard {
  std::counting_semaphore<1024>& sem;
  explicit SlotGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
};

json messages_json(const std::vector<Turn>& messages) {
  json arr = json::array();
  for (const auto& t : messages) arr.push_back({{"role", to_string(t.role)}, {"content", t.text}});
  return arr;
}

}  // namespace

std::string render_score_prompt(const std::vector<Turn>& context, const std::string& style) {
  std::string out;
  if (style == "chatml") {
    for (const auto& t : context)
      out += "<|im_start|>" + to_string(t.role) + "\n" + t.text + "<|im_end|>\n";
    out += "<|im_start|>assistant\n";
  } else if (style == "plain") {
    for (const auto& t : context) {
      std::string r = to_string(t.role);
      r[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(r[0])));
      out += r + ": " + t.text + "\n\n";
    }
    out += "Assistant: ";
  } else {
    throw ValidationError("unknown score template '" + style + "'");
  }
  return out;
}

OpenAIBackend::OpenAIBackend(std::string base_url, GatewayOptions options)
    : base_url_(std::move(base_url)), options_(std::move(options)) {
  if (options_.max_in_flight < 1 || options_.max_in_flight > 1024)
    throw ValidationError("max_in_flight must be in [1, 1024]");
  if (options_.model.empty()) throw ValidationError("live backend: model name is required");
  auto scheme_end = base_url_.find("://");
  auto path_start = base_url_.find('/', scheme_end + 3);
  host_ = base_url_.substr(0, path_start);
  prefix_ = path_start == std::string::npos ? "" : base_url_.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  if (prefix_.size() < 3 || prefix_.compare(prefix_.size() - 3, 3, "/v1") != 0) prefix_ += "/v1";
  in_flight_ = std::make_unique<std::counting_semaphore<1024>>(options_.max_in_flight);
}

std::string OpenAIBackend::post(const std::string& path, const json& payload, bool scoring) {
  SlotGuard slot(*in_flight_);
  httplib::Client cli(host_);
  cli.set_connection_timeout(static_cast<time_t>(options_.timeout.count()));
  cli.set_read_timeout(static_cast<time_t>(options_.timeout.count()));
  if (!options_.api_key.empty()) cli.set_bearer_token_auth(options_.api_key);
  auto res = cli.Post(prefix_ + path, payload.dump(), "application/json");
  if (!res) throw BackendError("transport failure: " + httplib::to_string(res.error()), true);
  const int status = res->status;
  if (status == 429 || status >= 500)
    throw BackendError("server returned HTTP " + std::to_string(status), true, res->body);
  if (scoring && (status == 400 || status == 404 || status == 501)) {
    // Servers without echo-logprobs support reject the request outright.
    throw CapabilityError("backend does not support forced-completion scoring (HTTP " +
                          std::to_string(status) + "): " + res->body.substr(0, 200));
  }
  if (status != 200)
    throw BackendError("server returned HTTP " + std::to_string(status), false, res->body);
  return res->body;
}

Turn OpenAIBackend::parse_chat_reply(const std::string& body) {
  try {
    auto j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    Turn turn;
    turn.role = Role::assistant;
    const auto& content = choice.at("message").at("content");
    turn.text = content.is_null() ? "" : content.get<std::string>();
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
      std::vector<TokenLogprob> tl;
      for (const auto& e : choice["logprobs"]["content"])
        tl.push_back({e.at("token").get<std::string>(), std::min(0.0, e.at("logprob").get<double>())});
      turn.token_logprobs = std::move(tl);
    }
    return turn;
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed chat reply: ") + e.what(), false, body);
  }
}

ScoredCompletion OpenAIBackend::parse_score_reply(const std::string& body,
                                                  std::size_t prompt_chars) {
  try {
    auto j = json::parse(body);
    const auto& lp = j.at("choices").at(0).at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& values = lp.at("token_logprobs");
    const auto& offsets = lp.at("text_offset");
    ScoredCompletion sc;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (offsets.at(i).get<std::size_t>() < prompt_chars) continue;
      if (values.at(i).is_null())
        throw BackendError("scoring reply has no logprob for a completion token", false, body);
      sc.tokens.push_back(tokens.at(i).get<std::string>());
      sc.logprobs.push_back(std::min(0.0, values.at(i).get<double>()));
    }
    return sc;
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed scoring reply: ") + e.what(), false, body);
  }
}

Turn OpenAIBackend::chat(const std::vector<Turn>& messages, const SamplingParams& params) {
  validate(params);
  validate_chat_messages(messages);
  json payload = {{"model", options_.model},
                  {"messages", messages_json(messages)},
                  {"temperature", params.temperature},
                  {"max_tokens", params.max_tokens},
                  {"logprobs", true}};
  if (params.seed) payload["seed"] = *params.seed;
  return parse_chat_reply(post("/chat/completions", payload, false));
}

ScoredCompletion OpenAIBackend::score(const std::vector<Turn>& context,
                                      std::string_view completion) {
  const auto prompt = render_score_prompt(context, options_.score_template);
  ScoredCompletion sc;
  if (!completion.empty()) {
    json payload = {{"model", options_.model},
                    {"prompt", prompt + std::string(completion)},
                    {"max_tokens", 0},
                    {"echo", true},
                    {"logprobs", 1},
                    {"temperature", 0}};
    sc = parse_score_reply(post("/completions", payload, true), prompt.size());
  }
  sc.context_fingerprint = context_fingerprint(context);
  return sc;
}

}  // namespace rlsta
