#include "rlsta/backend.hpp"

#include "rlsta/mock_backend.hpp"
#include "rlsta/openai_backend.hpp"

namespace rlsta {

void validate(const SamplingParams& params) {
  if (!(params.temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (params.max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
}

double ScoredCompletion::total_logprob() const {
  double s = 0.0;
  for (double lp : logprobs) s += lp;
  return s;
}

std::vector<Outcome> Backend::enumerate_outcomes(const std::vector<Turn>&) {
  throw CapabilityError(name() + ": outcome enumeration is only available on finite mock backends");
}

std::string context_fingerprint(const std::vector<Turn>& context) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : context) {
    h = fnv1a64(to_string(t.role), h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h = fnv1a64(t.text, h);
    h = fnv1a64(std::string_view("\x1e", 1), h);
  }
  return hex64(h);
}

void validate_chat_messages(const std::vector<Turn>& messages) {
  validate_history(messages);
  if (messages.back().role != Role::user) {
    throw ValidationError("chat: messages must end with a user turn");
  }
}

RetryingBackend::RetryingBackend(BackendHandle inner, RetryPolicy policy, SleepFn sleep)
    : inner_(std::move(inner)), policy_(policy), sleep_(std::move(sleep)) {}

Turn RetryingBackend::chat(const std::vector<Turn>& messages, const SamplingParams& params) {
  return with_retries([&] { return inner_->chat(messages, params); }, policy_, sleep_);
}

ScoredCompletion RetryingBackend::score(const std::vector<Turn>& context,
                                        std::string_view completion) {
  return with_retries([&] { return inner_->score(context, completion); }, policy_, sleep_);
}

std::vector<Outcome> RetryingBackend::enumerate_outcomes(const std::vector<Turn>& context) {
  return inner_->enumerate_outcomes(context);
}

std::string RetryingBackend::name() const { return inner_->name(); }

json query_json(Backend& judge, std::string_view system, std::string_view user, int retries,
                const std::function<void(const json&)>& check) {
  std::vector<Turn> messages{{Role::system, std::string(system), std::nullopt},
                             {Role::user, std::string(user), std::nullopt}};
  std::string raw;
  std::string why = "no JSON object found";
  for (int attempt = 0; attempt <= retries; ++attempt) {
    SamplingParams params;
    params.temperature = 0.0;
    params.seed = static_cast<std::uint64_t>(attempt);
    raw = judge.chat(messages, params).text;
    auto parsed = parse_lenient_json(raw);
    if (!parsed) {
      why = "no JSON object found";
      continue;
    }
    try {
      if (check) check(*parsed);
      return *parsed;
    } catch (const std::exception& e) {
      why = e.what();
    }
  }
  throw SchemaError("judge reply did not match the expected schema after " +
                        std::to_string(retries + 1) + " attempts: " + why,
                    raw);
}

BackendHandle make_backend(const std::string& endpoint, const GatewayOptions& options) {
  if (endpoint.rfind("mock:", 0) == 0) {
    return std::make_shared<MockBackend>(MockBackend::from_fixture(endpoint.substr(5)));
  }
  if (endpoint.rfind("uniform:", 0) == 0) {
    int v = 0;
    try {
      v = std::stoi(endpoint.substr(8));
    } catch (const std::exception&) {
      throw ValidationError("uniform backend: bad vocabulary size in '" + endpoint + "'");
    }
    return std::make_shared<UniformBackend>(v);
  }
  if (endpoint.rfind("http://", 0) == 0 || endpoint.rfind("https://", 0) == 0) {
    auto live = std::make_shared<OpenAIBackend>(endpoint, options);
    return std::make_shared<RetryingBackend>(live, options.retry);
  }
  throw ValidationError("unrecognized backend endpoint: '" + endpoint + "'");
}

}  // namespace rlsta
