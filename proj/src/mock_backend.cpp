#include "rlsta/mock_backend.hpp"

#include <cctype>
#include <cmath>
#include <map>

#include "rlsta/jsonl.hpp"

namespace rlsta {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string context_text(const std::vector<Turn>& context) {
  std::string s;
  for (const auto& t : context) {
    s += t.text;
    s += '\n';
  }
  return s;
}

std::uint64_t sampling_seed(const SamplingParams& params, const std::vector<Turn>& messages,
                            std::atomic<std::uint64_t>& counter) {
  if (params.seed) return *params.seed;
  auto n = counter.fetch_add(1);
  return mix64(fnv1a64(context_fingerprint(messages)) ^ mix64(n));
}

bool starts_with(const std::vector<std::string>& seq, const std::vector<std::string>& prefix,
                 std::size_t len) {
  if (seq.size() < len) return false;
  for (std::size_t i = 0; i < len; ++i)
    if (seq[i] != prefix[i]) return false;
  return true;
}

}  // namespace

std::vector<std::string> mock_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    while (j < text.size() && is_space(text[j])) ++j;
    if (j == text.size()) {
      out.emplace_back(text.substr(i));
      break;
    }
    while (j < text.size() && !is_space(text[j])) ++j;
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

void from_json(const json& j, MockBackend::Entry& e) {
  if (!j.is_object()) throw ValidationError("mock entry must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "contains" && k != "user_turns" && k != "default" && k != "outcomes" && k != "note")
      throw ValidationError("mock entry: unknown key '" + k + "'");
  }
  e = {};
  if (j.contains("contains")) {
    const auto& c = j.at("contains");
    if (c.is_string()) {
      e.contains.push_back(c.get<std::string>());
    } else {
      e.contains = c.get<std::vector<std::string>>();
    }
  }
  if (j.contains("user_turns")) e.user_turns = j.at("user_turns").get<int>();
  e.is_default = j.value("default", false);
  for (const auto& o : j.at("outcomes")) {
    MockBackend::WeightedCompletion w;
    w.completion = o.at("completion").get<std::string>();
    w.weight = o.value("weight", 1.0);
    e.outcomes.push_back(std::move(w));
  }
}

MockBackend::MockBackend(std::vector<Entry> entries, double floor_prob, std::string label)
    : entries_(std::move(entries)), floor_logprob_(std::log(floor_prob)), label_(std::move(label)) {
  if (!(floor_prob > 0.0 && floor_prob <= 1.0))
    throw ValidationError("mock backend: floor probability must be in (0, 1]");
  int defaults = 0;
  for (const auto& e : entries_) {
    if (e.is_default) ++defaults;
    if (e.outcomes.empty()) throw ValidationError("mock backend: entry without outcomes");
    // Duplicate completions are merged so the token trie stays consistent.
    std::map<std::string, double> merged;
    std::vector<std::string> order;
    double total = 0.0;
    for (const auto& o : e.outcomes) {
      if (!(o.weight > 0.0) || !std::isfinite(o.weight))
        throw ValidationError("mock backend: outcome weights must be positive");
      if (!merged.count(o.completion)) order.push_back(o.completion);
      merged[o.completion] += o.weight;
      total += o.weight;
    }
    Table t;
    for (const auto& c : order) {
      t.completions.push_back(c);
      t.probs.push_back(merged[c] / total);
      auto toks = mock_tokenize(c);
      toks.emplace_back();
      t.tokens.push_back(std::move(toks));
    }
    tables_.push_back(std::move(t));
  }
  if (defaults > 1) throw ValidationError("mock backend: more than one default entry");
}

MockBackend::MockBackend(const MockBackend& other)
    : entries_(other.entries_),
      tables_(other.tables_),
      floor_logprob_(other.floor_logprob_),
      label_(other.label_) {}

MockBackend MockBackend::from_jsonl(std::string_view content, const std::string& source_name) {
  std::vector<Entry> entries;
  for (const auto& line : parse_jsonl(content, source_name)) {
    try {
      entries.push_back(line.value.get<Entry>());
    } catch (const std::exception& e) {
      throw ValidationError(source_name + ":" + std::to_string(line.line_number) + ": " + e.what());
    }
  }
  return MockBackend(std::move(entries), kDefaultFloor, "mock:" + source_name);
}

MockBackend MockBackend::from_fixture(const std::string& path) {
  return from_jsonl(read_file(path), path);
}

std::size_t MockBackend::match(const std::vector<Turn>& context) const {
  const std::string text = context_text(context);
  const auto users = static_cast<int>(user_turn_count(context));
  std::optional<std::size_t> fallback;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.is_default) {
      if (!fallback) fallback = i;
      continue;
    }
    if (e.user_turns && *e.user_turns != users) continue;
    bool ok = true;
    for (const auto& c : e.contains) ok = ok && contains(text, c);
    if (ok) return i;
  }
  if (fallback) return *fallback;
  throw BackendError(label_ + ": no outcome table matches the context", false, text);
}

std::vector<double> MockBackend::token_logprobs(const Table& table,
                                                const std::vector<std::string>& tokens) const {
  std::vector<double> out;
  out.reserve(tokens.size());
  double mass = 1.0;
  bool on_trie = true;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (!on_trie) {
      out.push_back(floor_logprob_);
      continue;
    }
    double next = 0.0;
    for (std::size_t j = 0; j < table.tokens.size(); ++j)
      if (starts_with(table.tokens[j], tokens, t + 1)) next += table.probs[j];
    if (next <= 0.0) {
      on_trie = false;
      out.push_back(floor_logprob_);
      continue;
    }
    out.push_back(std::min(0.0, std::log(next) - std::log(mass)));
    mass = next;
  }
  return out;
}

Turn MockBackend::chat(const std::vector<Turn>& messages, const SamplingParams& params) {
  validate(params);
  validate_chat_messages(messages);
  const auto& table = tables_[match(messages)];

  std::size_t pick = 0;
  if (params.temperature == 0.0) {
    for (std::size_t j = 1; j < table.probs.size(); ++j)
      if (table.probs[j] > table.probs[pick]) pick = j;
  } else {
    std::vector<double> w(table.probs.size());
    for (std::size_t j = 0; j < w.size(); ++j)
      w[j] = std::exp(std::log(table.probs[j]) / params.temperature);
    Rng rng(sampling_seed(params, messages, unseeded_calls_));
    pick = rng.categorical(w);
  }

  std::vector<std::string> tokens = table.tokens[pick];
  const auto max_tokens = static_cast<std::size_t>(params.max_tokens);
  if (tokens.size() - 1 > max_tokens) tokens.resize(max_tokens);  // cut before the end token
  auto lps = token_logprobs(table, tokens);

  Turn turn;
  turn.role = Role::assistant;
  std::vector<TokenLogprob> tl;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    turn.text += tokens[i];
    tl.push_back({tokens[i], lps[i]});
  }
  turn.token_logprobs = std::move(tl);
  return turn;
}

ScoredCompletion MockBackend::score(const std::vector<Turn>& context, std::string_view completion) {
  const auto& table = tables_[match(context)];
  ScoredCompletion sc;
  sc.tokens = mock_tokenize(completion);
  sc.tokens.emplace_back();
  sc.logprobs = token_logprobs(table, sc.tokens);
  sc.context_fingerprint = context_fingerprint(context);
  return sc;
}

std::vector<Outcome> MockBackend::enumerate_outcomes(const std::vector<Turn>& context) {
  const auto& table = tables_[match(context)];
  std::vector<Outcome> out;
  for (std::size_t j = 0; j < table.completions.size(); ++j)
    out.push_back({table.completions[j], table.probs[j]});
  return out;
}

UniformBackend::UniformBackend(int vocab_size) : vocab_(vocab_size) {
  if (vocab_size < 1) throw ValidationError("uniform backend: vocabulary size must be >= 1");
}

std::string UniformBackend::name() const { return "uniform:" + std::to_string(vocab_); }

Turn UniformBackend::chat(const std::vector<Turn>& messages, const SamplingParams& params) {
  validate(params);
  validate_chat_messages(messages);
  Rng rng(sampling_seed(params, messages, unseeded_calls_));
  const double lp = -std::log(static_cast<double>(vocab_));
  Turn turn;
  turn.role = Role::assistant;
  std::vector<TokenLogprob> tl;
  for (int i = 0; i < params.max_tokens; ++i) {
    std::string tok = (i == 0 ? "t" : " t") + std::to_string(rng.below(vocab_));
    turn.text += tok;
    tl.push_back({tok, lp});
  }
  turn.token_logprobs = std::move(tl);
  return turn;
}

ScoredCompletion UniformBackend::score(const std::vector<Turn>& context,
                                       std::string_view completion) {
  ScoredCompletion sc;
  sc.tokens = mock_tokenize(completion);
  sc.logprobs.assign(sc.tokens.size(), -std::log(static_cast<double>(vocab_)));
  sc.probs.assign(sc.tokens.size(), 1.0 / static_cast<double>(vocab_));
  sc.context_fingerprint = context_fingerprint(context);
  return sc;
}

}  // namespace rlsta
