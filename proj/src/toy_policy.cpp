#include "rlsta/toy_policy.hpp"
#include "rlsta/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

namespace rlsta {

namespace toy {

namespace {
constexpr std::array<std::string_view, kVocab> kSymbols = {
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "SUM", "?", "=", "<u>", "<a>", "<e>", "<p>"};
}

std::string_view symbol(int id) {
  if (id < 0 || id >= kVocab) throw ValidationError("toy: token id out of range");
  return kSymbols[static_cast<std::size_t>(id)];
}

std::string surface(int id) {
  if (id == kEnd) return "";
  if (id < 10) return std::string(symbol(id));
  return " " + std::string(symbol(id));
}

std::vector<int> tokenize(std::string_view text) {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c >= '0' && c <= '9') {
      out.push_back(c - '0');
      ++i;
      continue;
    }
    bool matched = false;
    for (int id = 10; id < kVocab; ++id) {
      const auto s = kSymbols[static_cast<std::size_t>(id)];
      if (text.substr(i, s.size()) == s) {
        out.push_back(id);
        i += s.size();
        matched = true;
        break;
      }
    }
    if (!matched)
      throw ValidationError("toy: text outside the vocabulary: '" + std::string(text) + "'");
  }
  return out;
}

std::string render(const std::vector<int>& tokens) {
  std::string s;
  for (int t : tokens) s += surface(t);
  return s;
}

}  // namespace toy

namespace {
constexpr int kBits = 5;
}

ToyPolicy::ToyPolicy(int window) : window_(window), params_(toy::kVocab, 0.0) {
  if (window < 1 || window * kBits > 64) throw ValidationError("toy policy: window must be in [1, 12]");
}

ToyPolicy::Key ToyPolicy::empty_key() const {
  Key k = 0;
  for (int i = 0; i < window_; ++i) k = (k << kBits) | static_cast<Key>(toy::kPad);
  return k;
}

ToyPolicy::Key ToyPolicy::push(Key key, int token) const {
  const int bits = window_ * kBits;
  const Key mask = bits >= 64 ? ~Key{0} : ((Key{1} << bits) - 1);
  return ((key << kBits) | static_cast<Key>(token)) & mask;
}

ToyPolicy::Key ToyPolicy::key_of(const TokenContext& ctx) const {
  Key k = empty_key();
  const std::size_t start = ctx.size() > static_cast<std::size_t>(window_) ? ctx.size() - window_ : 0;
  for (std::size_t i = start; i < ctx.size(); ++i) k = push(k, ctx[i]);
  return k;
}

std::size_t ToyPolicy::row_of(Key key) const {
  auto it = rows_.find(key);
  return it == rows_.end() ? 0 : it->second;
}

std::size_t ToyPolicy::row_in(const std::vector<double>& theta, Key key) const {
  const auto r = row_of(key);
  // A vector saved before this row existed still holds the default there.
  return (r + 1) * toy::kVocab <= theta.size() ? r : 0;
}

std::size_t ToyPolicy::touch_key(Key key) {
  auto it = rows_.find(key);
  if (it != rows_.end()) return it->second;
  const std::size_t r = num_rows();
  params_.insert(params_.end(), params_.begin(), params_.begin() + toy::kVocab);
  rows_.emplace(key, r);
  return r;
}

void ToyPolicy::touch(const TokenContext& ctx) { touch_key(key_of(ctx)); }

void ToyPolicy::conform(std::vector<double>& theta) const {
  if (theta.size() < toy::kVocab || theta.size() % toy::kVocab != 0)
    throw ValidationError("toy policy: parameter vector has the wrong shape");
  while (theta.size() < params_.size())
    theta.insert(theta.end(), theta.begin(), theta.begin() + toy::kVocab);
}

void ToyPolicy::log_probs_key(const std::vector<double>& theta, Key key,
                              std::vector<double>& out) const {
  log_probs_row(theta, row_in(theta, key), out);
}

void ToyPolicy::log_probs_row(const std::vector<double>& theta, std::size_t r,
                              std::vector<double>& out) const {
  const double* z = theta.data() + r * toy::kVocab;
  double m = z[0];
  for (int v = 1; v < toy::kVocab; ++v) m = std::max(m, z[v]);
  double s = 0.0;
  for (int v = 0; v < toy::kVocab; ++v) s += std::exp(z[v] - m);
  const double lse = m + std::log(s);
  out.resize(toy::kVocab);
  for (int v = 0; v < toy::kVocab; ++v) out[v] = z[v] - lse;
}

void ToyPolicy::log_probs(const std::vector<double>& theta, const TokenContext& ctx,
                          std::vector<double>& out) const {
  log_probs_key(theta, key_of(ctx), out);
}

void ToyPolicy::add_log_prob_grad(const std::vector<double>& theta, const TokenContext& ctx,
                                  const std::vector<double>& coeff,
                                  std::vector<double>& grad) const {
  const Key key = key_of(ctx);
  const auto r = row_in(theta, key);
  std::vector<double> lp;
  log_probs_key(theta, key, lp);
  double total = 0.0;
  for (int v = 0; v < toy::kVocab; ++v) total += coeff[v];
  // d log p_v / d z_u = [u == v] - p_u
  double* g = grad.data() + r * toy::kVocab;
  for (int u = 0; u < toy::kVocab; ++u) g[u] += coeff[u] - std::exp(lp[u]) * total;
}

TokenContext ToyPolicy::encode_prompt(const std::vector<Turn>& history) const {
  TokenContext ctx;
  for (const auto& t : history) {
    if (t.role == Role::system) continue;
    ctx.push_back(t.role == Role::user ? toy::kUser : toy::kAssistant);
    for (int id : toy::tokenize(t.text))
      if (id != toy::kEnd) ctx.push_back(id);
  }
  if (!history.empty() && history.back().role == Role::user) ctx.push_back(toy::kAssistant);
  return ctx;
}

int ToyPolicy::token_id(std::string_view token) const {
  if (token.empty()) return toy::kEnd;
  auto ids = toy::tokenize(token);
  if (ids.size() != 1) throw ValidationError("toy: '" + std::string(token) + "' is not one token");
  return ids[0];
}

SampledResponse ToyPolicy::sample(Key key, double temperature, int max_tokens, Rng& rng) const {
  SampledResponse out;
  std::vector<double> lp, w(toy::kVocab);
  for (int t = 0; t < max_tokens; ++t) {
    log_probs_key(key, lp);
    int pick = 0;
    if (temperature == 0.0) {
      pick = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    } else {
      const double top = *std::max_element(lp.begin(), lp.end());
      for (int v = 0; v < toy::kVocab; ++v) w[v] = std::exp((lp[v] - top) / temperature);
      pick = static_cast<int>(rng.categorical(w));
    }
    out.tokens.push_back(pick);
    out.logprobs.push_back(lp[pick]);
    if (pick == toy::kEnd) break;
    out.text += toy::surface(pick);
    key = push(key, pick);
  }
  return out;
}

json ToyPolicy::to_json() const {
  std::vector<std::pair<std::size_t, Key>> order;
  for (const auto& [k, r] : rows_) order.emplace_back(r, k);
  std::sort(order.begin(), order.end());
  json keys = json::array();
  for (const auto& [r, k] : order) keys.push_back(k);
  return {{"window", window_}, {"row_keys", keys}, {"params", params_}};
}

ToyPolicy ToyPolicy::from_json(const json& j) {
  ToyPolicy p(j.at("window").get<int>());
  p.params_ = j.at("params").get<std::vector<double>>();
  const auto keys = j.at("row_keys").get<std::vector<Key>>();
  if (p.params_.size() != (keys.size() + 1) * toy::kVocab)
    throw ValidationError("toy policy: parameter count does not match row keys");
  for (std::size_t i = 0; i < keys.size(); ++i) p.rows_.emplace(keys[i], i + 1);
  return p;
}

ToyBackend::ToyBackend(const ToyPolicy& policy, int max_tokens, std::string label)
    : policy_(policy), max_tokens_(max_tokens), label_(std::move(label)) {
  if (max_tokens < 1) throw ValidationError("toy backend: max_tokens must be >= 1");
}

Turn ToyBackend::chat(const std::vector<Turn>& messages, const SamplingParams& params) {
  validate(params);
  validate_chat_messages(messages);
  const auto key = policy_.key_of(policy_.encode_prompt(messages));
  Rng rng(params.seed ? *params.seed : mix64(fnv1a64(context_fingerprint(messages))));
  auto r = policy_.sample(key, params.temperature, std::min(params.max_tokens, max_tokens_), rng);
  Turn t;
  t.role = Role::assistant;
  t.text = r.text;
  std::vector<TokenLogprob> tl;
  for (std::size_t i = 0; i < r.tokens.size(); ++i) tl.push_back({toy::surface(r.tokens[i]), r.logprobs[i]});
  t.token_logprobs = std::move(tl);
  return t;
}

ScoredCompletion ToyBackend::score(const std::vector<Turn>& context, std::string_view completion) {
  auto key = policy_.key_of(policy_.encode_prompt(context));
  auto ids = toy::tokenize(completion);
  ids.push_back(toy::kEnd);
  ScoredCompletion sc;
  std::vector<double> lp;
  for (int id : ids) {
    policy_.log_probs_key(key, lp);
    sc.tokens.push_back(toy::surface(id));
    sc.logprobs.push_back(lp[id]);
    key = policy_.push(key, id);
  }
  sc.context_fingerprint = context_fingerprint(context);
  return sc;
}

std::vector<Outcome> ToyBackend::enumerate_outcomes(const std::vector<Turn>& context) {
  // Distinct token sequences can share a text only through the end token, which is
  // never rendered; sequences are merged by text.
  std::vector<Outcome> out;
  std::unordered_map<std::string, std::size_t> index;
  std::function<void(ToyPolicy::Key, int, double, std::string)> walk =
      [&](ToyPolicy::Key key, int depth, double logp, std::string text) {
        if (depth == max_tokens_) {
          auto [it, fresh] = index.emplace(text, out.size());
          if (fresh) out.push_back({text, 0.0});
          out[it->second].probability += std::exp(logp);
          return;
        }
        std::vector<double> local;
        policy_.log_probs_key(key, local);
        for (int v = 0; v < toy::kVocab; ++v) {
          if (v == toy::kEnd) {
            auto [it, fresh] = index.emplace(text, out.size());
            if (fresh) out.push_back({text, 0.0});
            out[it->second].probability += std::exp(logp + local[v]);
          } else {
            walk(policy_.push(key, v), depth + 1, logp + local[v], text + toy::surface(v));
          }
        }
      };
  walk(policy_.key_of(policy_.encode_prompt(context)), 0, 0.0, "");
  return out;
}

}  // namespace rlsta
