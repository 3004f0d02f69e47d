#pragma once

#include <string_view>
#include <vector>

#include "rlsta/conversation.hpp"

namespace rlsta {

using TokenContext = std::vector<int>;

// A policy with an explicit parameter vector whose next-token log-probabilities and
// their gradients can be evaluated at any parameter vector with the current layout.
class DifferentiablePolicy {
 public:
  virtual ~DifferentiablePolicy() = default;

  virtual int vocab_size() const = 0;
  virtual std::size_t num_params() const = 0;
  virtual const std::vector<double>& params() const = 0;
  virtual std::vector<double>& mutable_params() = 0;

  virtual TokenContext encode_prompt(const std::vector<Turn>& history) const = 0;
  // Throws ValidationError for a token outside the vocabulary.
  virtual int token_id(std::string_view token) const = 0;
  virtual void append(TokenContext& ctx, int token) const { ctx.push_back(token); }

  // Makes sure parameters exist for ctx; the layout may grow.
  virtual void touch(const TokenContext& ctx) = 0;
  // Grows a parameter vector saved under an older layout to the current one.
  virtual void conform(std::vector<double>& theta) const = 0;

  // out[v] = log pi_theta(v | ctx)
  virtual void log_probs(const std::vector<double>& theta, const TokenContext& ctx,
                         std::vector<double>& out) const = 0;
  // grad += sum_v coeff[v] * d log pi_theta(v | ctx) / d theta
  virtual void add_log_prob_grad(const std::vector<double>& theta, const TokenContext& ctx,
                                 const std::vector<double>& coeff,
                                 std::vector<double>& grad) const = 0;
};

}  // namespace rlsta
