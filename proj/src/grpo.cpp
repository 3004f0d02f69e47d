#include "rlsta/grpo.hpp"
#include "rlsta/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rlsta {

std::string to_string(KlEstimator e) { return e == KlEstimator::k3 ? "k3" : "exact"; }

KlEstimator kl_estimator_from_string(const std::string& s) {
  if (s == "k3") return KlEstimator::k3;
  if (s == "exact") return KlEstimator::exact;
  throw ValidationError("unknown KL estimator '" + s + "'");
}

void validate(const ObjectiveConfig& cfg) {
  if (!(cfg.clip_eps > 0.0)) throw ValidationError("clip_eps must be > 0");
  if (!(cfg.kl_coef >= 0.0)) throw ValidationError("kl_coef must be >= 0");
}

std::vector<PolicySample> prepare_group(const RolloutGroup& group, DifferentiablePolicy& policy) {
  if (group.rewards.size() != group.samples.size())
    throw ValidationError("group " + group.problem_id + ": advantages have not been computed");
  const TokenContext prompt = policy.encode_prompt(group.history);
  std::vector<PolicySample> out;
  for (std::size_t i = 0; i < group.samples.size(); ++i) {
    const auto& s = group.samples[i];
    if (s.token_logprobs.empty())
      throw ValidationError("group " + group.problem_id + " sample " + std::to_string(i) +
                            ": no stored sampler logprobs, importance ratios are undefined");
    PolicySample ps;
    ps.prompt = prompt;
    ps.advantage = group.rewards[i].advantage;
    TokenContext ctx = prompt;
    for (const auto& t : s.token_logprobs) {
      policy.touch(ctx);
      const int id = policy.token_id(t.token);
      ps.tokens.push_back(id);
      ps.old_logprobs.push_back(t.logprob);
      policy.append(ctx, id);
    }
    out.push_back(std::move(ps));
  }
  return out;
}

namespace {

const std::vector<double>& conformed(const DifferentiablePolicy& policy,
                                     const std::vector<double>& theta, std::vector<double>& tmp) {
  if (theta.size() == policy.num_params()) return theta;
  tmp = theta;
  policy.conform(tmp);
  return tmp;
}

ObjectiveValue evaluate(const DifferentiablePolicy& policy, const std::vector<PolicySample>& group,
                        const std::vector<double>& theta_in,
                        const std::vector<double>& theta_ref_in, const ObjectiveConfig& cfg,
                        std::vector<double>* grad) {
  validate(cfg);
  std::vector<double> tmp_a, tmp_b;
  const auto& theta = conformed(policy, theta_in, tmp_a);
  const auto& theta_ref = conformed(policy, theta_ref_in, tmp_b);
  if (grad && grad->size() != policy.num_params()) grad->resize(policy.num_params(), 0.0);

  const int V = policy.vocab_size();
  std::vector<double> lp(V), lq(V), coeff(V);
  ObjectiveValue val;
  double kl_sum = 0.0;
  std::size_t clipped = 0;

  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& s = group[i];
    if (s.tokens.empty()) throw ValidationError("objective: empty completion");
    if (s.old_logprobs.size() != s.tokens.size())
      throw ValidationError("objective: stored sampler logprobs missing");
    const double inv_len = 1.0 / static_cast<double>(s.tokens.size());
    const double A = s.advantage;
    TokenContext ctx = s.prompt;
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      const int tok = s.tokens[t];
      policy.log_probs(theta, ctx, lp);
      const double ratio = std::exp(lp[tok] - s.old_logprobs[t]);
      const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
      const double unclipped_term = ratio * A;
      const double clipped_term = clipped_ratio * A;
      const bool use_clipped = clipped_term < unclipped_term;
      if (use_clipped) ++clipped;
      const double surrogate = use_clipped ? clipped_term : unclipped_term;

      double kl = 0.0;
      policy.log_probs(theta_ref, ctx, lq);
      if (cfg.kl_estimator == KlEstimator::k3) {
        const double log_rho = lq[tok] - lp[tok];
        kl = std::exp(log_rho) - log_rho - 1.0;
      } else {
        for (int v = 0; v < V; ++v) {
          const double p = std::exp(lp[v]);
          if (p > 0.0) kl += p * (lp[v] - lq[v]);
        }
      }
      kl_sum += kl;
      val.objective += inv_len * (surrogate - cfg.kl_coef * kl);

      if (grad) {
        std::fill(coeff.begin(), coeff.end(), 0.0);
        // d/dtheta of r*A is r*A*dlogpi; the clipped branch is flat.
        if (!use_clipped) coeff[tok] += inv_len * A * ratio;
        if (cfg.kl_coef > 0.0) {
          if (cfg.kl_estimator == KlEstimator::k3) {
            // d kl / d logpi = 1 - pi_ref/pi
            coeff[tok] -= inv_len * cfg.kl_coef * (1.0 - std::exp(lq[tok] - lp[tok]));
          } else {
            for (int v = 0; v < V; ++v) {
              const double p = std::exp(lp[v]);
              coeff[v] -= inv_len * cfg.kl_coef * p * (lp[v] - lq[v]);
            }
          }
        }
        policy.add_log_prob_grad(theta, ctx, coeff, *grad);
      }
      policy.append(ctx, tok);
      ++val.tokens;
    }
  }
  if (val.tokens > 0) {
    val.mean_kl = kl_sum / static_cast<double>(val.tokens);
    val.clip_fraction = static_cast<double>(clipped) / static_cast<double>(val.tokens);
  }
  return val;
}

}  // namespace

ObjectiveValue objective(const DifferentiablePolicy& policy, const std::vector<PolicySample>& group,
                         const std::vector<double>& theta, const std::vector<double>& theta_ref,
                         const ObjectiveConfig& cfg) {
  return evaluate(policy, group, theta, theta_ref, cfg, nullptr);
}

ObjectiveValue objective_and_gradient(const DifferentiablePolicy& policy,
                                      const std::vector<PolicySample>& group,
                                      const std::vector<double>& theta,
                                      const std::vector<double>& theta_ref,
                                      const ObjectiveConfig& cfg, std::vector<double>& grad) {
  return evaluate(policy, group, theta, theta_ref, cfg, &grad);
}

StepMetrics train_step(DifferentiablePolicy& policy,
                       const std::vector<std::vector<PolicySample>>& batch,
                       const std::vector<double>& theta_ref, double learning_rate,
                       const ObjectiveConfig& cfg, double mean_reward) {
  if (batch.empty()) throw ValidationError("train_step: empty batch");
  for (const auto& g : batch)
    for (const auto& s : g) {
      TokenContext ctx = s.prompt;
      for (int tok : s.tokens) {
        policy.touch(ctx);
        policy.append(ctx, tok);
      }
    }
  auto& theta = policy.mutable_params();
  policy.conform(theta);
  std::vector<double> grad(policy.num_params(), 0.0);
  StepMetrics m;
  m.mean_reward = mean_reward;
  for (const auto& g : batch) {
    auto v = objective_and_gradient(policy, g, theta, theta_ref, cfg, grad);
    m.objective += v.objective;
    m.mean_kl += v.mean_kl;
    m.clip_fraction += v.clip_fraction;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  m.objective *= inv;
  m.mean_kl *= inv;
  m.clip_fraction *= inv;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] *= inv;
    if (!std::isfinite(grad[i])) {
      std::ostringstream diag;
      diag << "param " << i << " grad " << grad[i] << " objective " << m.objective << " kl "
           << m.mean_kl << " lr " << learning_rate;
      throw NumericalError("non-finite gradient", diag.str());
    }
    norm2 += grad[i] * grad[i];
  }
  m.grad_norm = std::sqrt(norm2);
  for (std::size_t i = 0; i < grad.size(); ++i) theta[i] += learning_rate * grad[i];
  return m;
}

}  // namespace rlsta
