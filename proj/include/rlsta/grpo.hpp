#pragma once

#include <string>
#include <vector>

#include "rlsta/group.hpp"
#include "rlsta/policy.hpp"

namespace rlsta {

enum class KlEstimator { k3, exact };

std::string to_string(KlEstimator e);
KlEstimator kl_estimator_from_string(const std::string& s);

struct ObjectiveConfig {
  double clip_eps = 0.2;
  double kl_coef = 1e-4;
  KlEstimator kl_estimator = KlEstimator::k3;
};

void validate(const ObjectiveConfig& cfg);

// One sampled response in policy token space.
struct PolicySample {
  TokenContext prompt;
  std::vector<int> tokens;
  std::vector<double> old_logprobs;  // log pi_old per token, as stored at sampling time
  double advantage = 0.0;
};

// Maps a scored group onto policy tokens. Needs rewards (advantages) and stored
// sampler logprobs on every sample.
std::vector<PolicySample> prepare_group(const RolloutGroup& group, DifferentiablePolicy& policy);

struct ObjectiveValue {
  double objective = 0.0;
  double mean_kl = 0.0;        // per token
  double clip_fraction = 0.0;  // tokens where the clipped branch is active
  std::size_t tokens = 0;
};

// J = sum_i 1/|m_i| sum_t ( min(r A, clip(r, 1-eps, 1+eps) A) - beta kl_t ).
ObjectiveValue objective(const DifferentiablePolicy& policy, const std::vector<PolicySample>& group,
                         const std::vector<double>& theta, const std::vector<double>& theta_ref,
                         const ObjectiveConfig& cfg);

// Same value plus dJ/dtheta (clip/min selector treated as piecewise constant),
// accumulated into grad (sized policy.num_params()).
ObjectiveValue objective_and_gradient(const DifferentiablePolicy& policy,
                                      const std::vector<PolicySample>& group,
                                      const std::vector<double>& theta,
                                      const std::vector<double>& theta_ref,
                                      const ObjectiveConfig& cfg, std::vector<double>& grad);

struct StepMetrics {
  double objective = 0.0;  // mean over groups, before the update
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

// theta <- theta + lr * mean over groups of dJ/dtheta.
StepMetrics train_step(DifferentiablePolicy& policy, const std::vector<std::vector<PolicySample>>& batch,
                       const std::vector<double>& theta_ref, double learning_rate,
                       const ObjectiveConfig& cfg, double mean_reward = 0.0);

}  // namespace rlsta
