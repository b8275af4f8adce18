#pragma once

#include "deconf/model.hpp"

#include <cstddef>

namespace deconf {

/// Objective value and its gradient with respect to every logit.
struct ElboResult {
  double value = 0.0;
  LogitTensors gradient;
};

/// Online objective at step t:
///   E_q[log p(s_{t+1} | s_t, a_t, z)] - beta * KL(q || p(z)),
/// where q is the exact interventional posterior of the model given the prefix up to s_t.
/// Expectation and KL are exact sums over latents; gradients flow through q as well.
ElboResult elbo_online(const CategoricalLatentModel& model, const Trajectory& trajectory, std::size_t t,
                       double beta);

/// Sum of the online objective over every step of the trajectory.
ElboResult elbo_online_episode(const CategoricalLatentModel& model, const Trajectory& trajectory, double beta);

/// Whole-trajectory objective:
///   E_q[sum_t log p(s_{t+1}|s_t,a_t,z) + log pi(a_t|s_t,z)] - beta * KL(q || p(z)),
/// with q the exact conditional posterior (transitions and actions as evidence).
ElboResult elbo_offline(const CategoricalLatentModel& model, const Trajectory& trajectory, double beta);

// Accumulating variants used by the training loops. `log_grad` receives gradients with
// respect to log-probabilities; convert once per batch with `log_prob_grad_to_logit_grad`.
double accumulate_elbo_online(const ModelLogTables& tables, const Trajectory& trajectory, double beta,
                              LogitTensors& log_grad);
/// `policy_nll`, when given, receives -E_q[sum_t log pi(a_t|s_t,z)].
double accumulate_elbo_offline(const ModelLogTables& tables, const Trajectory& trajectory, double beta,
                               LogitTensors& log_grad, double* policy_nll = nullptr);

/// Posterior of the model given a full trajectory. Uses the precomputed log tables.
Vector model_posterior(const ModelLogTables& tables, const Trajectory& trajectory, EvidenceMode mode);

}  // namespace deconf
