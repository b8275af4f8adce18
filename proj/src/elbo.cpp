#include "deconf/elbo.hpp"

#include "deconf/math.hpp"

#include <vector>

namespace deconf {
namespace {

void check_trajectory(const ModelLogTables& t, const Trajectory& trajectory) {
  auto bad_state = [&](StateId s) { return s < 0 || s >= t.num_states; };
  if (bad_state(trajectory.initial_state)) throw Error(ErrorKind::kValidation, "trajectory state out of bounds");
  for (const Step& step : trajectory.steps)
    if (bad_state(step.next_state) || step.action < 0 || step.action >= t.num_actions)
      throw Error(ErrorKind::kValidation, "trajectory step out of bounds");
}

Index dyn_row(const ModelLogTables& t, LatentId z, StateId s, ActionId a) {
  return (static_cast<Index>(z) * t.num_states + s) * t.num_actions + a;
}
Index pol_row(const ModelLogTables& t, LatentId z, StateId s) { return static_cast<Index>(z) * t.num_states + s; }

/// Value and centered sensitivity of J = q.c_direct - beta KL(q || p) with q = softmax(L).
/// `recon` is the per-latent term multiplied by q. Returns J; fills delta = dJ/dL through q.
double kl_regularized_expectation(const Vector& L, const Vector& recon, const Vector& log_prior, double beta,
                                  Vector& q, Vector& delta) {
  const double lse = log_sum_exp(L);
  const Vector log_q = (L.array() - lse).matrix();
  q = exp_exact(log_q);
  Vector c(L.size());
  double value = 0.0;
  for (Index k = 0; k < L.size(); ++k) {
    if (q(k) == 0.0) {
      c(k) = 0.0;
      continue;
    }
    const double log_ratio = log_q(k) - log_prior(k);
    c(k) = recon(k) - beta * log_ratio;
    value += q(k) * c(k);
  }
  delta = (q.array() * (c.array() - value)).matrix();
  return value;
}

}  // namespace

Vector model_posterior(const ModelLogTables& t, const Trajectory& trajectory, EvidenceMode mode) {
  check_trajectory(t, trajectory);
  Vector L = t.log_prior;
  for (std::size_t u = 0; u < trajectory.length(); ++u) {
    const StateId s = trajectory.state_at(u);
    const Step& step = trajectory.steps[u];
    for (LatentId z = 0; z < t.num_latents; ++z) {
      L(z) += t.log_dynamics(dyn_row(t, z, s, step.action), step.next_state);
      if (mode == EvidenceMode::kConditional) L(z) += t.log_policy(pol_row(t, z, s), step.action);
    }
  }
  L.array() -= log_sum_exp(L);
  return exp_exact(L);
}

double accumulate_elbo_online(const ModelLogTables& t, const Trajectory& trajectory, double beta,
                              LogitTensors& log_grad) {
  check_trajectory(t, trajectory);
  const std::size_t H = trajectory.length();
  const int K = t.num_latents;
  std::vector<Vector> deltas(H);
  Vector L = t.log_prior;
  Vector ell(K), q, delta;
  Vector prior_grad = Vector::Zero(K);
  double total = 0.0;

  for (std::size_t u = 0; u < H; ++u) {
    const StateId s = trajectory.state_at(u);
    const Step& step = trajectory.steps[u];
    for (LatentId z = 0; z < K; ++z) ell(z) = t.log_dynamics(dyn_row(t, z, s, step.action), step.next_state);
    total += kl_regularized_expectation(L, ell, t.log_prior, beta, q, delta);
    for (LatentId z = 0; z < K; ++z) log_grad.dynamics(dyn_row(t, z, s, step.action), step.next_state) += q(z);
    prior_grad += beta * q + delta;
    deltas[u] = delta;
    L += ell;
  }
  // Step u's likelihood enters the posterior of every later step.
  Vector suffix = Vector::Zero(K);
  for (std::size_t u = H; u-- > 0;) {
    const StateId s = trajectory.state_at(u);
    const Step& step = trajectory.steps[u];
    for (LatentId z = 0; z < K; ++z) log_grad.dynamics(dyn_row(t, z, s, step.action), step.next_state) += suffix(z);
    suffix += deltas[u];
  }
  log_grad.prior += prior_grad;
  return total;
}

double accumulate_elbo_offline(const ModelLogTables& t, const Trajectory& trajectory, double beta,
                               LogitTensors& log_grad, double* policy_nll) {
  check_trajectory(t, trajectory);
  const int K = t.num_latents;
  Vector dyn_ll = Vector::Zero(K);
  Vector pol_ll = Vector::Zero(K);
  for (std::size_t u = 0; u < trajectory.length(); ++u) {
    const StateId s = trajectory.state_at(u);
    const Step& step = trajectory.steps[u];
    for (LatentId z = 0; z < K; ++z) {
      dyn_ll(z) += t.log_dynamics(dyn_row(t, z, s, step.action), step.next_state);
      pol_ll(z) += t.log_policy(pol_row(t, z, s), step.action);
    }
  }
  const Vector recon = dyn_ll + pol_ll;
  const Vector L = t.log_prior + recon;
  Vector q, delta;
  const double value = kl_regularized_expectation(L, recon, t.log_prior, beta, q, delta);
  if (policy_nll != nullptr) *policy_nll = -q.dot(pol_ll);
  const Vector weight = q + delta;
  for (std::size_t u = 0; u < trajectory.length(); ++u) {
    const StateId s = trajectory.state_at(u);
    const Step& step = trajectory.steps[u];
    for (LatentId z = 0; z < K; ++z) {
      log_grad.dynamics(dyn_row(t, z, s, step.action), step.next_state) += weight(z);
      log_grad.policy(pol_row(t, z, s), step.action) += weight(z);
    }
  }
  log_grad.prior += beta * q + delta;
  return value;
}

ElboResult elbo_online(const CategoricalLatentModel& model, const Trajectory& trajectory, std::size_t t_step,
                       double beta) {
  if (t_step >= trajectory.length())
    throw Error(ErrorKind::kValidation, "elbo_online: step index must be smaller than the trajectory length");
  const ModelLogTables t(model);
  check_trajectory(t, trajectory);
  const int K = t.num_latents;
  ElboResult result{0.0, LogitTensors::zeros(K, t.num_states, t.num_actions)};
  Vector L = t.log_prior;
  for (std::size_t u = 0; u < t_step; ++u) {
    const StateId s = trajectory.state_at(u);
    const Step& step = trajectory.steps[u];
    for (LatentId z = 0; z < K; ++z) L(z) += t.log_dynamics(dyn_row(t, z, s, step.action), step.next_state);
  }
  const StateId s = trajectory.state_at(t_step);
  const Step& step = trajectory.steps[t_step];
  Vector ell(K), q, delta;
  for (LatentId z = 0; z < K; ++z) ell(z) = t.log_dynamics(dyn_row(t, z, s, step.action), step.next_state);
  result.value = kl_regularized_expectation(L, ell, t.log_prior, beta, q, delta);

  auto& g = result.gradient;
  for (LatentId z = 0; z < K; ++z) g.dynamics(dyn_row(t, z, s, step.action), step.next_state) += q(z);
  for (std::size_t u = 0; u < t_step; ++u) {
    const StateId su = trajectory.state_at(u);
    const Step& stu = trajectory.steps[u];
    for (LatentId z = 0; z < K; ++z) g.dynamics(dyn_row(t, z, su, stu.action), stu.next_state) += delta(z);
  }
  g.prior = beta * q + delta;
  log_prob_grad_to_logit_grad(t, g);
  return result;
}

ElboResult elbo_online_episode(const CategoricalLatentModel& model, const Trajectory& trajectory, double beta) {
  const ModelLogTables t(model);
  ElboResult result{0.0, LogitTensors::zeros(t.num_latents, t.num_states, t.num_actions)};
  result.value = accumulate_elbo_online(t, trajectory, beta, result.gradient);
  log_prob_grad_to_logit_grad(t, result.gradient);
  return result;
}

ElboResult elbo_offline(const CategoricalLatentModel& model, const Trajectory& trajectory, double beta) {
  if (trajectory.length() == 0) throw Error(ErrorKind::kValidation, "elbo_offline: trajectory is empty");
  const ModelLogTables t(model);
  ElboResult result{0.0, LogitTensors::zeros(t.num_latents, t.num_states, t.num_actions)};
  result.value = accumulate_elbo_offline(t, trajectory, beta, result.gradient);
  log_prob_grad_to_logit_grad(t, result.gradient);
  return result;
}

}  // namespace deconf
