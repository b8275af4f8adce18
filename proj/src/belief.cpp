#include "deconf/belief.hpp"

#include "deconf/math.hpp"

#include <cmath>
#include <limits>

namespace deconf {
namespace {

constexpr double kLogNormTolerance = 1e-10;

void require_policy(EvidenceMode mode, const ExpertSpec* policy, const MdpFamilySpec& dynamics) {
  if (mode != EvidenceMode::kConditional) return;
  if (policy == nullptr) throw Error(ErrorKind::kUsage, "conditional belief update requires a policy table");
  if (policy->num_latents != dynamics.num_latents || policy->num_states != dynamics.num_states ||
      policy->num_actions != dynamics.num_actions)
    throw Error(ErrorKind::kValidation, "policy table dimensions do not match the dynamics");
}

}  // namespace

const char* to_string(EvidenceMode mode) {
  return mode == EvidenceMode::kInterventional ? "interventional" : "conditional";
}

Belief::Belief(Vector log_probs) : log_probs_(std::move(log_probs)), log_weights_(log_probs_) {
  if (log_probs_.size() == 0) throw Error(ErrorKind::kValidation, "belief over an empty latent set");
  for (Index i = 0; i < log_probs_.size(); ++i)
    if (std::isnan(log_probs_(i)) || log_probs_(i) == std::numeric_limits<double>::infinity())
      throw Error(ErrorKind::kValidation, "belief entries must be finite or -inf");
  const double lse = log_sum_exp(log_probs_);
  log_evidence_ = lse;
  if (!(std::abs(lse) <= kLogNormTolerance))
    throw Error(ErrorKind::kValidation, "belief is not normalized (log-sum-exp = " + std::to_string(lse) + ")");
}

Belief Belief::from_log_weights(Vector log_weights) {
  const double lse = log_sum_exp(log_weights);
  if (std::isnan(lse)) throw Error(ErrorKind::kNumerical, "belief weights contain NaN");
  if (lse == -std::numeric_limits<double>::infinity())
    throw ImpossibleEvidence("evidence has zero likelihood under every latent");
  Belief b;
  b.log_probs_ = (log_weights.array() - lse).matrix();
  b.log_weights_ = std::move(log_weights);
  b.log_evidence_ = lse;
  return b;
}

Belief prior_belief(const Vector& latent_prior) {
  if (latent_prior.size() == 0) throw Error(ErrorKind::kValidation, "empty latent prior");
  if ((latent_prior.array() < 0.0).any() || std::abs(latent_prior.sum() - 1.0) > 1e-12)
    throw Error(ErrorKind::kValidation, "latent prior is not a normalized probability vector");
  return Belief(latent_prior.array().log().matrix());
}

void accumulate_evidence(Vector& log_weights, StateId s, ActionId a, StateId s_next,
                         const MdpFamilySpec& dynamics, EvidenceMode mode, const ExpertSpec* policy) {
  check_bounds(dynamics, s, a, s_next);
  require_policy(mode, policy, dynamics);
  if (log_weights.size() != dynamics.num_latents)
    throw Error(ErrorKind::kValidation, "belief size does not match the number of latents");
  for (LatentId k = 0; k < dynamics.num_latents; ++k) {
    log_weights(k) += std::log(dynamics.transitions(dynamics.transition_row(k, s, a), s_next));
    if (mode == EvidenceMode::kConditional) log_weights(k) += std::log(policy->policy(policy->row(k, s), a));
  }
}

Belief update(const Belief& belief, StateId s, ActionId a, StateId s_next, const MdpFamilySpec& dynamics,
              EvidenceMode mode, const ExpertSpec* policy) {
  Vector w = belief.log_weights();
  accumulate_evidence(w, s, a, s_next, dynamics, mode, policy);
  return Belief::from_log_weights(std::move(w));
}

Belief batch_posterior(const Vector& latent_prior, const Trajectory& trajectory, const MdpFamilySpec& dynamics,
                       EvidenceMode mode, const ExpertSpec* policy) {
  Vector w = prior_belief(latent_prior).log_probs();
  for (std::size_t t = 0; t < trajectory.length(); ++t) {
    const Step& step = trajectory.steps[t];
    accumulate_evidence(w, trajectory.state_at(t), step.action, step.next_state, dynamics, mode, policy);
  }
  return Belief::from_log_weights(std::move(w));
}

BeliefDiagnostics belief_diagnostics(const Belief& belief) {
  const Vector p = belief.probabilities();
  BeliefDiagnostics d;
  d.entropy = entropy(p);
  Index arg = 0;
  for (Index i = 1; i < p.size(); ++i)
    if (belief.log_probs()(i) > belief.log_probs()(arg)) arg = i;
  d.argmax = static_cast<LatentId>(arg);
  d.max_prob = p(arg);
  return d;
}

}  // namespace deconf
