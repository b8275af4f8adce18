#pragma once

#include "deconf/common.hpp"
#include "deconf/env.hpp"
#include "deconf/math.hpp"

namespace deconf {

/// Which evidence enters the posterior. Interventional treats past actions as
/// interventions and only scores transitions; conditional also scores the actions
/// under the expert policy.
enum class EvidenceMode { kInterventional, kConditional };

const char* to_string(EvidenceMode mode);

/// Normalized log-probabilities over latent categories.
///
/// Also keeps the unnormalized log-weights it was built from. Updates add evidence to
/// those, so a chain of single-step updates performs the same additions as one batch pass
/// and does not accumulate renormalization rounding.
class Belief {
 public:
  /// Validates that log-sum-exp of `log_probs` is 0 within 1e-10.
  explicit Belief(Vector log_probs);

  const Vector& log_probs() const { return log_probs_; }
  /// Unnormalized log-weights; `log_probs` is these minus their log-sum-exp.
  const Vector& log_weights() const { return log_weights_; }
  /// log-sum-exp of `log_weights`: the log-likelihood of the evidence so far.
  double log_evidence() const { return log_evidence_; }
  Vector probabilities() const { return exp_exact(log_probs_); }
  Index size() const { return log_probs_.size(); }

  /// Normalizes arbitrary log-weights. Throws ImpossibleEvidence if all are -inf.
  static Belief from_log_weights(Vector log_weights);

 private:
  Belief() = default;

  Vector log_probs_;
  Vector log_weights_;
  double log_evidence_ = 0.0;
};

Belief prior_belief(const Vector& latent_prior);

/// Adds log p(s'|s,a,latent) (and log pi(a|s,latent) in conditional mode) for every latent.
void accumulate_evidence(Vector& log_weights, StateId s, ActionId a, StateId s_next,
                         const MdpFamilySpec& dynamics, EvidenceMode mode, const ExpertSpec* policy);

/// One Bayes step followed by renormalization.
Belief update(const Belief& belief, StateId s, ActionId a, StateId s_next, const MdpFamilySpec& dynamics,
              EvidenceMode mode, const ExpertSpec* policy = nullptr);

/// Posterior after the whole trajectory: log-likelihoods are summed in one pass and
/// normalized once.
Belief batch_posterior(const Vector& latent_prior, const Trajectory& trajectory, const MdpFamilySpec& dynamics,
                       EvidenceMode mode, const ExpertSpec* policy = nullptr);

struct BeliefDiagnostics {
  double entropy = 0.0;
  double max_prob = 0.0;
  LatentId argmax = 0;
};

/// Entropy in nats, largest probability and its latent (ties go to the smallest id).
BeliefDiagnostics belief_diagnostics(const Belief& belief);

}  // namespace deconf
