#pragma once

#include "deconf/belief.hpp"
#include "deconf/env.hpp"
#include "deconf/oracle.hpp"

#include <json.hpp>

#include <memory>
#include <vector>

namespace deconf {

/// Logit tensors of the latent-variable model. Also used for gradients of the same shape.
///
/// `dynamics` rows are indexed `(latent * S + state) * A + action` (logits over next
/// states); `policy` rows are indexed `latent * S + state` (logits over actions).
struct LogitTensors {
  Vector prior;
  Matrix dynamics;
  Matrix policy;

  static LogitTensors zeros(int num_latents, int num_states, int num_actions);

  LogitTensors& operator+=(const LogitTensors& other);
  bool all_finite() const;
};

/// Learnable categorical-latent model: prior p(z), dynamics p(s'|s,a,z), policy pi(a|s,z).
struct CategoricalLatentModel {
  int num_latents = 0;
  int num_states = 0;
  int num_actions = 0;
  LogitTensors logits;

  /// Logits drawn uniformly from [-scale, scale].
  static CategoricalLatentModel random(int num_latents, int num_states, int num_actions, Rng& rng,
                                       double scale = 0.01);
  /// Logits equal to log-probabilities of the given tables (all entries must be positive).
  static CategoricalLatentModel from_tables(const ConfoundedMdp& tables);

  Index dynamics_row(LatentId z, StateId s, ActionId a) const {
    return (static_cast<Index>(z) * num_states + s) * num_actions + a;
  }
  Index policy_row(LatentId z, StateId s) const { return static_cast<Index>(z) * num_states + s; }

  /// Softmax of every row. The initial-state table is copied from `initial_dist`
  /// (one row per latent, or a single row shared by all latents).
  ConfoundedMdp to_tables(const Matrix& initial_dist) const;
};

/// Log-softmax of every logit row, computed once per parameter update.
struct ModelLogTables {
  explicit ModelLogTables(const CategoricalLatentModel& model);

  int num_latents, num_states, num_actions;
  Vector log_prior;
  Vector prior;
  Matrix log_dynamics;
  Matrix dynamics;
  Matrix log_policy;
  Matrix policy;
};

/// Converts gradients w.r.t. log-probabilities into gradients w.r.t. logits, row by row:
/// g_logit = g - p * sum(g).
void log_prob_grad_to_logit_grad(const ModelLogTables& tables, LogitTensors& grad);

/// A learned imitator ready to act: tables plus the evidence mode its belief uses.
struct ImitatorPolicy {
  std::shared_ptr<const ConfoundedMdp> tables;
  EvidenceMode mode = EvidenceMode::kInterventional;

  AgentFactory factory(ActorStyle style = ActorStyle::kPosteriorSampling) const;
  HistoryPolicy history_policy() const;
};

nlohmann::json logits_to_json(const CategoricalLatentModel& model);
CategoricalLatentModel logits_from_json(const nlohmann::json& j);

}  // namespace deconf
