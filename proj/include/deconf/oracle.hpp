#pragma once

#include "deconf/belief.hpp"
#include "deconf/env.hpp"

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace deconf {

struct ExpertKind {
  LatentId latent = 0;
};
struct ConditionalKind {};
struct InterventionalKind {};

/// expert(latent) | conditional | interventional.
using OraclePolicyKind = std::variant<ExpertKind, ConditionalKind, InterventionalKind>;

/// How a belief-tracking agent turns its belief into an action: draw from the exact
/// mixture, or sample a latent first and then act as that latent's expert.
enum class ActorStyle { kMarginal, kPosteriorSampling };

/// Per-step record of an agent's decision.
struct TraceStep {
  std::optional<Vector> belief;  // probabilities before acting
  std::optional<LatentId> sampled_latent;
  Vector action_dist;
  ActionId action = 0;
  StateId state = 0;
};

struct PolicyTrace {
  LatentId latent = 0;
  std::vector<TraceStep> steps;
};

/// Row pi_exp(.|s, latent).
Vector expert_action_dist(const ExpertSpec& expert, StateId s, LatentId latent);

/// sum_k b(k) pi_exp(.|s, k).
Vector mixture_action_dist(const Belief& belief, const ExpertSpec& expert, StateId s);

/// Exact marginal policy after `history` (ending at the current state).
Vector act_exact(const ConfoundedMdp& model, const Trajectory& history, EvidenceMode mode);
Vector act_conditional(const ConfoundedMdp& model, const Trajectory& history);
Vector act_interventional(const ConfoundedMdp& model, const Trajectory& history);

/// Belief-tracking agent over arbitrary (possibly learned) tables. Updates its belief
/// with `update` in the given mode after every observed transition.
class BeliefAgent final : public Agent {
 public:
  BeliefAgent(std::shared_ptr<const ConfoundedMdp> model, EvidenceMode mode, ActorStyle style,
              std::uint64_t seed);

  void begin_episode(StateId s0) override;
  Vector action_distribution(StateId s) const override;
  ActionChoice act(StateId s) override;
  void observe(StateId s, ActionId a, StateId s_next) override;
  std::optional<Vector> belief_probabilities() const override { return belief_.probabilities(); }

  const Belief& belief() const { return belief_; }

 private:
  std::shared_ptr<const ConfoundedMdp> model_;
  EvidenceMode mode_;
  ActorStyle style_;
  Belief belief_;
};

/// The latent-aware expert for the episode's true latent.
class ExpertAgent final : public Agent {
 public:
  ExpertAgent(std::shared_ptr<const ExpertSpec> expert, LatentId latent, std::uint64_t seed);
  void begin_episode(StateId) override {}
  Vector action_distribution(StateId s) const override;
  void observe(StateId, ActionId, StateId) override {}

 private:
  std::shared_ptr<const ExpertSpec> expert_;
  LatentId latent_;
};

/// Thompson-style actor: sample a latent from the belief, play that latent's expert,
/// fold the observed transition into the belief.
std::unique_ptr<BeliefAgent> posterior_sampling_actor(std::shared_ptr<const ConfoundedMdp> model, EvidenceMode mode,
                                                      std::uint64_t seed);

AgentFactory make_belief_factory(std::shared_ptr<const ConfoundedMdp> model, EvidenceMode mode, ActorStyle style);

AgentFactory make_oracle_factory(const OraclePolicyKind& kind, std::shared_ptr<const ConfoundedMdp> truth,
                                 ActorStyle style = ActorStyle::kPosteriorSampling);

/// Plays the expert for the episode's true latent (reads `EpisodeContext::latent`).
AgentFactory make_expert_factory(std::shared_ptr<const ExpertSpec> expert);

std::string to_string(const OraclePolicyKind& kind);

}  // namespace deconf
