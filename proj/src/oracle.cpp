#include "deconf/oracle.hpp"

#include <sstream>

namespace deconf {

Vector expert_action_dist(const ExpertSpec& expert, StateId s, LatentId latent) {
  if (latent < 0 || latent >= expert.num_latents || s < 0 || s >= expert.num_states) {
    std::ostringstream msg;
    msg << "expert query (s=" << s << ", latent=" << latent << ") out of bounds";
    throw Error(ErrorKind::kValidation, msg.str());
  }
  return expert.action_dist(latent, s).transpose();
}

Vector mixture_action_dist(const Belief& belief, const ExpertSpec& expert, StateId s) {
  if (belief.size() != expert.num_latents)
    throw Error(ErrorKind::kValidation, "belief and expert disagree on the number of latents");
  if (s < 0 || s >= expert.num_states) throw Error(ErrorKind::kValidation, "state out of bounds");
  Vector dist = Vector::Zero(expert.num_actions);
  const Vector b = belief.probabilities();
  for (LatentId k = 0; k < expert.num_latents; ++k)
    if (b(k) > 0.0) dist += b(k) * expert.action_dist(k, s).transpose();
  return dist;
}

Vector act_exact(const ConfoundedMdp& model, const Trajectory& history, EvidenceMode mode) {
  const Belief b = batch_posterior(model.family.latent_prior, history, model.family, mode, &model.expert);
  return mixture_action_dist(b, model.expert, history.state_at(history.length()));
}

Vector act_conditional(const ConfoundedMdp& model, const Trajectory& history) {
  return act_exact(model, history, EvidenceMode::kConditional);
}

Vector act_interventional(const ConfoundedMdp& model, const Trajectory& history) {
  return act_exact(model, history, EvidenceMode::kInterventional);
}

BeliefAgent::BeliefAgent(std::shared_ptr<const ConfoundedMdp> model, EvidenceMode mode, ActorStyle style,
                         std::uint64_t seed)
    : Agent(seed),
      model_(std::move(model)),
      mode_(mode),
      style_(style),
      belief_(prior_belief(model_->family.latent_prior)) {}

void BeliefAgent::begin_episode(StateId) { belief_ = prior_belief(model_->family.latent_prior); }

Vector BeliefAgent::action_distribution(StateId s) const { return mixture_action_dist(belief_, model_->expert, s); }

ActionChoice BeliefAgent::act(StateId s) {
  ActionChoice choice;
  choice.distribution = action_distribution(s);
  if (style_ == ActorStyle::kMarginal) {
    choice.action = rng_.categorical(choice.distribution);
    return choice;
  }
  const LatentId sampled = rng_.categorical(belief_.probabilities());
  choice.sampled_latent = sampled;
  choice.action = rng_.categorical(model_->expert.action_dist(sampled, s));
  return choice;
}

void BeliefAgent::observe(StateId s, ActionId a, StateId s_next) {
  belief_ = update(belief_, s, a, s_next, model_->family, mode_, &model_->expert);
}

ExpertAgent::ExpertAgent(std::shared_ptr<const ExpertSpec> expert, LatentId latent, std::uint64_t seed)
    : Agent(seed), expert_(std::move(expert)), latent_(latent) {
  if (latent_ < 0 || latent_ >= expert_->num_latents) throw Error(ErrorKind::kValidation, "expert latent out of bounds");
}

Vector ExpertAgent::action_distribution(StateId s) const { return expert_action_dist(*expert_, s, latent_); }

std::unique_ptr<BeliefAgent> posterior_sampling_actor(std::shared_ptr<const ConfoundedMdp> model, EvidenceMode mode,
                                                      std::uint64_t seed) {
  return std::make_unique<BeliefAgent>(std::move(model), mode, ActorStyle::kPosteriorSampling, seed);
}

AgentFactory make_belief_factory(std::shared_ptr<const ConfoundedMdp> model, EvidenceMode mode, ActorStyle style) {
  return [model = std::move(model), mode, style](const EpisodeContext& ctx) -> std::unique_ptr<Agent> {
    return std::make_unique<BeliefAgent>(model, mode, style, ctx.seed);
  };
}

AgentFactory make_expert_factory(std::shared_ptr<const ExpertSpec> expert) {
  return [expert = std::move(expert)](const EpisodeContext& ctx) -> std::unique_ptr<Agent> {
    return std::make_unique<ExpertAgent>(expert, ctx.latent, ctx.seed);
  };
}

AgentFactory make_oracle_factory(const OraclePolicyKind& kind, std::shared_ptr<const ConfoundedMdp> truth,
                                 ActorStyle style) {
  if (const auto* e = std::get_if<ExpertKind>(&kind)) {
    auto expert = std::make_shared<const ExpertSpec>(truth->expert);
    const LatentId latent = e->latent;
    if (latent < 0 || latent >= expert->num_latents) throw Error(ErrorKind::kValidation, "expert latent out of bounds");
    return [expert, latent](const EpisodeContext& ctx) -> std::unique_ptr<Agent> {
      return std::make_unique<ExpertAgent>(expert, latent, ctx.seed);
    };
  }
  const EvidenceMode mode =
      std::holds_alternative<ConditionalKind>(kind) ? EvidenceMode::kConditional : EvidenceMode::kInterventional;
  return make_belief_factory(std::move(truth), mode, style);
}

std::string to_string(const OraclePolicyKind& kind) {
  if (const auto* e = std::get_if<ExpertKind>(&kind)) return "expert(" + std::to_string(e->latent) + ")";
  return std::holds_alternative<ConditionalKind>(kind) ? "conditional" : "interventional";
}

}  // namespace deconf
