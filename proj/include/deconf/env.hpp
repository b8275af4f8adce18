#pragma once

#include "deconf/common.hpp"
#include "deconf/rng.hpp"

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace deconf {

/// A latent-indexed family of finite, reward-free MDPs.
///
/// `transitions` has one row per (latent, state, action), laid out as
/// `(latent * num_states + state) * num_actions + action`, each row a distribution over
/// next states. `initial_dist` has one row per latent.
struct MdpFamilySpec {
  int num_states = 0;
  int num_actions = 0;
  int num_latents = 0;
  Vector latent_prior;
  Matrix transitions;
  Matrix initial_dist;

  /// Zero-filled tables with consistent shapes.
  static MdpFamilySpec zeros(int num_latents, int num_states, int num_actions);

  Index transition_row(LatentId latent, StateId s, ActionId a) const {
    return (static_cast<Index>(latent) * num_states + s) * num_actions + a;
  }
  auto next_state_dist(LatentId latent, StateId s, ActionId a) const {
    return transitions.row(transition_row(latent, s, a));
  }
  auto next_state_dist(LatentId latent, StateId s, ActionId a) {
    return transitions.row(transition_row(latent, s, a));
  }
};

/// Latent-aware expert: one row per (latent, state) laid out as `latent * num_states + state`.
struct ExpertSpec {
  int num_latents = 0;
  int num_states = 0;
  int num_actions = 0;
  Matrix policy;

  static ExpertSpec zeros(int num_latents, int num_states, int num_actions);

  Index row(LatentId latent, StateId s) const { return static_cast<Index>(latent) * num_states + s; }
  auto action_dist(LatentId latent, StateId s) const { return policy.row(row(latent, s)); }
  auto action_dist(LatentId latent, StateId s) { return policy.row(row(latent, s)); }
};

/// A family together with its expert. Learned models export the same tables, so every
/// belief engine and oracle policy works on either.
struct ConfoundedMdp {
  MdpFamilySpec family;
  ExpertSpec expert;
};

struct Step {
  ActionId action = 0;
  StateId next_state = 0;
  friend bool operator==(const Step&, const Step&) = default;
};

/// s0 followed by (a_t, s_{t+1}) pairs. `latent_truth` is kept for evaluation only.
struct Trajectory {
  StateId initial_state = 0;
  std::vector<Step> steps;
  std::optional<LatentId> latent_truth;

  std::size_t length() const { return steps.size(); }
  /// s_t for t in [0, length()].
  StateId state_at(std::size_t t) const { return t == 0 ? initial_state : steps[t - 1].next_state; }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct RolloutConfig {
  int horizon = 100;
  std::uint64_t seed = 0;
  int episodes = 1;

  void validate() const;
};

/// Per-episode information handed to agent factories. Only latent-aware agents (the expert)
/// may read `latent`.
struct EpisodeContext {
  LatentId latent = 0;
  std::uint64_t seed = 0;
};

struct ActionChoice {
  ActionId action = 0;
  /// Marginal action distribution at the current history.
  Vector distribution;
  std::optional<LatentId> sampled_latent;
};

/// History-conditioned actor. One instance serves one episode.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual void begin_episode(StateId s0) = 0;
  /// Exact marginal action distribution given the history observed so far and current state.
  virtual Vector action_distribution(StateId s) const = 0;
  /// Draw an action. The default samples from `action_distribution`.
  virtual ActionChoice act(StateId s);
  virtual void observe(StateId s, ActionId a, StateId s_next) = 0;
  /// Current belief over latents as probabilities, when the agent tracks one.
  virtual std::optional<Vector> belief_probabilities() const { return std::nullopt; }

 protected:
  explicit Agent(std::uint64_t seed) : rng_(seed) {}
  Rng rng_;
};

using AgentFactory = std::function<std::unique_ptr<Agent>(const EpisodeContext&)>;

/// Callable form of a policy: maps a trajectory prefix (ending at the current state) to an
/// action distribution.
using HistoryPolicy = std::function<Vector(const Trajectory& prefix)>;

/// Adapts a `HistoryPolicy` to the `Agent` interface.
AgentFactory make_history_policy_factory(HistoryPolicy policy);

/// Uniform-random, latent-blind actor over `num_actions` arms.
AgentFactory make_uniform_factory(int num_actions);

/// The bandit with five arms/latents and two states. p(s0) puts all mass on state 0 for
/// every latent; the state only records the last outcome, so s0 never affects a posterior.
ConfoundedMdp make_confounded_bandit();

/// Samples one episode from `s0`. Actions come from the agent; next states from
/// `transitions[latent]` drawn with `env_rng`.
Trajectory rollout_episode(const MdpFamilySpec& family, Agent& agent, LatentId latent, int horizon,
                           Rng& env_rng, StateId s0);

/// Single seeded rollout under a fixed latent; bit-identical for identical arguments.
Trajectory rollout(const MdpFamilySpec& family, const AgentFactory& policy, LatentId latent,
                   const RolloutConfig& config);

/// `config.episodes` rollouts with latents drawn from the prior, each on its own streams.
std::vector<Trajectory> rollout_many(const MdpFamilySpec& family, const AgentFactory& policy,
                                     const RolloutConfig& config);

/// Lists violated invariants; an empty list means the spec is valid.
std::vector<std::string> validate_spec(const MdpFamilySpec& family, const ExpertSpec& expert);
std::vector<std::string> validate_family(const MdpFamilySpec& family);

void check_bounds(const MdpFamilySpec& family, StateId s, ActionId a, StateId s_next);

// JSON. Tensors are nested arrays: transitions[latent][state][action][next_state],
// initial_dist[latent][state], policy[latent][state][action].
nlohmann::json to_json(const ConfoundedMdp& mdp);
ConfoundedMdp confounded_mdp_from_json(const nlohmann::json& j);

/// One JSON-lines record: {"latent": k, "s0": i, "steps": [[a, s], ...]}.
std::string trajectory_to_jsonl(const Trajectory& trajectory);
Trajectory trajectory_from_jsonl(const std::string& line);
void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> read_trajectories(std::istream& in);

}  // namespace deconf
