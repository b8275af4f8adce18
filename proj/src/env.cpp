#include "deconf/env.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace deconf {
namespace {

constexpr double kNormTolerance = 1e-12;

template <typename Row>
void check_distribution(const Row& row, const std::string& name, std::vector<std::string>& out) {
  for (Index i = 0; i < row.size(); ++i) {
    if (!std::isfinite(row.coeff(i)) || row.coeff(i) < 0.0) {
      std::ostringstream msg;
      msg << name << ": entry " << i << " is negative or non-finite (" << row.coeff(i) << ")";
      out.push_back(msg.str());
      return;
    }
  }
  const double sum = row.sum();
  if (std::abs(sum - 1.0) > kNormTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << name << ": sums to " << sum << ", expected 1";
    out.push_back(msg.str());
  }
}

class UniformAgent final : public Agent {
 public:
  UniformAgent(int num_actions, std::uint64_t seed)
      : Agent(seed), dist_(Vector::Constant(num_actions, 1.0 / num_actions)) {}
  void begin_episode(StateId) override {}
  Vector action_distribution(StateId) const override { return dist_; }
  void observe(StateId, ActionId, StateId) override {}

 private:
  Vector dist_;
};

class HistoryPolicyAgent final : public Agent {
 public:
  HistoryPolicyAgent(HistoryPolicy policy, std::uint64_t seed) : Agent(seed), policy_(std::move(policy)) {}
  void begin_episode(StateId s0) override { history_ = Trajectory{s0, {}, std::nullopt}; }
  Vector action_distribution(StateId s) const override {
    if (s != history_.state_at(history_.length()))
      throw Error(ErrorKind::kUsage, "history policy queried at a state that does not end its history");
    return policy_(history_);
  }
  void observe(StateId, ActionId a, StateId s_next) override { history_.steps.push_back({a, s_next}); }

 private:
  HistoryPolicy policy_;
  Trajectory history_;
};

nlohmann::json matrix_rows_to_json(const Matrix& m, Index begin, Index count) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = begin; r < begin + count; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void require(bool condition, const std::string& what) {
  if (!condition) throw Error(ErrorKind::kValidation, what);
}

Vector vector_from_json(const nlohmann::json& j, Index expected, const std::string& name) {
  require(j.is_array() && static_cast<Index>(j.size()) == expected, name + ": expected array of length " +
                                                                       std::to_string(expected));
  Vector v(expected);
  for (Index i = 0; i < expected; ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

ActionChoice Agent::act(StateId s) {
  ActionChoice choice;
  choice.distribution = action_distribution(s);
  choice.action = rng_.categorical(choice.distribution);
  return choice;
}

MdpFamilySpec MdpFamilySpec::zeros(int num_latents, int num_states, int num_actions) {
  MdpFamilySpec f;
  f.num_latents = num_latents;
  f.num_states = num_states;
  f.num_actions = num_actions;
  f.latent_prior = Vector::Zero(num_latents);
  f.transitions = Matrix::Zero(static_cast<Index>(num_latents) * num_states * num_actions, num_states);
  f.initial_dist = Matrix::Zero(num_latents, num_states);
  return f;
}

ExpertSpec ExpertSpec::zeros(int num_latents, int num_states, int num_actions) {
  ExpertSpec e;
  e.num_latents = num_latents;
  e.num_states = num_states;
  e.num_actions = num_actions;
  e.policy = Matrix::Zero(static_cast<Index>(num_latents) * num_states, num_actions);
  return e;
}

void RolloutConfig::validate() const {
  if (horizon < 0) throw Error(ErrorKind::kValidation, "rollout horizon must be non-negative");
  if (episodes < 1) throw Error(ErrorKind::kValidation, "rollout episodes must be at least 1");
}

AgentFactory make_history_policy_factory(HistoryPolicy policy) {
  return [policy = std::move(policy)](const EpisodeContext& ctx) -> std::unique_ptr<Agent> {
    return std::make_unique<HistoryPolicyAgent>(policy, ctx.seed);
  };
}

AgentFactory make_uniform_factory(int num_actions) {
  return [num_actions](const EpisodeContext& ctx) -> std::unique_ptr<Agent> {
    return std::make_unique<UniformAgent>(num_actions, ctx.seed);
  };
}

ConfoundedMdp make_confounded_bandit() {
  constexpr int kArms = 5;
  constexpr int kStates = 2;
  ConfoundedMdp mdp{MdpFamilySpec::zeros(kArms, kStates, kArms), ExpertSpec::zeros(kArms, kStates, kArms)};
  auto& family = mdp.family;
  family.latent_prior.setConstant(1.0 / kArms);
  family.initial_dist.col(0).setOnes();
  for (LatentId theta = 0; theta < kArms; ++theta) {
    for (StateId s = 0; s < kStates; ++s) {
      for (ActionId a = 0; a < kArms; ++a) {
        const double p_one = (a == theta) ? 0.75 : 0.25;
        family.next_state_dist(theta, s, a) << 1.0 - p_one, p_one;
        mdp.expert.action_dist(theta, s)(a) = (a == theta) ? 0.6 : 0.1;
      }
    }
  }
  return mdp;
}

void check_bounds(const MdpFamilySpec& family, StateId s, ActionId a, StateId s_next) {
  if (s < 0 || s >= family.num_states || s_next < 0 || s_next >= family.num_states || a < 0 ||
      a >= family.num_actions) {
    std::ostringstream msg;
    msg << "transition (s=" << s << ", a=" << a << ", s'=" << s_next << ") out of bounds for "
        << family.num_states << " states and " << family.num_actions << " actions";
    throw Error(ErrorKind::kValidation, msg.str());
  }
}

Trajectory rollout_episode(const MdpFamilySpec& family, Agent& agent, LatentId latent, int horizon,
                           Rng& env_rng, StateId s0) {
  Trajectory trajectory{s0, {}, latent};
  trajectory.steps.reserve(static_cast<std::size_t>(horizon));
  agent.begin_episode(s0);
  StateId s = s0;
  for (int t = 0; t < horizon; ++t) {
    const ActionChoice choice = agent.act(s);
    if (choice.distribution.size() != family.num_actions)
      throw Error(ErrorKind::kValidation, "policy returned " + std::to_string(choice.distribution.size()) +
                                              " action probabilities, family has " +
                                              std::to_string(family.num_actions) + " actions");
    const StateId s_next = env_rng.categorical(family.next_state_dist(latent, s, choice.action));
    agent.observe(s, choice.action, s_next);
    trajectory.steps.push_back({choice.action, s_next});
    s = s_next;
  }
  return trajectory;
}

Trajectory rollout(const MdpFamilySpec& family, const AgentFactory& policy, LatentId latent,
                   const RolloutConfig& config) {
  config.validate();
  if (latent < 0 || latent >= family.num_latents)
    throw Error(ErrorKind::kValidation, "latent " + std::to_string(latent) + " out of bounds");
  Rng env_rng = Rng::stream(config.seed, StreamTag::kEnvironment, 0);
  const StateId s0 = env_rng.categorical(family.initial_dist.row(latent));
  auto agent = policy(EpisodeContext{latent, Rng::derive_seed(config.seed, StreamTag::kAgent, 0)});
  return rollout_episode(family, *agent, latent, config.horizon, env_rng, s0);
}

std::vector<Trajectory> rollout_many(const MdpFamilySpec& family, const AgentFactory& policy,
                                     const RolloutConfig& config) {
  config.validate();
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(config.episodes));
  for (int e = 0; e < config.episodes; ++e) {
    Rng env_rng = Rng::stream(config.seed, StreamTag::kEnvironment, static_cast<std::uint64_t>(e));
    const LatentId latent = env_rng.categorical(family.latent_prior);
    const StateId s0 = env_rng.categorical(family.initial_dist.row(latent));
    auto agent =
        policy(EpisodeContext{latent, Rng::derive_seed(config.seed, StreamTag::kAgent, static_cast<std::uint64_t>(e))});
    out.push_back(rollout_episode(family, *agent, latent, config.horizon, env_rng, s0));
  }
  return out;
}

std::vector<std::string> validate_family(const MdpFamilySpec& f) {
  std::vector<std::string> out;
  if (f.num_states < 1 || f.num_actions < 1 || f.num_latents < 1) {
    out.push_back("counts must be positive");
    return out;
  }
  const Index rows = static_cast<Index>(f.num_latents) * f.num_states * f.num_actions;
  if (f.latent_prior.size() != f.num_latents) out.push_back("latent_prior has wrong length");
  if (f.transitions.rows() != rows || f.transitions.cols() != f.num_states)
    out.push_back("transitions has wrong shape");
  if (f.initial_dist.rows() != f.num_latents || f.initial_dist.cols() != f.num_states)
    out.push_back("initial_dist has wrong shape");
  if (!out.empty()) return out;

  check_distribution(f.latent_prior, "latent_prior", out);
  for (LatentId k = 0; k < f.num_latents; ++k) {
    check_distribution(f.initial_dist.row(k), "initial_dist[" + std::to_string(k) + "]", out);
    for (StateId s = 0; s < f.num_states; ++s)
      for (ActionId a = 0; a < f.num_actions; ++a)
        check_distribution(f.next_state_dist(k, s, a),
                           "transitions[" + std::to_string(k) + "][" + std::to_string(s) + "][" +
                               std::to_string(a) + "]",
                           out);
  }
  return out;
}

std::vector<std::string> validate_spec(const MdpFamilySpec& family, const ExpertSpec& expert) {
  std::vector<std::string> out = validate_family(family);
  if (expert.num_latents != family.num_latents || expert.num_states != family.num_states ||
      expert.num_actions != family.num_actions) {
    out.push_back("expert dimensions do not match the family");
    return out;
  }
  if (expert.policy.rows() != static_cast<Index>(expert.num_latents) * expert.num_states ||
      expert.policy.cols() != expert.num_actions) {
    out.push_back("expert policy has wrong shape");
    return out;
  }
  for (LatentId k = 0; k < expert.num_latents; ++k)
    for (StateId s = 0; s < expert.num_states; ++s)
      check_distribution(expert.action_dist(k, s),
                         "policy[" + std::to_string(k) + "][" + std::to_string(s) + "]", out);
  return out;
}

nlohmann::json to_json(const ConfoundedMdp& mdp) {
  const auto& f = mdp.family;
  nlohmann::json transitions = nlohmann::json::array();
  for (LatentId k = 0; k < f.num_latents; ++k) {
    nlohmann::json per_state = nlohmann::json::array();
    for (StateId s = 0; s < f.num_states; ++s)
      per_state.push_back(matrix_rows_to_json(f.transitions, f.transition_row(k, s, 0), f.num_actions));
    transitions.push_back(std::move(per_state));
  }
  nlohmann::json policy = nlohmann::json::array();
  for (LatentId k = 0; k < f.num_latents; ++k)
    policy.push_back(matrix_rows_to_json(mdp.expert.policy, mdp.expert.row(k, 0), mdp.expert.num_states));

  nlohmann::json j;
  j["schema_version"] = 1;
  j["num_states"] = f.num_states;
  j["num_actions"] = f.num_actions;
  j["num_latents"] = f.num_latents;
  j["latent_prior"] = std::vector<double>(f.latent_prior.data(), f.latent_prior.data() + f.latent_prior.size());
  j["initial_dist"] = matrix_rows_to_json(f.initial_dist, 0, f.num_latents);
  j["transitions"] = std::move(transitions);
  j["expert_policy"] = std::move(policy);
  return j;
}

ConfoundedMdp confounded_mdp_from_json(const nlohmann::json& j) {
  try {
    require(j.value("schema_version", 0) == 1, "family spec: unsupported schema_version");
    const int S = j.at("num_states").get<int>();
    const int A = j.at("num_actions").get<int>();
    const int K = j.at("num_latents").get<int>();
    require(S > 0 && A > 0 && K > 0, "family spec: counts must be positive");
    ConfoundedMdp mdp{MdpFamilySpec::zeros(K, S, A), ExpertSpec::zeros(K, S, A)};
    auto& f = mdp.family;
    f.latent_prior = vector_from_json(j.at("latent_prior"), K, "latent_prior");
    const auto& init = j.at("initial_dist");
    require(init.is_array() && static_cast<int>(init.size()) == K, "initial_dist: expected one row per latent");
    for (LatentId k = 0; k < K; ++k) f.initial_dist.row(k) = vector_from_json(init[k], S, "initial_dist row").transpose();

    const auto& tr = j.at("transitions");
    const auto& pol = j.at("expert_policy");
    require(tr.is_array() && static_cast<int>(tr.size()) == K, "transitions: expected one entry per latent");
    require(pol.is_array() && static_cast<int>(pol.size()) == K, "expert_policy: expected one entry per latent");
    for (LatentId k = 0; k < K; ++k) {
      require(tr[k].is_array() && static_cast<int>(tr[k].size()) == S, "transitions: expected one entry per state");
      require(pol[k].is_array() && static_cast<int>(pol[k].size()) == S, "expert_policy: expected one row per state");
      for (StateId s = 0; s < S; ++s) {
        require(tr[k][s].is_array() && static_cast<int>(tr[k][s].size()) == A,
                "transitions: expected one row per action");
        for (ActionId a = 0; a < A; ++a)
          f.next_state_dist(k, s, a) = vector_from_json(tr[k][s][a], S, "transitions row").transpose();
        mdp.expert.action_dist(k, s) = vector_from_json(pol[k][s], A, "expert_policy row").transpose();
      }
    }
    return mdp;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("family spec: ") + e.what());
  }
}

std::string trajectory_to_jsonl(const Trajectory& trajectory) {
  nlohmann::json j;
  j["latent"] = trajectory.latent_truth ? nlohmann::json(*trajectory.latent_truth) : nlohmann::json(nullptr);
  j["s0"] = trajectory.initial_state;
  nlohmann::json steps = nlohmann::json::array();
  for (const Step& step : trajectory.steps) steps.push_back({step.action, step.next_state});
  j["steps"] = std::move(steps);
  return j.dump();
}

Trajectory trajectory_from_jsonl(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Trajectory t;
    t.initial_state = j.at("s0").get<int>();
    if (j.contains("latent") && !j.at("latent").is_null()) t.latent_truth = j.at("latent").get<int>();
    for (const auto& step : j.at("steps")) {
      require(step.is_array() && step.size() == 2, "trajectory step must be [action, next_state]");
      t.steps.push_back({step[0].get<int>(), step[1].get<int>()});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("trajectory record: ") + e.what());
  }
}

void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  for (const auto& t : trajectories) out << trajectory_to_jsonl(t) << '\n';
}

std::vector<Trajectory> read_trajectories(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(trajectory_from_jsonl(line));
  }
  return out;
}

}  // namespace deconf
