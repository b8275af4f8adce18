#include "deconf/eval.hpp"

#include "deconf/format.hpp"
#include "deconf/math.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace deconf {
namespace {

std::size_t common_length(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw Error(ErrorKind::kValidation, "metric needs at least one trajectory");
  const std::size_t H = trajectories.front().length();
  for (const auto& t : trajectories)
    if (t.length() != H) throw Error(ErrorKind::kValidation, "metric trajectories must share one horizon");
  return H;
}

std::size_t common_length(const std::vector<PolicyTrace>& traces) {
  if (traces.empty()) throw Error(ErrorKind::kValidation, "metric needs at least one trace");
  const std::size_t H = traces.front().steps.size();
  for (const auto& t : traces)
    if (t.steps.size() != H) throw Error(ErrorKind::kValidation, "traces must share one horizon");
  return H;
}

/// Replays an expert trajectory through an agent and calls `fn(t, dist)` at every step.
template <typename Fn>
void replay(const AgentFactory& policy, const Trajectory& traj, Fn&& fn) {
  if (!traj.latent_truth) throw Error(ErrorKind::kValidation, "expert trajectory lacks its latent");
  auto agent = policy(EpisodeContext{*traj.latent_truth, 0});
  agent->begin_episode(traj.initial_state);
  for (std::size_t t = 0; t < traj.length(); ++t) {
    const StateId s = traj.state_at(t);
    fn(t, agent->action_distribution(s));
    agent->observe(s, traj.steps[t].action, traj.steps[t].next_state);
  }
}

PolicyTrace run_episode(const AgentFactory& policy, const ConfoundedMdp& truth, const DeployConfig& config,
                        std::uint64_t e, Trajectory& trajectory) {
  const auto& family = truth.family;
  Rng env_rng = Rng::stream(config.seed, StreamTag::kEnvironment, e);
  const LatentId latent = env_rng.categorical(family.latent_prior);
  const StateId s0 = env_rng.categorical(family.initial_dist.row(latent));
  auto agent = policy(EpisodeContext{latent, Rng::derive_seed(config.seed, StreamTag::kAgent, e)});

  PolicyTrace trace{latent, {}};
  trace.steps.reserve(static_cast<std::size_t>(config.horizon));
  trajectory = Trajectory{s0, {}, latent};
  trajectory.steps.reserve(static_cast<std::size_t>(config.horizon));
  agent->begin_episode(s0);
  StateId s = s0;
  for (int t = 0; t < config.horizon; ++t) {
    TraceStep rec;
    rec.belief = agent->belief_probabilities();
    ActionChoice choice = agent->act(s);
    if (choice.distribution.size() != family.num_actions || choice.action < 0 || choice.action >= family.num_actions)
      throw Error(ErrorKind::kValidation, "policy output does not match the family's action count");
    const StateId s_next = env_rng.categorical(family.next_state_dist(latent, s, choice.action));
    agent->observe(s, choice.action, s_next);
    rec.sampled_latent = choice.sampled_latent;
    rec.action_dist = std::move(choice.distribution);
    rec.action = choice.action;
    rec.state = s;
    trace.steps.push_back(std::move(rec));
    trajectory.steps.push_back({choice.action, s_next});
    s = s_next;
  }
  return trace;
}

}  // namespace

DeployResult deploy(const AgentFactory& policy, const ConfoundedMdp& truth, const DeployConfig& config) {
  if (config.horizon < 0 || config.episodes < 1) throw Error(ErrorKind::kValidation, "deploy: bad horizon or episode count");
  const auto n = static_cast<std::size_t>(config.episodes);
  DeployResult out;
  out.trajectories.resize(n);
  out.traces.resize(n);
  const int threads = std::max(1, std::min(config.threads, config.episodes));
  if (threads == 1) {
    for (std::size_t e = 0; e < n; ++e) out.traces[e] = run_episode(policy, truth, config, e, out.trajectories[e]);
    return out;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t e = static_cast<std::size_t>(w); e < n; e += static_cast<std::size_t>(threads))
          out.traces[e] = run_episode(policy, truth, config, e, out.trajectories[e]);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  return out;
}

ExpertReplay replay_on_experts(const AgentFactory& policy, const std::vector<Trajectory>& experts,
                               const ExpertSpec& truth) {
  const std::size_t H = common_length(experts);
  ExpertReplay out{Matrix::Zero(static_cast<Index>(experts.size()), static_cast<Index>(H)),
                   Matrix::Zero(static_cast<Index>(experts.size()), static_cast<Index>(H))};
  for (std::size_t i = 0; i < experts.size(); ++i) {
    const Trajectory& traj = experts[i];
    const auto row = static_cast<Index>(i);
    replay(policy, traj, [&](std::size_t t, const Vector& dist) {
      const auto col = static_cast<Index>(t);
      out.best_arm_prob(row, col) = dist(best_action(truth, *traj.latent_truth, traj.state_at(t)));
      const double p = dist(traj.steps[t].action);
      out.nll(row, col) = p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity();
    });
  }
  return out;
}

double mean_tv_on_experts(const AgentFactory& a, const AgentFactory& b, const std::vector<Trajectory>& experts) {
  common_length(experts);
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& traj : experts) {
    if (!traj.latent_truth) throw Error(ErrorKind::kValidation, "expert trajectory lacks its latent");
    auto pa = a(EpisodeContext{*traj.latent_truth, 0});
    auto pb = b(EpisodeContext{*traj.latent_truth, 0});
    pa->begin_episode(traj.initial_state);
    pb->begin_episode(traj.initial_state);
    for (std::size_t t = 0; t < traj.length(); ++t) {
      const StateId s = traj.state_at(t);
      total += total_variation(pa->action_distribution(s), pb->action_distribution(s));
      ++n;
      pa->observe(s, traj.steps[t].action, traj.steps[t].next_state);
      pb->observe(s, traj.steps[t].action, traj.steps[t].next_state);
    }
  }
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

ActionId best_action(const ExpertSpec& expert, LatentId latent, StateId s) {
  const auto row = expert.action_dist(latent, s);
  Index best = 0;
  for (Index a = 1; a < row.size(); ++a)
    if (row(a) > row(best)) best = a;
  return static_cast<ActionId>(best);
}

std::vector<double> metric_best_arm_prob_on_expert(const AgentFactory& policy, const std::vector<Trajectory>& experts,
                                                   const ExpertSpec& truth) {
  const Matrix p = replay_on_experts(policy, experts, truth).best_arm_prob;
  const Vector mean = p.colwise().mean().transpose();
  return std::vector<double>(mean.data(), mean.data() + mean.size());
}

OnlineSeries metric_online_series(const std::vector<PolicyTrace>& traces, const ExpertSpec& truth) {
  const std::size_t H = common_length(traces);
  OnlineSeries out{std::vector<double>(H, 0.0), {}};
  out.best_arm_counts.reserve(traces.size());
  for (const auto& trace : traces) {
    int count = 0;
    for (std::size_t t = 0; t < H; ++t) {
      const TraceStep& step = trace.steps[t];
      if (step.action == best_action(truth, trace.latent, step.state)) {
        out.best_arm_prob[t] += 1.0;
        ++count;
      }
    }
    out.best_arm_counts.push_back(count);
  }
  for (double& v : out.best_arm_prob) v /= static_cast<double>(traces.size());
  return out;
}

ImitationLoss metric_imitation_loss(const AgentFactory& policy, const std::vector<Trajectory>& experts) {
  const std::size_t H = common_length(experts);
  ImitationLoss out;
  out.per_step.assign(H, 0.0);
  for (const auto& traj : experts) {
    double total = 0.0;
    replay(policy, traj, [&](std::size_t t, const Vector& dist) {
      const double p = dist(traj.steps[t].action);
      const double nll = p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity();
      if (!std::isfinite(nll)) out.infinite = true;
      out.per_step[t] += nll;
      total += nll;
    });
    out.per_trajectory.push_back(H > 0 ? total / static_cast<double>(H) : 0.0);
  }
  double sum = 0.0;
  for (double& v : out.per_step) {
    v /= static_cast<double>(experts.size());
    sum += v;
  }
  out.mean = H > 0 ? sum / static_cast<double>(H) : 0.0;
  return out;
}

std::vector<double> metric_kl_to_expert(const std::vector<PolicyTrace>& traces, const ExpertSpec& truth) {
  const std::size_t H = common_length(traces);
  std::vector<double> series(H, 0.0);
  for (const auto& trace : traces)
    for (std::size_t t = 0; t < H; ++t)
      series[t] += kl_divergence(truth.action_dist(trace.latent, trace.steps[t].state), trace.steps[t].action_dist);
  for (double& v : series) v /= static_cast<double>(traces.size());
  return series;
}

std::string raster_csv(const std::vector<PolicyTrace>& traces) {
  const std::size_t H = traces.empty() ? 0 : common_length(traces);
  std::ostringstream out;
  for (std::size_t t = 0; t < H; ++t) out << 't' << t << ',';
  out << "latent\n";
  for (const auto& trace : traces) {
    for (const auto& step : trace.steps) out << step.action << ',';
    out << trace.latent << '\n';
  }
  return out.str();
}

void export_raster(const std::vector<PolicyTrace>& traces, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kUsage, "cannot open " + path + " for writing");
  f << raster_csv(traces);
  if (!f) throw Error(ErrorKind::kUsage, "failed writing " + path);
}

std::string traces_jsonl(const std::vector<PolicyTrace>& traces) {
  std::ostringstream out;
  for (std::size_t e = 0; e < traces.size(); ++e) {
    for (std::size_t t = 0; t < traces[e].steps.size(); ++t) {
      const TraceStep& step = traces[e].steps[t];
      nlohmann::json j;
      j["episode"] = e;
      j["t"] = t;
      j["latent"] = traces[e].latent;
      j["state"] = step.state;
      j["action"] = step.action;
      j["action_dist"] = std::vector<double>(step.action_dist.data(), step.action_dist.data() + step.action_dist.size());
      j["belief"] = step.belief ? nlohmann::json(std::vector<double>(step.belief->data(), step.belief->data() + step.belief->size()))
                                : nlohmann::json(nullptr);
      j["sampled_latent"] = step.sampled_latent ? nlohmann::json(*step.sampled_latent) : nlohmann::json(nullptr);
      out << j.dump() << '\n';
    }
  }
  return out.str();
}

}  // namespace deconf
