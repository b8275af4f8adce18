#pragma once

#include "deconf/env.hpp"
#include "deconf/oracle.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace deconf {

struct DeployConfig {
  int horizon = 100;
  int episodes = 1000;
  std::uint64_t seed = 0;
  /// Worker threads; results do not depend on this.
  int threads = 1;
};

struct DeployResult {
  std::vector<Trajectory> trajectories;
  std::vector<PolicyTrace> traces;
};

/// Test-time loop: per episode draw the latent from the prior, then let the agent act under
/// the true dynamics while it runs its own inference. Episode e uses environment stream
/// (seed, e) and agent stream (seed, e), so policies compared under one seed face the same
/// latents.
DeployResult deploy(const AgentFactory& policy, const ConfoundedMdp& truth, const DeployConfig& config);

/// argmax_a pi_exp(a|s, latent), smallest action on ties. For the bandit this is the latent.
ActionId best_action(const ExpertSpec& expert, LatentId latent, StateId s);

/// Replay of expert trajectories through a policy: one row per trajectory, one column per t.
struct ExpertReplay {
  Matrix best_arm_prob;  // policy probability on the best action given the prefix
  Matrix nll;            // -log policy(a_t | prefix); +inf for zero probability
};

ExpertReplay replay_on_experts(const AgentFactory& policy, const std::vector<Trajectory>& experts,
                               const ExpertSpec& truth);

/// Mean per-step total-variation distance between two policies' action distributions along
/// the expert prefixes.
double mean_tv_on_experts(const AgentFactory& a, const AgentFactory& b, const std::vector<Trajectory>& experts);

/// Per t, mean over expert trajectories of the policy's probability on the best action
/// given the expert prefix.
std::vector<double> metric_best_arm_prob_on_expert(const AgentFactory& policy, const std::vector<Trajectory>& experts,
                                                   const ExpertSpec& truth);

struct OnlineSeries {
  std::vector<double> best_arm_prob;  // per t
  std::vector<int> best_arm_counts;   // per episode
};

OnlineSeries metric_online_series(const std::vector<PolicyTrace>& traces, const ExpertSpec& truth);

struct ImitationLoss {
  std::vector<double> per_step;       // mean -log pi(a_t | prefix) per t
  std::vector<double> per_trajectory;  // mean over t per trajectory
  double mean = 0.0;
  /// Some expert action had zero probability; affected entries are +inf.
  bool infinite = false;
};

ImitationLoss metric_imitation_loss(const AgentFactory& policy, const std::vector<Trajectory>& experts);

/// Per t, mean KL(pi_exp(.|s_t, latent) || policy's action distribution).
std::vector<double> metric_kl_to_expert(const std::vector<PolicyTrace>& traces, const ExpertSpec& truth);

/// Rows are episodes, columns t0..t{H-1} hold action ids, last column the true latent.
std::string raster_csv(const std::vector<PolicyTrace>& traces);
void export_raster(const std::vector<PolicyTrace>& traces, const std::string& path);

/// Per-step trace records as JSON lines (beliefs as probabilities).
std::string traces_jsonl(const std::vector<PolicyTrace>& traces);

}  // namespace deconf
