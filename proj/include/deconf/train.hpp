#pragma once

#include "deconf/elbo.hpp"
#include "deconf/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace deconf {

/// Optimizer and objective settings. Defaults follow the bandit experiment: batch of 100
/// episodes, 5000 steps, BC lr 1e-3, VI lr 1e-4, beta 1e-3.
struct ElboConfig {
  double beta = 0.001;
  double lr_inference = 1e-4;
  double lr_policy = 1e-3;
  int batch_episodes = 100;
  int train_steps = 5000;
  int num_latents = 5;

  void validate() const;
};

struct TrainOptions {
  ElboConfig elbo;
  /// Length of exploration and synthetic episodes.
  int horizon = 100;
  /// Parameter updates of the online inference model on synthetic data (offline variant).
  int online_refine_steps = 1000;
  /// Draw one latent per expert episode for BC instead of weighting by the posterior.
  bool sample_bc_latents = false;
  double init_scale = 0.01;

  void validate() const;
};

/// Expert demonstrations. `latent_truth` may be present but is never read by training.
struct ExpertDataset {
  int num_states = 0;
  int num_actions = 0;
  std::vector<Trajectory> trajectories;

  void validate() const;
  /// Empirical distribution of initial states, as a 1 x S row.
  Matrix initial_state_distribution() const;
};

/// Sampling access to the environment family without exposing its tables: each call draws
/// a fresh latent from the prior and rolls out a latent-blind uniform-random policy.
class EnvironmentAccess {
 public:
  explicit EnvironmentAccess(MdpFamilySpec family);

  int num_states() const { return family_.num_states; }
  int num_actions() const { return family_.num_actions; }
  /// Returned trajectories carry no latent.
  Trajectory explore(int horizon, Rng& rng) const;

 private:
  MdpFamilySpec family_;
};

struct TrainLogRow {
  int step = 0;
  double elbo = 0.0;            // per transition
  double imitation_loss = 0.0;  // mean NLL per expert action
  std::optional<double> online_best_arm_count;
  std::optional<double> eval_best_arm_prob;
};

struct MonitorPoint {
  double online_best_arm_count = 0.0;
  double eval_best_arm_prob = 0.0;
};

/// Optional evaluation hook. `evaluate` runs every `interval` updates and after the last one.
struct TrainingMonitor {
  int interval = 0;
  std::function<MonitorPoint(const ImitatorPolicy&)> evaluate;

  bool due(int step, int total_steps) const {
    return evaluate && interval > 0 && ((step + 1) % interval == 0 || step + 1 == total_steps);
  }
};

struct TrainResult {
  CategoricalLatentModel model;
  /// Offline variant only: prior and dynamics of the online inference model.
  std::optional<CategoricalLatentModel> online_model;
  Matrix initial_dist;
  EvidenceMode mode = EvidenceMode::kInterventional;
  std::vector<TrainLogRow> log;

  /// Composite imitator: inference under (online or main) prior and dynamics, policy from
  /// `model`.
  ImitatorPolicy policy() const;
};

/// Behavioral cloning with latent inference using environment exploration.
/// Each step: fit prior and dynamics on fresh exploration episodes by ascending the online
/// objective, infer each expert episode's latent with the full-episode interventional
/// posterior, then take a BC step on the policy logits.
TrainResult train_tier2(const EnvironmentAccess& environment, const ExpertDataset& experts,
                        const TrainOptions& options, std::uint64_t seed, const TrainingMonitor& monitor = {});

/// Offline variant: fit the whole model on expert data with the offline objective, then
/// refine a copy of prior and dynamics on synthetic episodes from the learned dynamics with
/// the online objective.
TrainResult train_tier1_offline(const ExpertDataset& experts, const TrainOptions& options, std::uint64_t seed,
                                const TrainingMonitor& monitor = {});

/// Naive behavioral cloning: the offline fit, acting with the conditional posterior.
TrainResult naive_bc_baseline(const ExpertDataset& experts, const TrainOptions& options, std::uint64_t seed,
                              const TrainingMonitor& monitor = {});

std::string train_log_csv(const std::vector<TrainLogRow>& log);

nlohmann::json to_json(const ElboConfig& config);
nlohmann::json to_json(const TrainOptions& options);
TrainOptions train_options_from_json(const nlohmann::json& j);

/// Checkpoint with every logit tensor, the options, the seed and the algorithm name.
nlohmann::json checkpoint_to_json(const TrainResult& result, const std::string& algo, const TrainOptions& options,
                                  std::uint64_t seed);
struct Checkpoint {
  std::string algo;
  std::uint64_t seed = 0;
  TrainOptions options;
  TrainResult result;
};
Checkpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace deconf
