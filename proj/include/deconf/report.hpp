#pragma once

#include "deconf/eval.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace deconf {

/// All metrics of one evaluation seed. Series have one entry per timestep.
struct EvalReport {
  std::uint64_t seed = 0;
  int horizon = 0;
  int window_start = 0;
  std::vector<double> best_arm_prob_expert;
  std::vector<double> best_arm_prob_online;
  std::vector<double> imitation_loss;
  std::vector<double> kl_to_expert;
  std::vector<int> best_arm_counts;
  std::vector<LatentId> online_latents;
  double imitation_loss_mean = 0.0;
  bool imitation_loss_infinite = false;

  // Per-episode (online) and per-trajectory (expert data) scalars used for summaries.
  std::vector<double> online_window_freq;
  std::vector<double> kl_window;
  std::vector<double> expert_early_prob;
  std::vector<double> expert_window_prob;
  std::vector<double> imitation_loss_per_trajectory;

  /// Probabilities in [0, 1], counts in [0, H], every series of length H.
  void check_invariants() const;
};

/// Runs `deploy` and every metric. `eval_experts` are expert trajectories with latents.
EvalReport evaluate(const AgentFactory& policy, const ConfoundedMdp& truth, const std::vector<Trajectory>& eval_experts,
                    const DeployConfig& deploy_config, int window_start, DeployResult* keep = nullptr);

struct SeriesStats {
  std::vector<double> mean;
  /// Standard error of the mean across seeds; NaN with a single seed.
  std::vector<double> sem;
};

SeriesStats across_seeds(const std::vector<std::vector<double>>& per_seed);

/// Trailing moving average over up to `window` values (window <= 1 returns the input).
std::vector<double> smooth(const std::vector<double>& series, int window);

/// Columns t,mean,sem and, when window > 1, mean_smoothed.
std::string series_csv(const SeriesStats& stats, int smoothing_window);

/// Columns seed,episode,latent,best_arm_count.
std::string best_arm_count_csv(const std::vector<EvalReport>& reports);

struct ScalarStat {
  double mean = 0.0;
  double sem = 0.0;
  std::size_t n = 0;
};

ScalarStat scalar_stat(const std::vector<double>& values);

/// Summary with scalar endpoints pooled over every episode of every seed.
nlohmann::json summary_json(const std::string& policy_name, const std::vector<EvalReport>& reports);

struct CompareThresholds {
  std::optional<double> max_abs_diff;
  std::map<std::string, double> min_diff;  // require (a - b) >= value
};

struct CompareOutcome {
  nlohmann::json diff;
  bool pass = true;
};

/// Per-metric a - b with a z-score from the pooled SEMs; significant when |z| > 2.
/// Throws a validation error on schema or horizon mismatch.
CompareOutcome compare_summaries(const nlohmann::json& a, const nlohmann::json& b,
                                 const CompareThresholds& thresholds = {});

}  // namespace deconf
