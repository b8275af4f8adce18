#pragma once

#include "deconf/model.hpp"
#include "deconf/train.hpp"

#include <vector>

namespace deconf {

/// Count-based maximum-likelihood tables for one chain (or a pooled set of chains).
/// Rows that were never visited are flagged and left at zero.
struct TableEstimate {
  int num_states = 0;
  int num_actions = 0;
  Matrix dynamics_counts;  // rows s * A + a, cols s'
  Matrix policy_counts;    // rows s, cols a
  Matrix dynamics;
  Matrix policy;
  std::vector<bool> dynamics_visited;  // per (s, a)
  std::vector<bool> policy_visited;    // per s

  static TableEstimate from_counts(Matrix dynamics_counts, Matrix policy_counts);
  static TableEstimate from_trajectory(const Trajectory& trajectory, int num_states, int num_actions);

  bool fully_visited() const;
};

/// Sup-norm distance over rows visited in both estimates; +inf when no row is shared.
double sup_distance(const TableEstimate& a, const TableEstimate& b);

struct MixtureComponent {
  double weight = 0.0;
  TableEstimate tables;  // pooled counts of all member chains
  std::vector<std::size_t> members;
};

struct Tier1Estimate {
  int num_states = 0;
  int num_actions = 0;
  std::vector<TableEstimate> per_trajectory;
  std::vector<MixtureComponent> components;
};

/// Per-trajectory MLE of dynamics and policy, then greedy agglomeration: each chain joins
/// the nearest existing component within `merge_tolerance` (sup-norm), else starts a new
/// one. Component weights are member fractions.
Tier1Estimate tier1_mle_identify(const ExpertDataset& experts, double merge_tolerance = 0.05);

/// Same, from per-chain count tables (lets long chains be counted without storing them).
Tier1Estimate tier1_mle_identify(std::vector<TableEstimate> chains, double merge_tolerance = 0.05);

/// Mixture as latent-indexed tables: prior = weights, dynamics and expert = pooled MLEs.
/// Rows a component never visited are filled uniformly. Throws if some (s, a) or s is
/// unvisited by every component, or no component is fully specified.
ConfoundedMdp mixture_tables(const Tier1Estimate& estimate);

/// Interventional imitator built from the recovered mixture.
ImitatorPolicy interventional_policy_from_estimate(const Tier1Estimate& estimate);

}  // namespace deconf
