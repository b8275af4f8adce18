#include "deconf/tier1.hpp"

#include <cmath>
#include <limits>

namespace deconf {

TableEstimate TableEstimate::from_counts(Matrix dynamics_counts, Matrix policy_counts) {
  TableEstimate e;
  e.num_states = static_cast<int>(policy_counts.rows());
  e.num_actions = static_cast<int>(policy_counts.cols());
  e.dynamics = Matrix::Zero(dynamics_counts.rows(), dynamics_counts.cols());
  e.policy = Matrix::Zero(policy_counts.rows(), policy_counts.cols());
  e.dynamics_visited.assign(static_cast<std::size_t>(dynamics_counts.rows()), false);
  e.policy_visited.assign(static_cast<std::size_t>(policy_counts.rows()), false);
  for (Index r = 0; r < dynamics_counts.rows(); ++r) {
    const double n = dynamics_counts.row(r).sum();
    if (n <= 0.0) continue;
    e.dynamics.row(r) = dynamics_counts.row(r) / n;
    e.dynamics_visited[static_cast<std::size_t>(r)] = true;
  }
  for (Index r = 0; r < policy_counts.rows(); ++r) {
    const double n = policy_counts.row(r).sum();
    if (n <= 0.0) continue;
    e.policy.row(r) = policy_counts.row(r) / n;
    e.policy_visited[static_cast<std::size_t>(r)] = true;
  }
  e.dynamics_counts = std::move(dynamics_counts);
  e.policy_counts = std::move(policy_counts);
  return e;
}

TableEstimate TableEstimate::from_trajectory(const Trajectory& trajectory, int S, int A) {
  Matrix dyn = Matrix::Zero(static_cast<Index>(S) * A, S);
  Matrix pol = Matrix::Zero(S, A);
  for (std::size_t t = 0; t < trajectory.length(); ++t) {
    const StateId s = trajectory.state_at(t);
    const Step& step = trajectory.steps[t];
    dyn(static_cast<Index>(s) * A + step.action, step.next_state) += 1.0;
    pol(s, step.action) += 1.0;
  }
  return from_counts(std::move(dyn), std::move(pol));
}

bool TableEstimate::fully_visited() const {
  for (bool v : dynamics_visited)
    if (!v) return false;
  for (bool v : policy_visited)
    if (!v) return false;
  return true;
}

double sup_distance(const TableEstimate& a, const TableEstimate& b) {
  double dist = 0.0;
  bool shared = false;
  for (std::size_t r = 0; r < a.dynamics_visited.size(); ++r) {
    if (!a.dynamics_visited[r] || !b.dynamics_visited[r]) continue;
    shared = true;
    const auto i = static_cast<Index>(r);
    dist = std::max(dist, (a.dynamics.row(i) - b.dynamics.row(i)).cwiseAbs().maxCoeff());
  }
  for (std::size_t r = 0; r < a.policy_visited.size(); ++r) {
    if (!a.policy_visited[r] || !b.policy_visited[r]) continue;
    shared = true;
    const auto i = static_cast<Index>(r);
    dist = std::max(dist, (a.policy.row(i) - b.policy.row(i)).cwiseAbs().maxCoeff());
  }
  return shared ? dist : std::numeric_limits<double>::infinity();
}

Tier1Estimate tier1_mle_identify(const ExpertDataset& experts, double merge_tolerance) {
  experts.validate();
  std::vector<TableEstimate> chains;
  chains.reserve(experts.trajectories.size());
  for (const auto& traj : experts.trajectories)
    chains.push_back(TableEstimate::from_trajectory(traj, experts.num_states, experts.num_actions));
  return tier1_mle_identify(std::move(chains), merge_tolerance);
}

Tier1Estimate tier1_mle_identify(std::vector<TableEstimate> chains, double merge_tolerance) {
  if (chains.empty()) throw Error(ErrorKind::kValidation, "tier-1 identification needs at least one chain");
  if (!(merge_tolerance >= 0.0)) throw Error(ErrorKind::kValidation, "merge_tolerance must be non-negative");
  Tier1Estimate est;
  est.num_states = chains.front().num_states;
  est.num_actions = chains.front().num_actions;
  for (const auto& c : chains)
    if (c.num_states != est.num_states || c.num_actions != est.num_actions)
      throw Error(ErrorKind::kValidation, "tier-1 chains disagree on table shapes");
  est.per_trajectory = std::move(chains);

  for (std::size_t i = 0; i < est.per_trajectory.size(); ++i) {
    const TableEstimate& chain = est.per_trajectory[i];
    std::size_t best = est.components.size();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < est.components.size(); ++c) {
      const double d = sup_distance(chain, est.components[c].tables);
      if (d <= merge_tolerance && d < best_dist) {
        best = c;
        best_dist = d;
      }
    }
    if (best == est.components.size()) {
      est.components.push_back({0.0, chain, {i}});
      continue;
    }
    auto& comp = est.components[best];
    comp.tables = TableEstimate::from_counts(comp.tables.dynamics_counts + chain.dynamics_counts,
                                             comp.tables.policy_counts + chain.policy_counts);
    comp.members.push_back(i);
  }
  const double n = static_cast<double>(est.per_trajectory.size());
  for (auto& comp : est.components) comp.weight = static_cast<double>(comp.members.size()) / n;
  return est;
}

ConfoundedMdp mixture_tables(const Tier1Estimate& est) {
  const int S = est.num_states, A = est.num_actions;
  const int K = static_cast<int>(est.components.size());
  if (K == 0) throw Error(ErrorKind::kValidation, "tier-1 estimate has no components");
  bool any_full = false;
  for (const auto& comp : est.components) any_full = any_full || comp.tables.fully_visited();
  if (!any_full) throw Error(ErrorKind::kValidation, "no tier-1 component has fully specified dynamics and policy");

  ConfoundedMdp mdp{MdpFamilySpec::zeros(K, S, A), ExpertSpec::zeros(K, S, A)};
  for (int z = 0; z < K; ++z) mdp.family.latent_prior(z) = est.components[static_cast<std::size_t>(z)].weight;
  mdp.family.latent_prior /= mdp.family.latent_prior.sum();
  mdp.family.initial_dist.setConstant(1.0 / S);

  for (StateId s = 0; s < S; ++s) {
    for (ActionId a = 0; a < A; ++a) {
      const auto r = static_cast<std::size_t>(s * A + a);
      bool seen = false;
      for (const auto& comp : est.components) seen = seen || comp.tables.dynamics_visited[r];
      if (!seen)
        throw Error(ErrorKind::kValidation, "dynamics for (s=" + std::to_string(s) + ", a=" + std::to_string(a) +
                                                ") unvisited in every component");
    }
  }
  for (int z = 0; z < K; ++z) {
    const TableEstimate& t = est.components[static_cast<std::size_t>(z)].tables;
    for (StateId s = 0; s < S; ++s) {
      for (ActionId a = 0; a < A; ++a) {
        const auto r = static_cast<Index>(s) * A + a;
        auto row = mdp.family.next_state_dist(z, s, a);
        if (t.dynamics_visited[static_cast<std::size_t>(r)]) row = t.dynamics.row(r);
        else row.setConstant(1.0 / S);
      }
      auto prow = mdp.expert.action_dist(z, s);
      if (t.policy_visited[static_cast<std::size_t>(s)]) prow = t.policy.row(s);
      else prow.setConstant(1.0 / A);
    }
  }
  return mdp;
}

ImitatorPolicy interventional_policy_from_estimate(const Tier1Estimate& estimate) {
  return ImitatorPolicy{std::make_shared<const ConfoundedMdp>(mixture_tables(estimate)),
                        EvidenceMode::kInterventional};
}

}  // namespace deconf
