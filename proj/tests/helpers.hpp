#pragma once

#include "deconf/elbo.hpp"
#include "deconf/env.hpp"
#include "deconf/model.hpp"

#include <cmath>
#include <functional>

namespace deconf::testing {

inline double tv(const Vector& a, const Vector& b) { return 0.5 * (a - b).cwiseAbs().sum(); }

/// Random trajectory with uniform actions and next states.
inline Trajectory random_trajectory(int num_states, int num_actions, int length, Rng& rng) {
  Trajectory t;
  t.initial_state = rng.uniform_int(num_states);
  for (int i = 0; i < length; ++i)
    t.steps.push_back({rng.uniform_int(num_actions), rng.uniform_int(num_states)});
  return t;
}

/// A random small confounded family with strictly positive tables.
inline ConfoundedMdp random_family(int K, int S, int A, Rng& rng) {
  ConfoundedMdp m{MdpFamilySpec::zeros(K, S, A), ExpertSpec::zeros(K, S, A)};
  auto fill = [&](auto row) {
    for (Index i = 0; i < row.size(); ++i) row(i) = 0.05 + rng.uniform();
    row /= row.sum();
  };
  fill(m.family.latent_prior.transpose());
  for (Index r = 0; r < m.family.transitions.rows(); ++r) fill(m.family.transitions.row(r));
  for (Index r = 0; r < m.family.initial_dist.rows(); ++r) fill(m.family.initial_dist.row(r));
  for (Index r = 0; r < m.expert.policy.rows(); ++r) fill(m.expert.policy.row(r));
  return m;
}

struct GradientCheck {
  double relative_error = 0.0;
  double analytic_norm = 0.0;
};

/// Compares the analytic gradient of `objective` against central differences over every
/// logit. Error is ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8).
inline GradientCheck check_gradient(const CategoricalLatentModel& model,
                                    const std::function<ElboResult(const CategoricalLatentModel&)>& objective,
                                    double h = 1e-5) {
  const ElboResult base = objective(model);
  std::vector<double> analytic, numeric;
  auto probe = [&](auto select, const auto& grad_entry) {
    CategoricalLatentModel plus = model, minus = model;
    select(plus) += h;
    select(minus) -= h;
    numeric.push_back((objective(plus).value - objective(minus).value) / (2.0 * h));
    analytic.push_back(grad_entry);
  };
  const auto& g = base.gradient;
  for (Index i = 0; i < g.prior.size(); ++i)
    probe([i](CategoricalLatentModel& m) -> double& { return m.logits.prior(i); }, g.prior(i));
  for (Index r = 0; r < g.dynamics.rows(); ++r)
    for (Index c = 0; c < g.dynamics.cols(); ++c)
      probe([r, c](CategoricalLatentModel& m) -> double& { return m.logits.dynamics(r, c); }, g.dynamics(r, c));
  for (Index r = 0; r < g.policy.rows(); ++r)
    for (Index c = 0; c < g.policy.cols(); ++c)
      probe([r, c](CategoricalLatentModel& m) -> double& { return m.logits.policy(r, c); }, g.policy(r, c));
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return {std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8}), std::sqrt(na)};
}

/// One randomized gradient-check instance for each objective; returns the worst error.
/// S >= 2: with a single state every objective is constant and the ratio is undefined.
inline double random_gradient_instance(Rng& rng) {
  const int K = 1 + rng.uniform_int(4), S = 2 + rng.uniform_int(2), A = 1 + rng.uniform_int(3);
  const CategoricalLatentModel model = CategoricalLatentModel::random(K, S, A, rng, 1.5);
  const Trajectory traj = random_trajectory(S, A, 1 + rng.uniform_int(6), rng);
  const double beta = rng.uniform();
  const std::size_t t = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(traj.length())));
  double worst = 0.0;
  worst = std::max(worst, check_gradient(model, [&](const auto& m) { return elbo_online(m, traj, t, beta); })
                              .relative_error);
  worst = std::max(worst, check_gradient(model, [&](const auto& m) { return elbo_online_episode(m, traj, beta); })
                              .relative_error);
  worst = std::max(worst, check_gradient(model, [&](const auto& m) { return elbo_offline(m, traj, beta); })
                              .relative_error);
  return worst;
}

}  // namespace deconf::testing
