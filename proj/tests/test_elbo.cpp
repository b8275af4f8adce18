#include "deconf/elbo.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace deconf;

TEST_SUITE("elbo") {
  TEST_CASE("single latent reduces to the log-likelihood") {
    Rng rng(4);
    const CategoricalLatentModel m = CategoricalLatentModel::random(1, 3, 2, rng, 1.0);
    const Trajectory t = testing::random_trajectory(3, 2, 5, rng);
    const ModelLogTables lt(m);
    for (std::size_t i = 0; i < t.length(); ++i) {
      const double want = lt.log_dynamics(m.dynamics_row(0, t.state_at(i), t.steps[i].action), t.steps[i].next_state);
      CHECK(elbo_online(m, t, i, 0.7).value == doctest::Approx(want).epsilon(1e-13));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < t.length(); ++i) {
      sum += lt.log_dynamics(m.dynamics_row(0, t.state_at(i), t.steps[i].action), t.steps[i].next_state);
      sum += lt.log_policy(m.policy_row(0, t.state_at(i)), t.steps[i].action);
    }
    CHECK(elbo_offline(m, t, 0.7).value == doctest::Approx(sum).epsilon(1e-13));
  }

  TEST_CASE("online value on the bandit") {
    const CategoricalLatentModel m = CategoricalLatentModel::from_tables(make_confounded_bandit());
    Trajectory t;
    t.steps = {{2, 1}, {2, 1}};
    const double want = (3.0 / 7) * std::log(0.75) + (4.0 / 7) * std::log(0.25);
    CHECK(elbo_online(m, t, 1, 0.0).value == doctest::Approx(want).epsilon(1e-13));
    CHECK_THROWS_AS(elbo_online(m, t, 2, 0.0), Error);
  }

  TEST_CASE("offline value on the bandit") {
    const ConfoundedMdp b = make_confounded_bandit();
    const CategoricalLatentModel m = CategoricalLatentModel::from_tables(b);
    Trajectory t;
    t.steps = {{2, 1}};
    // Independent enumeration: q is the conditional posterior after (s=0, a=2, s'=1).
    double value = 0.0, kl = 0.0;
    double z = 0.0;
    std::vector<double> joint(5);
    for (int k = 0; k < 5; ++k) {
      joint[k] = 0.2 * b.family.transitions(b.family.transition_row(k, 0, 2), 1) * b.expert.policy(k * 2, 2);
      z += joint[k];
    }
    for (int k = 0; k < 5; ++k) {
      const double q = joint[k] / z;
      value += q * (std::log(b.family.transitions(b.family.transition_row(k, 0, 2), 1)) +
                    std::log(b.expert.policy(k * 2, 2)));
      kl += q * std::log(q / 0.2);
    }
    CHECK(elbo_offline(m, t, 0.0).value == doctest::Approx(value).epsilon(1e-13));
    CHECK(elbo_offline(m, t, 0.25).value == doctest::Approx(value - 0.25 * kl).epsilon(1e-13));
    // Pinned regression constant (same quantity).
    CHECK(elbo_offline(m, t, 0.0).value == doctest::Approx(-1.3240298340170744).epsilon(1e-12));
    CHECK_THROWS_AS(elbo_offline(m, Trajectory{}, 0.0), Error);
  }

  TEST_CASE("gradients match finite differences") {
    Rng rng(2024);
    for (int i = 0; i < 20; ++i) CHECK(testing::random_gradient_instance(rng) <= 1e-4);
  }

  TEST_CASE("accumulating variants agree with the episode objectives") {
    Rng rng(77);
    const CategoricalLatentModel m = CategoricalLatentModel::random(3, 2, 3, rng, 1.0);
    const Trajectory t = testing::random_trajectory(2, 3, 8, rng);
    const ModelLogTables lt(m);

    LogitTensors g = LogitTensors::zeros(3, 2, 3);
    const double v = accumulate_elbo_online(lt, t, 0.3, g);
    log_prob_grad_to_logit_grad(lt, g);
    const ElboResult ref = elbo_online_episode(m, t, 0.3);
    CHECK(v == doctest::Approx(ref.value).epsilon(1e-12));
    CHECK(g.dynamics.isApprox(ref.gradient.dynamics, 1e-10));
    CHECK(g.prior.isApprox(ref.gradient.prior, 1e-10));

    LogitTensors h = LogitTensors::zeros(3, 2, 3);
    double nll = 0.0;
    const double w = accumulate_elbo_offline(lt, t, 0.3, h, &nll);
    log_prob_grad_to_logit_grad(lt, h);
    const ElboResult off = elbo_offline(m, t, 0.3);
    CHECK(w == doctest::Approx(off.value).epsilon(1e-12));
    CHECK(h.policy.isApprox(off.gradient.policy, 1e-10));
    CHECK(nll > 0.0);
  }

  TEST_CASE("model posterior matches the belief engine") {
    Rng rng(3);
    const CategoricalLatentModel m = CategoricalLatentModel::random(4, 2, 3, rng, 1.0);
    const ConfoundedMdp tables = m.to_tables(Matrix::Constant(1, 2, 0.5));
    const Trajectory t = testing::random_trajectory(2, 3, 12, rng);
    for (EvidenceMode mode : {EvidenceMode::kInterventional, EvidenceMode::kConditional}) {
      const Vector a = model_posterior(ModelLogTables(m), t, mode);
      const Vector b = batch_posterior(tables.family.latent_prior, t, tables.family, mode, &tables.expert).probabilities();
      CHECK(a.isApprox(b, 1e-12));
    }
  }
}
