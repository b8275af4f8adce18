#include "deconf/belief.hpp"
#include "deconf/oracle.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace deconf;

namespace {
const ConfoundedMdp kBandit = make_confounded_bandit();
}

TEST_SUITE("belief") {
  TEST_CASE("priors") {
    const Belief b = prior_belief(kBandit.family.latent_prior);
    for (Index k = 0; k < 5; ++k) CHECK(b.log_probs()(k) == doctest::Approx(std::log(0.2)));
    Vector point(3);
    point << 1, 0, 0;
    const Belief p = prior_belief(point);
    CHECK(p.log_probs()(0) == 0.0);
    CHECK(std::isinf(p.log_probs()(1)));
    CHECK(p.log_probs()(1) < 0);
    Vector bad(2);
    bad << 0.5, 0.6;
    CHECK_THROWS_AS(prior_belief(bad), Error);
  }

  TEST_CASE("single-step posteriors") {
    const Belief prior = prior_belief(kBandit.family.latent_prior);
    const Vector i1 = update(prior, 0, 2, 1, kBandit.family, EvidenceMode::kInterventional).probabilities();
    CHECK(i1(2) == doctest::Approx(3.0 / 7).epsilon(1e-14));
    CHECK(i1(0) == doctest::Approx(1.0 / 7).epsilon(1e-14));
    const Vector c1 =
        update(prior, 0, 2, 1, kBandit.family, EvidenceMode::kConditional, &kBandit.expert).probabilities();
    CHECK(c1(2) == doctest::Approx(9.0 / 11).epsilon(1e-14));
    CHECK(c1(4) == doctest::Approx(1.0 / 22).epsilon(1e-14));
    const Vector i0 = update(prior, 0, 2, 0, kBandit.family, EvidenceMode::kInterventional).probabilities();
    CHECK(i0(2) == doctest::Approx(1.0 / 13).epsilon(1e-14));
    CHECK(i0(3) == doctest::Approx(3.0 / 13).epsilon(1e-14));
  }

  TEST_CASE("log evidence accumulates the marginal likelihood") {
    const Belief prior = prior_belief(kBandit.family.latent_prior);
    CHECK(prior.log_evidence() == doctest::Approx(0.0));
    const Belief one = update(prior, 0, 2, 1, kBandit.family, EvidenceMode::kInterventional);
    CHECK(one.log_evidence() == doctest::Approx(std::log(0.2 * 0.75 + 0.8 * 0.25)).epsilon(1e-14));
    const Belief two = update(one, 1, 2, 1, kBandit.family, EvidenceMode::kInterventional);
    CHECK(two.log_evidence() == doctest::Approx(std::log(0.2 * 0.75 * 0.75 + 0.8 * 0.25 * 0.25)).epsilon(1e-14));
    CHECK(two.probabilities()(2) == doctest::Approx(9.0 / 13).epsilon(1e-14));
  }

  TEST_CASE("conditional mode needs a policy") {
    const Belief prior = prior_belief(kBandit.family.latent_prior);
    try {
      update(prior, 0, 2, 1, kBandit.family, EvidenceMode::kConditional);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kUsage);
    }
  }

  TEST_CASE("impossible evidence") {
    ConfoundedMdp m = make_confounded_bandit();
    Vector point = Vector::Zero(5);
    point(0) = 1.0;
    m.family.next_state_dist(0, 0, 0) << 1.0, 0.0;
    CHECK_THROWS_AS(update(prior_belief(point), 0, 0, 1, m.family, EvidenceMode::kInterventional),
                    ImpossibleEvidence);
  }

  TEST_CASE("empty trajectory leaves the prior") {
    Trajectory t;
    const Belief b = batch_posterior(kBandit.family.latent_prior, t, kBandit.family, EvidenceMode::kConditional,
                                     &kBandit.expert);
    CHECK(b.probabilities().isApprox(kBandit.family.latent_prior));
  }

  TEST_CASE("batch equals sequential") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      const int K = 1 + rng.uniform_int(5), S = 1 + rng.uniform_int(4), A = 1 + rng.uniform_int(4);
      const ConfoundedMdp m = testing::random_family(K, S, A, rng);
      const Trajectory t = testing::random_trajectory(S, A, rng.uniform_int(200), rng);
      for (EvidenceMode mode : {EvidenceMode::kInterventional, EvidenceMode::kConditional}) {
        Belief seq = prior_belief(m.family.latent_prior);
        for (std::size_t i = 0; i < t.length(); ++i)
          seq = update(seq, t.state_at(i), t.steps[i].action, t.steps[i].next_state, m.family, mode, &m.expert);
        const Belief batch = batch_posterior(m.family.latent_prior, t, m.family, mode, &m.expert);
        CHECK((seq.log_probs() - batch.log_probs()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(seq.log_probs() == batch.log_probs());
        CHECK(batch.probabilities().sum() == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("diagnostics") {
    const BeliefDiagnostics u = belief_diagnostics(prior_belief(kBandit.family.latent_prior));
    CHECK(u.entropy == doctest::Approx(std::log(5.0)));
    CHECK(u.argmax == 0);
    Vector point = Vector::Zero(4);
    point(2) = 1.0;
    const BeliefDiagnostics p = belief_diagnostics(prior_belief(point));
    CHECK(p.entropy == 0.0);
    CHECK(p.max_prob == 1.0);
    CHECK(p.argmax == 2);
    Vector b(5);
    b << 3.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7;
    const BeliefDiagnostics d = belief_diagnostics(prior_belief(b));
    CHECK(d.argmax == 0);
    CHECK(d.max_prob == doctest::Approx(3.0 / 7));
  }

  TEST_CASE("posterior concentrates on the true latent") {
    const AgentFactory expert = make_expert_factory(std::make_shared<const ExpertSpec>(kBandit.expert));
    int correct = 0;
    for (int seed = 0; seed < 200; ++seed) {
      RolloutConfig rc;
      rc.horizon = 1000;
      rc.seed = static_cast<std::uint64_t>(seed);
      const Trajectory t = rollout(kBandit.family, expert, 4, rc);
      const Belief b = batch_posterior(kBandit.family.latent_prior, t, kBandit.family, EvidenceMode::kInterventional);
      correct += belief_diagnostics(b).argmax == 4;
    }
    CHECK(correct == 200);
  }

  TEST_CASE("permuting latents permutes the posterior") {
    Rng rng(8);
    const ConfoundedMdp m = testing::random_family(4, 3, 2, rng);
    const std::vector<int> perm{2, 0, 3, 1};
    ConfoundedMdp p = m;
    for (int k = 0; k < 4; ++k) {
      p.family.latent_prior(perm[k]) = m.family.latent_prior(k);
      for (int s = 0; s < 3; ++s) {
        p.expert.action_dist(perm[k], s) = m.expert.action_dist(k, s);
        for (int a = 0; a < 2; ++a) p.family.next_state_dist(perm[k], s, a) = m.family.next_state_dist(k, s, a);
      }
    }
    const Trajectory t = testing::random_trajectory(3, 2, 30, rng);
    const Vector a = batch_posterior(m.family.latent_prior, t, m.family, EvidenceMode::kConditional, &m.expert)
                         .probabilities();
    const Vector b = batch_posterior(p.family.latent_prior, t, p.family, EvidenceMode::kConditional, &p.expert)
                         .probabilities();
    for (int k = 0; k < 4; ++k) CHECK(b(perm[k]) == doctest::Approx(a(k)).epsilon(1e-12));
  }
}
