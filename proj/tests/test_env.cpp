#include "deconf/env.hpp"
#include "deconf/oracle.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace deconf;

TEST_SUITE("env") {
  TEST_CASE("bandit tables") {
    const ConfoundedMdp b = make_confounded_bandit();
    CHECK(b.family.num_latents == 5);
    CHECK(b.family.num_actions == 5);
    CHECK(b.family.num_states == 2);
    CHECK(b.expert.action_dist(3, 0)(3) == doctest::Approx(0.6));
    const Vector row = b.family.next_state_dist(3, 1, 0).transpose();
    CHECK(row(0) == doctest::Approx(0.75));
    CHECK(row(1) == doctest::Approx(0.25));
    CHECK(b.family.next_state_dist(3, 0, 3)(1) == doctest::Approx(0.75));
    for (LatentId k = 0; k < 5; ++k)
      for (StateId s = 0; s < 2; ++s) CHECK(b.expert.action_dist(k, s).sum() == doctest::Approx(1.0).epsilon(1e-15));
    for (LatentId k = 0; k < 5; ++k) CHECK(b.family.initial_dist(k, 0) == 1.0);
    CHECK(validate_spec(b.family, b.expert).empty());
  }

  TEST_CASE("validation names the broken index") {
    ConfoundedMdp b = make_confounded_bandit();
    b.family.transitions(b.family.transition_row(2, 1, 4), 0) -= 0.1;
    const auto v = validate_spec(b.family, b.expert);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("transitions[2][1][4]") != std::string::npos);

    ConfoundedMdp c = make_confounded_bandit();
    c.family.latent_prior(0) = -0.2;
    c.family.latent_prior(1) += 0.2;
    const auto w = validate_family(c.family);
    REQUIRE_FALSE(w.empty());
    CHECK(w[0].find("latent_prior") != std::string::npos);
  }

  TEST_CASE("expert rollout frequency and determinism") {
    const ConfoundedMdp b = make_confounded_bandit();
    const AgentFactory expert = make_expert_factory(std::make_shared<const ExpertSpec>(b.expert));
    RolloutConfig rc;
    rc.horizon = 100;
    rc.seed = 11;
    const Trajectory t = rollout(b.family, expert, 2, rc);
    CHECK(t.length() == 100);
    CHECK(t == rollout(b.family, expert, 2, rc));
    CHECK(t.latent_truth == 2);

    // Empirical P(freq in [0.5, 0.7]) against the exact binomial probability.
    double exact = 0.0;
    for (int k = 50; k <= 70; ++k)
      exact += std::exp(std::lgamma(101.0) - std::lgamma(k + 1.0) - std::lgamma(101.0 - k) + k * std::log(0.6) +
                        (100 - k) * std::log(0.4));
    const int trials = 2000;
    int inside = 0;
    for (int seed = 0; seed < trials; ++seed) {
      rc.seed = static_cast<std::uint64_t>(seed);
      const Trajectory r = rollout(b.family, expert, 2, rc);
      int hits = 0;
      for (const auto& s : r.steps) hits += s.action == 2;
      inside += hits >= 50 && hits <= 70;
    }
    const double frac = static_cast<double>(inside) / trials;
    CHECK(std::abs(frac - exact) < 4.0 * std::sqrt(exact * (1 - exact) / trials));
  }

  TEST_CASE("zero horizon keeps only the initial state") {
    const ConfoundedMdp b = make_confounded_bandit();
    RolloutConfig rc;
    rc.horizon = 0;
    const Trajectory t = rollout(b.family, make_uniform_factory(5), 1, rc);
    CHECK(t.steps.empty());
    CHECK(t.initial_state == 0);
  }

  TEST_CASE("rollout_many latents follow the prior") {
    const ConfoundedMdp b = make_confounded_bandit();
    RolloutConfig rc;
    rc.horizon = 3;
    rc.episodes = 5000;
    rc.seed = 3;
    const auto trajs = rollout_many(b.family, make_uniform_factory(5), rc);
    std::vector<int> counts(5, 0);
    for (const auto& t : trajs) counts[static_cast<std::size_t>(*t.latent_truth)]++;
    for (int c : counts) CHECK(std::abs(c / 5000.0 - 0.2) < 0.025);
  }

  TEST_CASE("json round trips") {
    const ConfoundedMdp b = make_confounded_bandit();
    const nlohmann::json j = to_json(b);
    CHECK(j.at("schema_version") == 1);
    const ConfoundedMdp back = confounded_mdp_from_json(j);
    CHECK(back.family.transitions == b.family.transitions);
    CHECK(back.expert.policy == b.expert.policy);
    CHECK(back.family.latent_prior == b.family.latent_prior);

    Rng rng(5);
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 4; ++i) trajs.push_back(testing::random_trajectory(2, 5, i, rng));
    trajs[1].latent_truth = 3;
    std::stringstream ss;
    write_trajectories(ss, trajs);
    CHECK(read_trajectories(ss) == trajs);
    CHECK(trajectory_to_jsonl(trajs[1]).find("\"latent\":3") != std::string::npos);
  }

  TEST_CASE("malformed inputs are rejected") {
    std::stringstream bad("{\"latent\":null,\"s0\":0,\"steps\":[[1]]}\n");
    CHECK_THROWS_AS(read_trajectories(bad), Error);
    nlohmann::json j = to_json(make_confounded_bandit());
    j["schema_version"] = 99;
    CHECK_THROWS_AS(confounded_mdp_from_json(j), Error);
    const ConfoundedMdp b = make_confounded_bandit();
    CHECK_THROWS_AS(check_bounds(b.family, 0, 5, 0), Error);
    CHECK_THROWS_AS(check_bounds(b.family, 2, 0, 0), Error);
  }
}
