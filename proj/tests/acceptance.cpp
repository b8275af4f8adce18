// Acceptance criteria A1-A8. Usage: acceptance [A1 ... A8]; no arguments runs all.
// Prints one PASS/FAIL line per criterion; exit status is nonzero if any fails.

#include "deconf/cli.hpp"
#include "deconf/oracle.hpp"
#include "deconf/report.hpp"
#include "deconf/tier1.hpp"
#include "deconf/train.hpp"
#include "helpers.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

using namespace deconf;
namespace fs = std::filesystem;

namespace {

constexpr int kHorizon = 100;
constexpr std::size_t kWindowStart = 80;
constexpr int kSeeds = 10;
// Delusion gap of the exact oracles (posterior-sampling actors), measured over 4 x 10^4
// episodes: 0.2713, 0.2656, 0.2706, 0.2648.
constexpr double kPinnedDelusionGap = 0.268;

const auto kBandit = std::make_shared<const ConfoundedMdp>(make_confounded_bandit());

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok) { pass = pass && ok; }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

AgentFactory expert_factory() { return make_expert_factory(std::make_shared<const ExpertSpec>(kBandit->expert)); }

std::vector<Trajectory> experts(int episodes, std::uint64_t seed) {
  RolloutConfig rc;
  rc.horizon = kHorizon;
  rc.episodes = episodes;
  rc.seed = seed;
  return rollout_many(kBandit->family, expert_factory(), rc);
}

DeployResult run(const AgentFactory& policy, int episodes, std::uint64_t seed) {
  DeployConfig dc;
  dc.horizon = kHorizon;
  dc.episodes = episodes;
  dc.seed = seed;
  return deploy(policy, *kBandit, dc);
}

double window_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t t = kWindowStart; t < v.size(); ++t) s += v[t];
  return s / static_cast<double>(v.size() - kWindowStart);
}

double mean_count(const OnlineSeries& s) {
  double c = 0.0;
  for (int n : s.best_arm_counts) c += n;
  return c / static_cast<double>(s.best_arm_counts.size());
}

struct OnlineWindow {
  double kl = 0.0;
  double best_arm = 0.0;
};

OnlineWindow online_window(const AgentFactory& policy, int episodes, std::uint64_t seed) {
  const DeployResult r = run(policy, episodes, seed);
  return {window_mean(metric_kl_to_expert(r.traces, kBandit->expert)),
          window_mean(metric_online_series(r.traces, kBandit->expert).best_arm_prob)};
}

ExpertDataset training_data(std::uint64_t seed) {
  return {2, 5, experts(1000, Rng::derive_seed(seed, StreamTag::kDataset, 0))};
}

std::vector<Trajectory> evaluation_data(std::uint64_t seed) {
  return experts(100, Rng::derive_seed(seed, StreamTag::kDataset, 1));
}

Outcome a1() {
  Outcome o;
  const OnlineWindow w = online_window(make_oracle_factory(InterventionalKind{}, kBandit), 2000, 1);
  o.require(w.kl < 0.01);
  o.require(std::abs(w.best_arm - 0.6) <= 0.03);
  o.detail << "kl_window=" << num(w.kl) << " (<0.01) best_arm_window=" << num(w.best_arm) << " (0.6+-0.03)";
  return o;
}

Outcome a2() {
  Outcome o;
  const double inter = online_window(make_oracle_factory(InterventionalKind{}, kBandit), 2000, 2).best_arm;
  const double cond = online_window(make_oracle_factory(ConditionalKind{}, kBandit), 2000, 2).best_arm;
  const double gap = inter - cond;
  o.require(gap >= 0.1);
  o.require(std::abs(gap - kPinnedDelusionGap) <= 0.02);
  o.detail << "interventional=" << num(inter) << " conditional=" << num(cond) << " gap=" << num(gap)
           << " (>=0.1, pinned " << kPinnedDelusionGap << "+-0.02)";
  return o;
}

Outcome a3() {
  Outcome o;
  const AgentFactory oracle = make_oracle_factory(InterventionalKind{}, kBandit);
  const EnvironmentAccess env(kBandit->family);
  double tv = 0.0, count = 0.0, oracle_count = 0.0, nll = 0.0, oracle_nll = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const TrainResult r = train_tier2(env, training_data(seed), TrainOptions{}, seed);
    const AgentFactory learned = r.policy().factory();
    const auto eval = evaluation_data(seed);
    tv += mean_tv_on_experts(learned, oracle, eval);
    count += mean_count(metric_online_series(run(learned, 1000, seed).traces, kBandit->expert));
    oracle_count += mean_count(metric_online_series(run(oracle, 1000, seed).traces, kBandit->expert));
    nll += metric_imitation_loss(learned, eval).mean;
    oracle_nll += metric_imitation_loss(oracle, eval).mean;
  }
  tv /= kSeeds;
  count /= kSeeds;
  oracle_count /= kSeeds;
  nll /= kSeeds;
  oracle_nll /= kSeeds;
  o.require(tv <= 0.05);
  o.require(std::abs(count - oracle_count) <= 3.0);
  o.require(std::abs(nll - oracle_nll) <= 0.05);
  o.detail << "tv=" << num(tv) << " (<=0.05) count=" << num(count) << " vs " << num(oracle_count)
           << " (+-3) nll=" << num(nll) << " vs " << num(oracle_nll) << " (+-0.05)";
  return o;
}

Outcome a4() {
  Outcome o;
  const AgentFactory oracle = make_oracle_factory(ConditionalKind{}, kBandit);
  std::vector<std::vector<double>> learned_series, oracle_series;
  for (int s = 0; s < kSeeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const TrainResult r = naive_bc_baseline(training_data(seed), TrainOptions{}, seed);
    learned_series.push_back(metric_online_series(run(r.policy().factory(), 1000, seed).traces, kBandit->expert).best_arm_prob);
    oracle_series.push_back(metric_online_series(run(oracle, 1000, seed).traces, kBandit->expert).best_arm_prob);
  }
  const auto a = smooth(across_seeds(learned_series).mean, 20);
  const auto b = smooth(across_seeds(oracle_series).mean, 20);
  double worst = 0.0;
  std::size_t at = 0;
  for (std::size_t t = 0; t < a.size(); ++t)
    if (std::abs(a[t] - b[t]) > worst) {
      worst = std::abs(a[t] - b[t]);
      at = t;
    }
  o.require(worst <= 0.05);
  o.detail << "max_t |naive_bc - conditional| = " << num(worst) << " at t=" << at << " (<=0.05); window "
           << num(window_mean(a)) << " vs " << num(window_mean(b));
  return o;
}

Outcome a5() {
  Outcome o;
  constexpr int kEpisodes = 500;
  constexpr int kLength = 100000;
  const AgentFactory expert = expert_factory();
  std::vector<TableEstimate> chains;
  std::vector<LatentId> truth;
  Rng latent_rng = Rng::stream(5, StreamTag::kDataset, 0);
  for (int e = 0; e < kEpisodes; ++e) {
    const LatentId theta = latent_rng.categorical(kBandit->family.latent_prior);
    RolloutConfig rc;
    rc.horizon = kLength;
    rc.seed = Rng::derive_seed(5, StreamTag::kDataset, 1 + static_cast<std::uint64_t>(e));
    chains.push_back(TableEstimate::from_trajectory(rollout(kBandit->family, expert, theta, rc), 2, 5));
    truth.push_back(theta);
  }
  const Tier1Estimate est = tier1_mle_identify(std::move(chains), 0.05);
  o.require(est.components.size() == 5);
  double worst_weight = 0.0, worst_table = 0.0;
  bool pure = true;
  std::vector<bool> covered(5, false);
  for (const auto& c : est.components) {
    const LatentId theta = truth[c.members.front()];
    for (std::size_t m : c.members) pure = pure && truth[m] == theta;
    covered[static_cast<std::size_t>(theta)] = true;
    worst_weight = std::max(worst_weight, std::abs(c.weight - 0.2));
    for (StateId s = 0; s < 2; ++s) {
      worst_table = std::max(worst_table, (c.tables.policy.row(s) - kBandit->expert.action_dist(theta, s)).cwiseAbs().maxCoeff());
      for (ActionId a = 0; a < 5; ++a)
        worst_table = std::max(worst_table, (c.tables.dynamics.row(s * 5 + a) - kBandit->family.next_state_dist(theta, s, a))
                                                .cwiseAbs()
                                                .maxCoeff());
    }
  }
  for (bool c : covered) pure = pure && c;
  o.require(pure);
  o.require(worst_weight <= 0.05);
  o.require(worst_table <= 0.01);
  const OnlineWindow w = online_window(interventional_policy_from_estimate(est).factory(), 2000, 1);
  o.require(w.kl < 0.01);
  o.require(std::abs(w.best_arm - 0.6) <= 0.05);
  o.detail << "components=" << est.components.size() << " one_latent_each=" << (pure ? "yes" : "no")
           << " max|w-0.2|=" << num(worst_weight) << " (<=0.05) max_table_err=" << num(worst_table)
           << " (<=0.01) kl_window=" << num(w.kl) << " (<0.01) best_arm_window=" << num(w.best_arm) << " (0.6+-0.05)";
  return o;
}

Outcome a6() {
  Outcome o;
  Rng rng(6);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) worst = std::max(worst, testing::random_gradient_instance(rng));
  o.require(worst <= 1e-4);
  o.detail << "100 instances x {online step, online episode, offline}: max relative error " << num(worst)
           << " (<=1e-4)";
  return o;
}

Outcome a7() {
  Outcome o;
  Rng rng(7);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const int K = 1 + rng.uniform_int(6), S = 1 + rng.uniform_int(4), A = 1 + rng.uniform_int(4);
    const ConfoundedMdp m = testing::random_family(K, S, A, rng);
    const Trajectory t = testing::random_trajectory(S, A, rng.uniform_int(300), rng);
    for (EvidenceMode mode : {EvidenceMode::kInterventional, EvidenceMode::kConditional}) {
      Belief seq = prior_belief(m.family.latent_prior);
      for (std::size_t u = 0; u < t.length(); ++u)
        seq = update(seq, t.state_at(u), t.steps[u].action, t.steps[u].next_state, m.family, mode, &m.expert);
      const Belief batch = batch_posterior(m.family.latent_prior, t, m.family, mode, &m.expert);
      worst = std::max(worst, (seq.log_probs() - batch.log_probs()).cwiseAbs().maxCoeff());
    }
  }
  o.require(worst <= 1e-12);

  const Belief prior = prior_belief(kBandit->family.latent_prior);
  auto post = [&](StateId s_next, EvidenceMode mode) {
    return update(prior, 0, 2, s_next, kBandit->family, mode, &kBandit->expert).log_probs();
  };
  const Vector i1 = post(1, EvidenceMode::kInterventional);
  const Vector c1 = post(1, EvidenceMode::kConditional);
  const Vector i0 = post(0, EvidenceMode::kInterventional);
  double example = 0.0;
  for (Index k = 0; k < 5; ++k) {
    example = std::max(example, std::abs(i1(k) - std::log(k == 2 ? 3.0 / 7 : 1.0 / 7)));
    example = std::max(example, std::abs(c1(k) - std::log(k == 2 ? 9.0 / 11 : 1.0 / 22)));
    example = std::max(example, std::abs(i0(k) - std::log(k == 2 ? 1.0 / 13 : 3.0 / 13)));
  }
  o.require(example <= 1e-12);
  o.detail << "400 random sequential-vs-batch comparisons: max log error " << num(worst)
           << " (<=1e-12); 3/7, 9/11, 1/13 examples: max log error " << num(example);
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream f(entry.path(), std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    files[fs::relative(entry.path(), root).string()] = s.str();
  }
  return files;
}

// gen-expert -> train (tier2, naive-bc) -> eval -> compare, entirely through the CLI.
bool pipeline(const fs::path& dir, int threads, std::string& error) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cfg = (dir / "run.cfg").string();
  std::ofstream(cfg) << "seeds = 0,1\nexpert_episodes = 200\neval_episodes = 200\neval_expert_episodes = 50\n"
                        "train_steps = 300\nonline_refine_steps = 50\nmonitor_interval = 100\nmonitor_episodes = 20\n"
                     << "threads = " << threads << "\nout_dir = " << (dir / "out").string() << "\n";
  const std::string out = (dir / "out").string();
  const std::vector<std::vector<std::string>> steps = {
      {"gen-expert", "--config", cfg},
      {"train", "--config", cfg, "--algo", "tier2", "--data", out + "/experts.jsonl"},
      {"train", "--config", cfg, "--algo", "naive-bc", "--data", out + "/experts.jsonl"},
      {"eval", "--config", cfg, "--policy", "checkpoint", "--checkpoints", out + "/tier2", "--out", out + "/eval-tier2",
       "--traces"},
      {"eval", "--config", cfg, "--policy", "checkpoint", "--checkpoints", out + "/naive-bc", "--out",
       out + "/eval-naive-bc"},
      {"eval", "--config", cfg, "--policy", "oracle-interventional"},
      {"compare", out + "/eval-tier2/summary.json", out + "/eval-naive-bc/summary.json", "--out", out + "/compare.json"},
  };
  for (auto args : steps) {
    args.insert(args.begin(), "deconf");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream sout, serr;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), sout, serr);
    if (code != 0) {
      error = args[1] + " exited " + std::to_string(code) + ": " + serr.str();
      return false;
    }
  }
  return true;
}

Outcome a8() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "deconf_acceptance_a8";
  std::string error;
  std::map<std::string, std::string> runs[3];
  const int threads[3] = {2, 2, 1};
  for (int i = 0; i < 3; ++i) {
    const fs::path dir = root / ("run" + std::to_string(i));
    if (!pipeline(dir, threads[i], error)) {
      o.require(false);
      o.detail << error;
      return o;
    }
    runs[i] = snapshot(dir / "out");
  }
  auto differing = [](const auto& a, const auto& b) {
    std::size_t n = 0;
    for (const auto& [name, bytes] : a) n += !b.count(name) || b.at(name) != bytes;
    return n + (a.size() != b.size());
  };
  const std::size_t d01 = differing(runs[0], runs[1]);
  const std::size_t d02 = differing(runs[0], runs[2]);
  o.require(d01 == 0);
  o.require(runs[0].size() >= 20);
  o.detail << runs[0].size() << " files byte-identical across two runs: " << (d01 == 0 ? "yes" : "no")
           << "; identical with threads=1: " << (d02 == 0 ? "yes" : "no");
  o.require(d02 == 0);
  fs::remove_all(root);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> all = {
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5}, {"A6", a6}, {"A7", a7}, {"A8", a8}};
  std::vector<std::string> wanted(argv + 1, argv + argc);
  bool ok = true;
  for (const auto& [id, fn] : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s  %s  [%.1fs]\n", id.c_str(), out.pass ? "PASS" : "FAIL", out.detail.str().c_str(), secs);
    std::fflush(stdout);
    ok = ok && out.pass;
  }
  return ok ? 0 : 1;
}
