#include "deconf/cli.hpp"

#include "deconf/format.hpp"
#include "deconf/oracle.hpp"
#include "deconf/tier1.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace deconf {
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kUsage, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kUsage, "cannot write " + path.string());
  f << bytes;
  if (!f) throw Error(ErrorKind::kUsage, "write failed for " + path.string());
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kValidation, path + ": " + e.what());
  }
}

std::vector<Trajectory> load_trajectories(const std::string& path, const MdpFamilySpec& family) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kUsage, "cannot open dataset " + path);
  auto trajs = read_trajectories(f);
  for (const auto& t : trajs) {
    if (t.length() == 0) continue;
    StateId s = t.initial_state;
    for (const auto& step : t.steps) {
      check_bounds(family, s, step.action, step.next_state);
      s = step.next_state;
    }
  }
  return trajs;
}

ExpertDataset make_dataset(const MdpFamilySpec& family, std::vector<Trajectory> trajectories) {
  ExpertDataset d{family.num_states, family.num_actions, std::move(trajectories)};
  d.validate();
  return d;
}

std::vector<Trajectory> generate_experts(const ConfoundedMdp& truth, int horizon, int episodes, std::uint64_t seed) {
  RolloutConfig rc;
  rc.horizon = horizon;
  rc.episodes = episodes;
  rc.seed = seed;
  return rollout_many(truth.family, make_expert_factory(std::make_shared<const ExpertSpec>(truth.expert)), rc);
}

// Held-out expert trajectories used by metrics, independent of training data.
std::vector<Trajectory> evaluation_experts(const RunConfig& config, const ConfoundedMdp& truth, std::uint64_t seed,
                                           const std::optional<std::string>& data) {
  if (data) return load_trajectories(*data, truth.family);
  return generate_experts(truth, config.horizon, config.eval_expert_episodes,
                          Rng::derive_seed(seed, StreamTag::kDataset, 1));
}

ActorStyle actor_style(const RunConfig& config) {
  return config.actor == "marginal" ? ActorStyle::kMarginal : ActorStyle::kPosteriorSampling;
}

// Runs `task(i)` for i in [0, n) on up to `threads` workers; rethrows the first failure
// by index so error reporting does not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

}  // namespace

std::uint64_t fnv1a_64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::shared_ptr<const ConfoundedMdp> load_environment(const std::string& env) {
  auto mdp = env == "bandit" ? make_confounded_bandit() : confounded_mdp_from_json(read_json(env));
  const auto violations = validate_spec(mdp.family, mdp.expert);
  if (!violations.empty()) throw Error(ErrorKind::kValidation, env + ": " + violations.front());
  return std::make_shared<const ConfoundedMdp>(std::move(mdp));
}

std::string cmd_gen_expert(const RunConfig& config, const std::string& path) {
  config.validate();
  const auto truth = load_environment(config.env);
  const auto trajs = generate_experts(*truth, config.horizon, config.expert_episodes, config.data_seed);

  std::ostringstream bytes;
  write_trajectories(bytes, trajs);
  write_file(path, bytes.str());

  std::vector<double> latent_counts(static_cast<std::size_t>(truth->family.num_latents), 0.0);
  double best = 0.0, steps = 0.0;
  for (const auto& t : trajs) {
    const LatentId k = *t.latent_truth;
    latent_counts[static_cast<std::size_t>(k)] += 1.0;
    for (std::size_t i = 0; i < t.length(); ++i) {
      if (t.steps[i].action == best_action(truth->expert, k, t.state_at(i))) best += 1.0;
      steps += 1.0;
    }
  }
  std::ostringstream out;
  out << "wrote " << trajs.size() << " episodes to " << path << '\n';
  out << "latent_fractions";
  for (double c : latent_counts) out << ' ' << format_number(c / static_cast<double>(trajs.size()));
  out << '\n';
  out << "best_arm_rate " << format_number(steps > 0 ? best / steps : 0.0) << '\n';
  out << "fnv1a64 " << hex64(fnv1a_64(bytes.str())) << '\n';
  return out.str();
}

std::string cmd_train(const RunConfig& config, const std::string& algo, const std::optional<std::string>& data,
                      const std::string& out_dir) {
  config.validate();
  if (algo != "tier2" && algo != "tier1" && algo != "naive-bc")
    throw Error(ErrorKind::kUsage, "unknown algorithm '" + algo + "'");
  if (algo != "tier2" && !data) throw Error(ErrorKind::kUsage, algo + " needs an expert dataset (--data)");
  const auto truth = load_environment(config.env);
  const TrainOptions options = config.train_options();

  std::optional<ExpertDataset> shared;
  if (data) shared = make_dataset(truth->family, load_trajectories(*data, truth->family));

  std::vector<std::string> messages(config.seeds.size());
  parallel_for(config.seeds.size(), config.resolved_threads(), [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    ExpertDataset experts = shared ? *shared
                                   : make_dataset(truth->family,
                                                  generate_experts(*truth, config.horizon, config.expert_episodes,
                                                                   Rng::derive_seed(seed, StreamTag::kDataset, 0)));
    TrainingMonitor monitor;
    std::vector<Trajectory> monitor_experts;
    if (config.monitor_interval > 0) {
      monitor_experts = evaluation_experts(config, *truth, seed, std::nullopt);
      monitor.interval = config.monitor_interval;
      monitor.evaluate = [&](const ImitatorPolicy& policy) {
        const AgentFactory factory = policy.factory(actor_style(config));
        DeployConfig dc;
        dc.horizon = config.horizon;
        dc.episodes = config.monitor_episodes;
        dc.seed = Rng::derive_seed(seed, StreamTag::kDataset, 2);
        const DeployResult online = deploy(factory, *truth, dc);
        const OnlineSeries series = metric_online_series(online.traces, truth->expert);
        double count = 0.0;
        for (int c : series.best_arm_counts) count += c;
        const auto on_expert = metric_best_arm_prob_on_expert(factory, monitor_experts, truth->expert);
        double prob = 0.0;
        for (double p : on_expert) prob += p;
        return MonitorPoint{count / static_cast<double>(series.best_arm_counts.size()),
                            prob / static_cast<double>(on_expert.size())};
      };
    }

    TrainResult result;
    if (algo == "tier2") {
      result = train_tier2(EnvironmentAccess(truth->family), experts, options, seed, monitor);
    } else if (algo == "tier1") {
      result = train_tier1_offline(experts, options, seed, monitor);
    } else {
      result = naive_bc_baseline(experts, options, seed, monitor);
    }
    const std::string stem = "seed" + std::to_string(seed);
    write_file(fs::path(out_dir) / ("checkpoint_" + stem + ".json"),
               checkpoint_to_json(result, algo, options, seed).dump(1) + "\n");
    write_file(fs::path(out_dir) / ("train_log_" + stem + ".csv"), train_log_csv(result.log));
    std::ostringstream msg;
    msg << algo << " seed " << seed << ": " << result.log.size() << " log rows";
    if (!result.log.empty()) {
      msg << ", final elbo " << format_number(result.log.back().elbo) << ", imitation loss "
          << format_number(result.log.back().imitation_loss);
    }
    msg << '\n';
    messages[i] = msg.str();
  });
  std::string out;
  for (const auto& m : messages) out += m;
  out += "wrote checkpoints to " + out_dir + "\n";
  return out;
}

std::string cmd_eval(const RunConfig& config, const std::string& policy,
                     const std::optional<std::string>& checkpoints, const std::optional<std::string>& data,
                     const std::string& out_dir, bool traces) {
  config.validate();
  const auto truth = load_environment(config.env);
  const ActorStyle style = actor_style(config);

  std::string policy_name = policy;
  auto resolve = [&](std::uint64_t seed) -> AgentFactory {
    if (policy == "expert") return make_expert_factory(std::make_shared<const ExpertSpec>(truth->expert));
    if (policy == "oracle-conditional") return make_oracle_factory(ConditionalKind{}, truth, style);
    if (policy == "oracle-interventional") return make_oracle_factory(InterventionalKind{}, truth, style);
    if (policy == "random") return make_uniform_factory(truth->family.num_actions);
    if (policy == "checkpoint") {
      if (!checkpoints) throw Error(ErrorKind::kUsage, "--policy checkpoint needs --checkpoints <dir>");
      const auto path = fs::path(*checkpoints) / ("checkpoint_seed" + std::to_string(seed) + ".json");
      if (!fs::exists(path)) throw Error(ErrorKind::kUsage, "missing checkpoint " + path.string());
      Checkpoint ckpt = checkpoint_from_json(read_json(path.string()));
      if (ckpt.seed != seed) throw Error(ErrorKind::kValidation, path.string() + ": seed mismatch");
      if (ckpt.result.model.num_states != truth->family.num_states ||
          ckpt.result.model.num_actions != truth->family.num_actions)
        throw Error(ErrorKind::kValidation, path.string() + ": model shape does not match the environment");
      policy_name = "checkpoint:" + ckpt.algo;
      return ckpt.result.policy().factory(style);
    }
    throw Error(ErrorKind::kUsage, "unknown policy '" + policy + "'");
  };

  // Resolve every seed up front so usage errors surface before any work.
  std::vector<AgentFactory> factories;
  for (std::uint64_t seed : config.seeds) factories.push_back(resolve(seed));

  const int threads = config.resolved_threads();
  std::vector<EvalReport> reports;
  std::optional<DeployResult> first;
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    const std::uint64_t seed = config.seeds[i];
    DeployConfig dc;
    dc.horizon = config.horizon;
    dc.episodes = config.eval_episodes;
    dc.seed = seed;
    dc.threads = threads;
    const auto experts = evaluation_experts(config, *truth, seed, data);
    DeployResult kept;
    reports.push_back(evaluate(factories[i], *truth, experts, dc, config.window_start, i == 0 ? &kept : nullptr));
    if (i == 0) first = std::move(kept);
  }

  auto series = [&](auto member) {
    std::vector<std::vector<double>> per_seed;
    for (const auto& r : reports) per_seed.push_back(r.*member);
    return series_csv(across_seeds(per_seed), config.smoothing_window);
  };
  const fs::path dir(out_dir);
  write_file(dir / "best_arm_expert.csv", series(&EvalReport::best_arm_prob_expert));
  write_file(dir / "best_arm_online.csv", series(&EvalReport::best_arm_prob_online));
  write_file(dir / "imitation_loss.csv", series(&EvalReport::imitation_loss));
  write_file(dir / "kl_to_expert.csv", series(&EvalReport::kl_to_expert));
  write_file(dir / "best_arm_count.csv", best_arm_count_csv(reports));
  const nlohmann::json summary = summary_json(policy_name, reports);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  if (config.raster && first) write_file(dir / "raster.csv", raster_csv(first->traces));
  if (traces && first) write_file(dir / "traces.jsonl", traces_jsonl(first->traces));

  std::ostringstream out;
  const auto& m = summary.at("metrics");
  out << policy_name << " over " << reports.size() << " seed(s)\n";
  for (const auto& [name, stat] : m.items())
    out << "  " << name << " " << format_number(stat.at("mean").get<double>()) << " +- "
        << format_number(stat.at("sem").get<double>()) << '\n';
  out << "wrote metrics to " << out_dir << '\n';
  return out.str();
}

CompareOutcome cmd_compare(const std::string& summary_a, const std::string& summary_b,
                           const CompareThresholds& thresholds) {
  return compare_summaries(read_json(summary_a), read_json(summary_b), thresholds);
}

namespace {

// Registers one --flag per config key on `app`; values are stored as strings and applied
// after the config file so flags win.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "config file (key = value)");
    for (const auto& key : RunConfig::keys()) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      options[key] = app->add_option("--" + flag, values[key], RunConfig::describe(key));
    }
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) c.set(key, values.at(key));
    c.validate();
    return c;
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"deconf: confounded imitation learning experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for all subcommands");

  ConfigFlags gen_flags, train_flags, eval_flags, validate_flags;

  auto* gen = app.add_subcommand("gen-expert", "sample an expert dataset (JSON lines)");
  gen_flags.attach(gen);
  std::string gen_out;
  gen->add_option("--out", gen_out, "dataset path (default <out_dir>/experts.jsonl)");

  auto* train = app.add_subcommand("train", "train one checkpoint per seed");
  train_flags.attach(train);
  std::string algo;
  std::string train_data, train_out;
  train->add_option("--algo", algo, "tier2 | tier1 | naive-bc")
      ->required()
      ->check(CLI::IsMember({"tier2", "tier1", "naive-bc"}));
  train->add_option("--data", train_data, "expert dataset (JSON lines)");
  train->add_option("--out", train_out, "checkpoint directory (default <out_dir>/<algo>)");

  auto* eval = app.add_subcommand("eval", "evaluate a policy and write metric files");
  eval_flags.attach(eval);
  std::string policy, checkpoints, eval_data, eval_out;
  bool traces = false;
  eval->add_option("--policy", policy, "checkpoint | expert | oracle-conditional | oracle-interventional | random")
      ->required()
      ->check(CLI::IsMember({"checkpoint", "expert", "oracle-conditional", "oracle-interventional", "random"}));
  eval->add_option("--checkpoints", checkpoints, "directory with checkpoint_seed<s>.json");
  eval->add_option("--data", eval_data, "evaluation expert trajectories (default: sampled per seed)");
  eval->add_option("--out", eval_out, "metrics directory (default <out_dir>/eval-<policy>)");
  eval->add_flag("--traces", traces, "also write per-step traces with beliefs (traces.jsonl)");

  auto* compare = app.add_subcommand("compare", "diff two summary.json files");
  std::string summary_a, summary_b, compare_out;
  std::optional<double> max_abs_diff;
  std::vector<std::string> min_diffs;
  compare->add_option("a", summary_a, "first summary")->required();
  compare->add_option("b", summary_b, "second summary")->required();
  compare->add_option("--max-abs-diff", max_abs_diff, "fail if any |a - b| exceeds this");
  compare->add_option("--min-diff", min_diffs, "metric=value: fail unless a - b >= value");
  compare->add_option("--out", compare_out, "also write the diff JSON here");

  auto* validate = app.add_subcommand("validate", "check a config and an environment spec");
  validate_flags.attach(validate);
  std::string spec_path, dump_path;
  validate->add_option("--spec", spec_path, "family JSON to validate (default: the configured env)");
  validate->add_option("--dump-bandit", dump_path, "write the built-in bandit spec as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kUsage);
  }

  try {
    if (gen->parsed()) {
      const RunConfig c = gen_flags.resolve();
      out << cmd_gen_expert(c, gen_out.empty() ? (fs::path(c.out_dir) / "experts.jsonl").string() : gen_out);
    } else if (train->parsed()) {
      const RunConfig c = train_flags.resolve();
      const std::optional<std::string> data = train_data.empty() ? std::nullopt : std::optional(train_data);
      out << cmd_train(c, algo, data, train_out.empty() ? (fs::path(c.out_dir) / algo).string() : train_out);
    } else if (eval->parsed()) {
      const RunConfig c = eval_flags.resolve();
      const std::optional<std::string> ck = checkpoints.empty() ? std::nullopt : std::optional(checkpoints);
      const std::optional<std::string> data = eval_data.empty() ? std::nullopt : std::optional(eval_data);
      out << cmd_eval(c, policy, ck, data,
                      eval_out.empty() ? (fs::path(c.out_dir) / ("eval-" + policy)).string() : eval_out, traces);
    } else if (compare->parsed()) {
      CompareThresholds th;
      th.max_abs_diff = max_abs_diff;
      for (const auto& item : min_diffs) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::kUsage, "--min-diff expects metric=value");
        try {
          th.min_diff[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
        } catch (const std::logic_error&) {
          throw Error(ErrorKind::kUsage, "--min-diff: bad value in '" + item + "'");
        }
      }
      const CompareOutcome outcome = cmd_compare(summary_a, summary_b, th);
      const std::string text = outcome.diff.dump(2) + "\n";
      if (!compare_out.empty()) write_file(compare_out, text);
      out << text;
      if (!outcome.pass) {
        err << "compare: thresholds not met\n";
        return static_cast<int>(ErrorKind::kValidation);
      }
    } else if (validate->parsed()) {
      const RunConfig c = validate_flags.resolve();
      if (!dump_path.empty()) write_file(dump_path, to_json(make_confounded_bandit()).dump(2) + "\n");
      const std::string env = spec_path.empty() ? c.env : spec_path;
      const auto mdp = env == "bandit" ? make_confounded_bandit() : confounded_mdp_from_json(read_json(env));
      const auto violations = validate_spec(mdp.family, mdp.expert);
      for (const auto& v : violations) err << env << ": " << v << '\n';
      if (!violations.empty()) return static_cast<int>(ErrorKind::kValidation);
      out << "config ok\n" << env << ": ok\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kValidation);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kUsage);
  }
  return 0;
}

}  // namespace deconf
