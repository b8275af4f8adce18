#include "deconf/train.hpp"

#include "deconf/format.hpp"

#include <cmath>
#include <sstream>

namespace deconf {
namespace {

void check_finite(const LogitTensors& grad, int step, const char* phase) {
  if (!grad.all_finite())
    throw Error(ErrorKind::kNumerical,
                std::string(phase) + ": non-finite gradient at step " + std::to_string(step));
}

void ascend_inference(CategoricalLatentModel& model, const LogitTensors& grad, double lr) {
  model.logits.prior += lr * grad.prior;
  model.logits.dynamics += lr * grad.dynamics;
}

void maybe_monitor(const TrainingMonitor& monitor, int step, int total, const TrainResult& partial,
                   TrainLogRow& row) {
  if (!monitor.due(step, total)) return;
  const MonitorPoint p = monitor.evaluate(partial.policy());
  row.online_best_arm_count = p.online_best_arm_count;
  row.eval_best_arm_prob = p.eval_best_arm_prob;
}

const Trajectory& draw_expert(const ExpertDataset& experts, Rng& rng) {
  return experts.trajectories[static_cast<std::size_t>(
      rng.uniform_int(static_cast<int>(experts.trajectories.size())))];
}

/// Ascends the offline objective on expert minibatches. Shared by the offline variant and
/// the naive baseline.
void fit_offline(TrainResult& result, const ExpertDataset& experts, const TrainOptions& options, std::uint64_t seed,
                 const TrainingMonitor& monitor) {
  const ElboConfig& cfg = options.elbo;
  auto& model = result.model;
  for (int step = 0; step < cfg.train_steps; ++step) {
    const ModelLogTables tables(model);
    LogitTensors grad = LogitTensors::zeros(model.num_latents, model.num_states, model.num_actions);
    Rng batch_rng = Rng::stream(seed, StreamTag::kExpertBatch, static_cast<std::uint64_t>(step));
    double value = 0.0, nll = 0.0;
    std::size_t transitions = 0;
    for (int j = 0; j < cfg.batch_episodes; ++j) {
      const Trajectory& traj = draw_expert(experts, batch_rng);
      double episode_nll = 0.0;
      value += accumulate_elbo_offline(tables, traj, cfg.beta, grad, &episode_nll);
      nll += episode_nll;
      transitions += traj.length();
    }
    log_prob_grad_to_logit_grad(tables, grad);
    check_finite(grad, step, "offline fit");
    ascend_inference(model, grad, cfg.lr_inference);
    model.logits.policy += cfg.lr_policy * grad.policy;

    const double denom = transitions > 0 ? static_cast<double>(transitions) : 1.0;
    TrainLogRow row{step, value / denom, nll / denom, std::nullopt, std::nullopt};
    maybe_monitor(monitor, step, cfg.train_steps, result, row);
    result.log.push_back(row);
  }
}


}  // namespace

void ElboConfig::validate() const {
  if (!(beta >= 0.0)) throw Error(ErrorKind::kValidation, "beta must be non-negative");
  if (!(lr_inference > 0.0) || !(lr_policy > 0.0)) throw Error(ErrorKind::kValidation, "learning rates must be positive");
  if (batch_episodes < 1) throw Error(ErrorKind::kValidation, "batch_episodes must be at least 1");
  if (train_steps < 0) throw Error(ErrorKind::kValidation, "train_steps must be non-negative");
  if (num_latents < 1) throw Error(ErrorKind::kValidation, "num_latents (K) must be at least 1");
}

void TrainOptions::validate() const {
  elbo.validate();
  if (horizon < 1) throw Error(ErrorKind::kValidation, "horizon must be at least 1");
  if (online_refine_steps < 0) throw Error(ErrorKind::kValidation, "online_refine_steps must be non-negative");
  if (!(init_scale > 0.0)) throw Error(ErrorKind::kValidation, "init_scale must be positive");
}

void ExpertDataset::validate() const {
  if (trajectories.empty()) throw Error(ErrorKind::kValidation, "expert dataset is empty");
  if (num_states < 1 || num_actions < 1) throw Error(ErrorKind::kValidation, "expert dataset has no dimensions");
  for (const auto& t : trajectories) {
    if (t.initial_state < 0 || t.initial_state >= num_states)
      throw Error(ErrorKind::kValidation, "expert dataset: initial state out of bounds");
    for (const Step& s : t.steps)
      if (s.action < 0 || s.action >= num_actions || s.next_state < 0 || s.next_state >= num_states)
        throw Error(ErrorKind::kValidation, "expert dataset: step out of bounds");
  }
}

Matrix ExpertDataset::initial_state_distribution() const {
  Matrix dist = Matrix::Zero(1, num_states);
  for (const auto& t : trajectories) dist(0, t.initial_state) += 1.0;
  if (trajectories.empty()) dist.setConstant(1.0 / num_states);
  else dist /= static_cast<double>(trajectories.size());
  return dist;
}

EnvironmentAccess::EnvironmentAccess(MdpFamilySpec family) : family_(std::move(family)) {
  const auto problems = validate_family(family_);
  if (!problems.empty()) throw Error(ErrorKind::kValidation, "environment family invalid: " + problems.front());
}

Trajectory EnvironmentAccess::explore(int horizon, Rng& rng) const {
  const LatentId latent = rng.categorical(family_.latent_prior);
  Trajectory traj{rng.categorical(family_.initial_dist.row(latent)), {}, std::nullopt};
  traj.steps.reserve(static_cast<std::size_t>(horizon));
  StateId s = traj.initial_state;
  for (int t = 0; t < horizon; ++t) {
    const ActionId a = rng.uniform_int(family_.num_actions);
    const StateId s_next = rng.categorical(family_.next_state_dist(latent, s, a));
    traj.steps.push_back({a, s_next});
    s = s_next;
  }
  return traj;
}

ImitatorPolicy TrainResult::policy() const {
  CategoricalLatentModel composite = model;
  if (online_model) {
    composite.logits.prior = online_model->logits.prior;
    composite.logits.dynamics = online_model->logits.dynamics;
  }
  return ImitatorPolicy{std::make_shared<const ConfoundedMdp>(composite.to_tables(initial_dist)), mode};
}

TrainResult train_tier2(const EnvironmentAccess& environment, const ExpertDataset& experts,
                        const TrainOptions& options, std::uint64_t seed, const TrainingMonitor& monitor) {
  options.validate();
  experts.validate();
  if (experts.num_states != environment.num_states() || experts.num_actions != environment.num_actions())
    throw Error(ErrorKind::kValidation, "expert dataset dimensions do not match the environment");
  const ElboConfig& cfg = options.elbo;
  const int K = cfg.num_latents, S = experts.num_states, A = experts.num_actions;
  Rng init_rng = Rng::stream(seed, StreamTag::kInit);
  TrainResult result{CategoricalLatentModel::random(K, S, A, init_rng, options.init_scale), std::nullopt,
                     experts.initial_state_distribution(), EvidenceMode::kInterventional, {}};
  auto& model = result.model;
  const auto B = static_cast<std::uint64_t>(cfg.batch_episodes);

  for (int step = 0; step < cfg.train_steps; ++step) {
    // (i)-(ii): exploration episodes under the true dynamics, online objective.
    const ModelLogTables tables(model);
    LogitTensors grad = LogitTensors::zeros(K, S, A);
    double elbo_sum = 0.0;
    std::size_t transitions = 0;
    for (std::uint64_t j = 0; j < B; ++j) {
      Rng rng = Rng::stream(seed, StreamTag::kExploration, static_cast<std::uint64_t>(step) * B + j);
      const Trajectory traj = environment.explore(options.horizon, rng);
      elbo_sum += accumulate_elbo_online(tables, traj, cfg.beta, grad);
      transitions += traj.length();
    }
    log_prob_grad_to_logit_grad(tables, grad);
    check_finite(grad, step, "tier2 inference");
    ascend_inference(model, grad, cfg.lr_inference);

    // (iii)-(iv): episode-level latents for expert data, then a BC step.
    const ModelLogTables updated(model);
    LogitTensors bc = LogitTensors::zeros(K, S, A);
    Rng batch_rng = Rng::stream(seed, StreamTag::kExpertBatch, static_cast<std::uint64_t>(step));
    Rng latent_rng = Rng::stream(seed, StreamTag::kBcLatent, static_cast<std::uint64_t>(step));
    double nll = 0.0;
    std::size_t actions = 0;
    for (std::uint64_t j = 0; j < B; ++j) {
      const Trajectory& traj = draw_expert(experts, batch_rng);
      Vector weight = model_posterior(updated, traj, EvidenceMode::kInterventional);
      if (options.sample_bc_latents) {
        const LatentId z = latent_rng.categorical(weight);
        weight.setZero();
        weight(z) = 1.0;
      }
      for (std::size_t t = 0; t < traj.length(); ++t) {
        const StateId s = traj.state_at(t);
        const ActionId a = traj.steps[t].action;
        for (LatentId z = 0; z < K; ++z) {
          if (weight(z) == 0.0) continue;
          const Index row = model.policy_row(z, s);
          nll -= weight(z) * updated.log_policy(row, a);
          bc.policy(row, a) += weight(z);
        }
      }
      actions += traj.length();
    }
    log_prob_grad_to_logit_grad(updated, bc);
    check_finite(bc, step, "tier2 behavioral cloning");
    model.logits.policy += cfg.lr_policy * bc.policy;

    TrainLogRow row{step, elbo_sum / static_cast<double>(transitions ? transitions : 1),
                    nll / static_cast<double>(actions ? actions : 1), std::nullopt, std::nullopt};
    maybe_monitor(monitor, step, cfg.train_steps, result, row);
    result.log.push_back(row);
  }
  return result;
}

TrainResult train_tier1_offline(const ExpertDataset& experts, const TrainOptions& options, std::uint64_t seed,
                                const TrainingMonitor& monitor) {
  options.validate();
  experts.validate();
  const ElboConfig& cfg = options.elbo;
  const int K = cfg.num_latents, S = experts.num_states, A = experts.num_actions;
  Rng init_rng = Rng::stream(seed, StreamTag::kInit);
  TrainResult result{CategoricalLatentModel::random(K, S, A, init_rng, options.init_scale), std::nullopt,
                     experts.initial_state_distribution(), EvidenceMode::kInterventional, {}};
  fit_offline(result, experts, options, seed, monitor);

  // Synthetic episodes from the learned dynamics under a latent-blind uniform policy.
  const ConfoundedMdp generator = result.model.to_tables(result.initial_dist);
  CategoricalLatentModel online = result.model;
  const double last_imitation = result.log.empty() ? 0.0 : result.log.back().imitation_loss;
  const auto B = static_cast<std::uint64_t>(cfg.batch_episodes);
  const EnvironmentAccess synthetic(generator.family);
  result.online_model = online;
  for (int r = 0; r < options.online_refine_steps; ++r) {
    const ModelLogTables tables(online);
    LogitTensors grad = LogitTensors::zeros(K, S, A);
    double elbo_sum = 0.0;
    std::size_t transitions = 0;
    for (std::uint64_t j = 0; j < B; ++j) {
      Rng rng = Rng::stream(seed, StreamTag::kSynthetic, static_cast<std::uint64_t>(r) * B + j);
      const Trajectory traj = synthetic.explore(options.horizon, rng);
      elbo_sum += accumulate_elbo_online(tables, traj, cfg.beta, grad);
      transitions += traj.length();
    }
    log_prob_grad_to_logit_grad(tables, grad);
    check_finite(grad, r, "online inference refinement");
    ascend_inference(online, grad, cfg.lr_inference);
    result.online_model = online;

    const int step = cfg.train_steps + r;
    TrainLogRow row{step, elbo_sum / static_cast<double>(transitions ? transitions : 1), last_imitation,
                    std::nullopt, std::nullopt};
    maybe_monitor(monitor, r, options.online_refine_steps, result, row);
    result.log.push_back(row);
  }
  return result;
}

TrainResult naive_bc_baseline(const ExpertDataset& experts, const TrainOptions& options, std::uint64_t seed,
                              const TrainingMonitor& monitor) {
  options.validate();
  experts.validate();
  const ElboConfig& cfg = options.elbo;
  Rng init_rng = Rng::stream(seed, StreamTag::kInit);
  TrainResult result{
      CategoricalLatentModel::random(cfg.num_latents, experts.num_states, experts.num_actions, init_rng,
                                     options.init_scale),
      std::nullopt, experts.initial_state_distribution(), EvidenceMode::kConditional, {}};
  fit_offline(result, experts, options, seed, monitor);
  return result;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream out;
  out << "step,elbo,imitation_loss,online_best_arm_count,eval_best_arm_prob\n";
  for (const auto& row : log) {
    out << row.step << ',' << format_number(row.elbo) << ',' << format_number(row.imitation_loss) << ',';
    if (row.online_best_arm_count) out << format_number(*row.online_best_arm_count);
    out << ',';
    if (row.eval_best_arm_prob) out << format_number(*row.eval_best_arm_prob);
    out << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const ElboConfig& c) {
  return {{"beta", c.beta},
          {"lr_inference", c.lr_inference},
          {"lr_policy", c.lr_policy},
          {"batch_episodes", c.batch_episodes},
          {"train_steps", c.train_steps},
          {"num_latents", c.num_latents}};
}

nlohmann::json to_json(const TrainOptions& o) {
  return {{"elbo", to_json(o.elbo)},
          {"horizon", o.horizon},
          {"online_refine_steps", o.online_refine_steps},
          {"sample_bc_latents", o.sample_bc_latents},
          {"init_scale", o.init_scale}};
}

TrainOptions train_options_from_json(const nlohmann::json& j) {
  TrainOptions o;
  const auto& e = j.at("elbo");
  o.elbo.beta = e.at("beta").get<double>();
  o.elbo.lr_inference = e.at("lr_inference").get<double>();
  o.elbo.lr_policy = e.at("lr_policy").get<double>();
  o.elbo.batch_episodes = e.at("batch_episodes").get<int>();
  o.elbo.train_steps = e.at("train_steps").get<int>();
  o.elbo.num_latents = e.at("num_latents").get<int>();
  o.horizon = j.at("horizon").get<int>();
  o.online_refine_steps = j.at("online_refine_steps").get<int>();
  o.sample_bc_latents = j.at("sample_bc_latents").get<bool>();
  o.init_scale = j.at("init_scale").get<double>();
  return o;
}

nlohmann::json checkpoint_to_json(const TrainResult& result, const std::string& algo, const TrainOptions& options,
                                  std::uint64_t seed) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["algo"] = algo;
  j["seed"] = seed;
  j["mode"] = to_string(result.mode);
  j["options"] = to_json(options);
  j["model"] = logits_to_json(result.model);
  j["online_model"] = result.online_model ? logits_to_json(*result.online_model) : nlohmann::json(nullptr);
  nlohmann::json init = nlohmann::json::array();
  for (Index r = 0; r < result.initial_dist.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < result.initial_dist.cols(); ++c) row.push_back(result.initial_dist(r, c));
    init.push_back(std::move(row));
  }
  j["initial_dist"] = std::move(init);
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.value("schema_version", 0) != 1) throw Error(ErrorKind::kValidation, "checkpoint: unsupported schema_version");
    Checkpoint c;
    c.algo = j.at("algo").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.options = train_options_from_json(j.at("options"));
    const std::string mode = j.at("mode").get<std::string>();
    if (mode != "interventional" && mode != "conditional") throw Error(ErrorKind::kValidation, "checkpoint: bad mode");
    c.result.mode = mode == "conditional" ? EvidenceMode::kConditional : EvidenceMode::kInterventional;
    c.result.model = logits_from_json(j.at("model"));
    if (!j.at("online_model").is_null()) c.result.online_model = logits_from_json(j.at("online_model"));
    const auto rows = j.at("initial_dist").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw Error(ErrorKind::kValidation, "checkpoint: empty initial_dist");
    c.result.initial_dist = Matrix(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.front().size()) throw Error(ErrorKind::kValidation, "checkpoint: ragged initial_dist");
      for (std::size_t col = 0; col < rows[r].size(); ++col)
        c.result.initial_dist(static_cast<Index>(r), static_cast<Index>(col)) = rows[r][col];
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("checkpoint: ") + e.what());
  }
}

}  // namespace deconf
