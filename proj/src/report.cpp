#include "deconf/report.hpp"

#include "deconf/format.hpp"
#include "deconf/math.hpp"

#include <algorithm>
#include <optional>

#include <cmath>
#include <limits>
#include <sstream>

namespace deconf {
namespace {

constexpr int kEarlySteps = 6;  // t = 0..5
constexpr double kSignificanceZ = 2.0;

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

double row_mean(const Matrix& m, Index row, Index begin, Index end) {
  if (end <= begin) return std::numeric_limits<double>::quiet_NaN();
  return m.row(row).segment(begin, end - begin).mean();
}

void check_probability_series(const std::vector<double>& s, std::size_t H, const char* name) {
  if (s.size() != H) throw Error(ErrorKind::kValidation, std::string(name) + ": wrong length");
  for (double v : s)
    if (!(v >= 0.0 && v <= 1.0 + 1e-12)) throw Error(ErrorKind::kValidation, std::string(name) + ": outside [0,1]");
}

}  // namespace

void EvalReport::check_invariants() const {
  const auto H = static_cast<std::size_t>(horizon);
  check_probability_series(best_arm_prob_expert, H, "best_arm_prob_expert");
  check_probability_series(best_arm_prob_online, H, "best_arm_prob_online");
  if (imitation_loss.size() != H || kl_to_expert.size() != H)
    throw Error(ErrorKind::kValidation, "loss series have the wrong length");
  for (int c : best_arm_counts)
    if (c < 0 || c > horizon) throw Error(ErrorKind::kValidation, "best-arm count outside [0, H]");
}

EvalReport evaluate(const AgentFactory& policy, const ConfoundedMdp& truth, const std::vector<Trajectory>& eval_experts,
                    const DeployConfig& deploy_config, int window_start, DeployResult* keep) {
  EvalReport r;
  r.seed = deploy_config.seed;
  r.horizon = deploy_config.horizon;
  r.window_start = window_start;
  const Index H = deploy_config.horizon;
  const Index w0 = std::clamp<Index>(window_start, 0, H);

  DeployResult online = deploy(policy, truth, deploy_config);
  const OnlineSeries series = metric_online_series(online.traces, truth.expert);
  r.best_arm_prob_online = series.best_arm_prob;
  r.best_arm_counts = series.best_arm_counts;
  r.kl_to_expert = metric_kl_to_expert(online.traces, truth.expert);
  for (const auto& trace : online.traces) {
    r.online_latents.push_back(trace.latent);
    double hits = 0.0, kl = 0.0;
    for (Index t = w0; t < H; ++t) {
      const TraceStep& step = trace.steps[static_cast<std::size_t>(t)];
      if (step.action == best_action(truth.expert, trace.latent, step.state)) hits += 1.0;
      kl += kl_divergence(truth.expert.action_dist(trace.latent, step.state), step.action_dist);
    }
    const double n = static_cast<double>(H - w0);
    r.online_window_freq.push_back(n > 0 ? hits / n : std::numeric_limits<double>::quiet_NaN());
    r.kl_window.push_back(n > 0 ? kl / n : std::numeric_limits<double>::quiet_NaN());
  }

  const ExpertReplay replay = replay_on_experts(policy, eval_experts, truth.expert);
  if (replay.best_arm_prob.cols() != H)
    throw Error(ErrorKind::kValidation, "evaluation expert trajectories must have the deploy horizon");
  r.best_arm_prob_expert = to_std(replay.best_arm_prob.colwise().mean().transpose());
  r.imitation_loss = to_std(replay.nll.colwise().mean().transpose());
  r.imitation_loss_infinite = !replay.nll.allFinite();
  r.imitation_loss_mean = H > 0 ? replay.nll.mean() : 0.0;
  for (Index i = 0; i < replay.nll.rows(); ++i) {
    r.expert_early_prob.push_back(row_mean(replay.best_arm_prob, i, 0, std::min<Index>(kEarlySteps, H)));
    r.expert_window_prob.push_back(row_mean(replay.best_arm_prob, i, w0, H));
    r.imitation_loss_per_trajectory.push_back(row_mean(replay.nll, i, 0, H));
  }
  if (keep) *keep = std::move(online);
  return r;
}

SeriesStats across_seeds(const std::vector<std::vector<double>>& per_seed) {
  SeriesStats s;
  if (per_seed.empty()) return s;
  const std::size_t H = per_seed.front().size();
  const double n = static_cast<double>(per_seed.size());
  s.mean.assign(H, 0.0);
  s.sem.assign(H, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t < H; ++t) {
    double sum = 0.0;
    for (const auto& v : per_seed) sum += v.at(t);
    const double mean = sum / n;
    s.mean[t] = mean;
    if (per_seed.size() < 2) continue;
    double ss = 0.0;
    for (const auto& v : per_seed) ss += (v[t] - mean) * (v[t] - mean);
    s.sem[t] = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

std::vector<double> smooth(const std::vector<double>& series, int window) {
  if (window <= 1) return series;
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    sum += series[t];
    if (t >= static_cast<std::size_t>(window)) sum -= series[t - static_cast<std::size_t>(window)];
    const std::size_t n = std::min<std::size_t>(t + 1, static_cast<std::size_t>(window));
    out[t] = sum / static_cast<double>(n);
  }
  return out;
}

std::string series_csv(const SeriesStats& stats, int smoothing_window) {
  std::ostringstream out;
  const bool smoothed = smoothing_window > 1;
  out << "t,mean,sem" << (smoothed ? ",mean_smoothed" : "") << '\n';
  const std::vector<double> sm = smoothed ? smooth(stats.mean, smoothing_window) : std::vector<double>{};
  for (std::size_t t = 0; t < stats.mean.size(); ++t) {
    out << t << ',' << format_number(stats.mean[t]) << ',' << format_number(stats.sem[t]);
    if (smoothed) out << ',' << format_number(sm[t]);
    out << '\n';
  }
  return out.str();
}

std::string best_arm_count_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "seed,episode,latent,best_arm_count\n";
  for (const auto& r : reports)
    for (std::size_t e = 0; e < r.best_arm_counts.size(); ++e)
      out << r.seed << ',' << e << ',' << r.online_latents[e] << ',' << r.best_arm_counts[e] << '\n';
  return out.str();
}

ScalarStat scalar_stat(const std::vector<double>& values) {
  ScalarStat s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n < 2 || !std::isfinite(s.mean)) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sem = std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  return s;
}

nlohmann::json summary_json(const std::string& policy_name, const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw Error(ErrorKind::kValidation, "summary needs at least one report");
  std::map<std::string, std::vector<double>> pooled;
  std::vector<std::uint64_t> seeds;
  bool infinite = false;
  for (const auto& r : reports) {
    seeds.push_back(r.seed);
    infinite = infinite || r.imitation_loss_infinite;
    auto append = [&](const char* name, const std::vector<double>& v) {
      auto& dst = pooled[name];
      dst.insert(dst.end(), v.begin(), v.end());
    };
    std::vector<double> counts(r.best_arm_counts.begin(), r.best_arm_counts.end());
    append("online_best_arm_count", counts);
    append("online_best_arm_prob_window", r.online_window_freq);
    append("kl_to_expert_window", r.kl_window);
    append("expert_best_arm_prob_early", r.expert_early_prob);
    append("expert_best_arm_prob_window", r.expert_window_prob);
    append("imitation_loss", r.imitation_loss_per_trajectory);
  }
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, values] : pooled) {
    const ScalarStat s = scalar_stat(values);
    metrics[name] = {{"mean", s.mean}, {"sem", s.sem}, {"n", s.n}};
  }
  nlohmann::json j;
  j["schema_version"] = 1;
  j["policy"] = policy_name;
  j["horizon"] = reports.front().horizon;
  j["window_start"] = reports.front().window_start;
  j["seeds"] = seeds;
  j["online_episodes_per_seed"] = reports.front().best_arm_counts.size();
  j["expert_trajectories_per_seed"] = reports.front().imitation_loss_per_trajectory.size();
  j["imitation_loss_infinite"] = infinite;
  j["metrics"] = std::move(metrics);
  return j;
}

CompareOutcome compare_summaries(const nlohmann::json& a, const nlohmann::json& b, const CompareThresholds& thresholds) {
  try {
    if (a.at("schema_version") != b.at("schema_version"))
      throw Error(ErrorKind::kValidation, "summaries have different schema versions");
    if (a.at("horizon") != b.at("horizon")) throw Error(ErrorKind::kValidation, "summaries have different horizons");
    const auto& ma = a.at("metrics");
    const auto& mb = b.at("metrics");
    CompareOutcome out;
    out.diff = nlohmann::json::object();
    for (const auto& [name, va] : ma.items()) {
      if (!mb.contains(name)) throw Error(ErrorKind::kValidation, "metric " + name + " missing from second summary");
      const auto& vb = mb.at(name);
      const double diff = va.at("mean").get<double>() - vb.at("mean").get<double>();
      const double sa = va.at("sem").get<double>(), sb = vb.at("sem").get<double>();
      const double se = std::sqrt(sa * sa + sb * sb);
      const double z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff));
      bool ok = true;
      if (thresholds.max_abs_diff && std::abs(diff) > *thresholds.max_abs_diff) ok = false;
      if (auto it = thresholds.min_diff.find(name); it != thresholds.min_diff.end() && diff < it->second) ok = false;
      out.pass = out.pass && ok;
      out.diff[name] = {{"a", va.at("mean")}, {"b", vb.at("mean")}, {"diff", diff}, {"se", se},
                        {"z", std::isfinite(z) ? nlohmann::json(z) : nlohmann::json(nullptr)},
                        {"significant", std::abs(z) > kSignificanceZ}, {"pass", ok}};
    }
    for (const auto& [name, _] : thresholds.min_diff)
      if (!ma.contains(name)) throw Error(ErrorKind::kValidation, "threshold names unknown metric " + name);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("summary schema: ") + e.what());
  }
}

}  // namespace deconf
