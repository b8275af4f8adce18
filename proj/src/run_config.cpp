#include "deconf/run_config.hpp"

#include "deconf/format.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

namespace deconf {
namespace {

struct Field {
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorKind::kValidation, "config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto v = trim(value);
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad_value(key, value, "an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  const auto v = trim(value);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, value, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, value, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  const auto v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, value, "a boolean");
}

template <typename T>
Field int_field(std::string doc, T RunConfig::*member) {
  return {std::move(doc), [member](RunConfig& c, const std::string& v) { c.*member = parse_integer<T>("", v); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

template <typename T>
Field elbo_int_field(std::string doc, T ElboConfig::*member) {
  return {std::move(doc), [member](RunConfig& c, const std::string& v) { c.elbo.*member = parse_integer<T>("", v); },
          [member](const RunConfig& c) { return std::to_string(c.elbo.*member); }};
}

Field double_field(std::string doc, double RunConfig::*member) {
  return {std::move(doc), [member](RunConfig& c, const std::string& v) { c.*member = parse_double("", v); },
          [member](const RunConfig& c) { return format_number(c.*member); }};
}

Field elbo_double_field(std::string doc, double ElboConfig::*member) {
  return {std::move(doc), [member](RunConfig& c, const std::string& v) { c.elbo.*member = parse_double("", v); },
          [member](const RunConfig& c) { return format_number(c.elbo.*member); }};
}

Field string_field(std::string doc, std::string RunConfig::*member) {
  return {std::move(doc), [member](RunConfig& c, const std::string& v) { c.*member = trim(v); },
          [member](const RunConfig& c) { return c.*member; }};
}

Field bool_field(std::string doc, bool RunConfig::*member) {
  return {std::move(doc), [member](RunConfig& c, const std::string& v) { c.*member = parse_bool("", v); },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["env"] = string_field("environment: 'bandit' or path to a family JSON file", &RunConfig::env);
    t["horizon"] = int_field("steps per episode", &RunConfig::horizon);
    t["expert_episodes"] = int_field("episodes in a generated expert dataset", &RunConfig::expert_episodes);
    t["eval_episodes"] = int_field("online evaluation episodes per seed", &RunConfig::eval_episodes);
    t["eval_expert_episodes"] = int_field("expert trajectories for expert-data metrics", &RunConfig::eval_expert_episodes);
    t["seeds"] = {"comma-separated run seeds",
                  [](RunConfig& c, const std::string& v) {
                    c.seeds.clear();
                    std::stringstream ss(v);
                    std::string item;
                    while (std::getline(ss, item, ',')) {
                      if (trim(item).empty()) continue;
                      c.seeds.push_back(parse_integer<std::uint64_t>("seeds", item));
                    }
                  },
                  [](const RunConfig& c) {
                    std::string out;
                    for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
                    return out;
                  }};
    t["data_seed"] = int_field("seed of gen-expert", &RunConfig::data_seed);
    t["beta"] = elbo_double_field("KL coefficient", &ElboConfig::beta);
    t["lr_inference"] = elbo_double_field("learning rate of prior and dynamics logits", &ElboConfig::lr_inference);
    t["lr_policy"] = elbo_double_field("learning rate of policy logits", &ElboConfig::lr_policy);
    t["batch_episodes"] = elbo_int_field("episodes per update", &ElboConfig::batch_episodes);
    t["train_steps"] = elbo_int_field("parameter updates", &ElboConfig::train_steps);
    t["num_latents"] = elbo_int_field("latent categories K of the learned model", &ElboConfig::num_latents);
    t["online_refine_steps"] = int_field("online-inference updates on synthetic data (tier1)", &RunConfig::online_refine_steps);
    t["sample_bc_latents"] = bool_field("sample one latent per expert episode for BC", &RunConfig::sample_bc_latents);
    t["init_scale"] = double_field("logits start uniform in [-init_scale, init_scale]", &RunConfig::init_scale);
    t["out_dir"] = string_field("output directory", &RunConfig::out_dir);
    t["smoothing_window"] = int_field("moving-average window for the smoothed CSV column", &RunConfig::smoothing_window);
    t["threads"] = int_field("worker threads, 0 = available cores", &RunConfig::threads);
    t["monitor_interval"] = int_field("training steps between evaluations in the log (0 = off)", &RunConfig::monitor_interval);
    t["monitor_episodes"] = int_field("online episodes per training-log evaluation", &RunConfig::monitor_episodes);
    t["merge_tolerance"] = double_field("sup-norm tolerance for merging tier-1 chains", &RunConfig::merge_tolerance);
    t["window_start"] = int_field("first step of the final window used by summaries", &RunConfig::window_start);
    t["actor"] = string_field("belief actors: 'sampling' or 'marginal'", &RunConfig::actor);
    t["raster"] = bool_field("write the action raster during eval", &RunConfig::raster);
    return t;
  }();
  return table;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : fields()) out.push_back(name);
    return out;
  }();
  return k;
}

std::string RunConfig::describe(const std::string& key) {
  const auto it = fields().find(key);
  return it == fields().end() ? "" : it->second.doc;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw Error(ErrorKind::kValidation, "unknown config key '" + key + "'");
  try {
    it->second.set(*this, value);
  } catch (const Error& e) {
    throw Error(ErrorKind::kValidation, "config key '" + key + "': invalid value '" + trim(value) + "'");
  }
}

std::string RunConfig::get(const std::string& key) const {
  const auto it = fields().find(key);
  if (it == fields().end()) throw Error(ErrorKind::kValidation, "unknown config key '" + key + "'");
  return it->second.get(*this);
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kValidation, "config: " + what); };
  if (env.empty()) fail("env must not be empty");
  if (horizon < 1) fail("horizon must be at least 1");
  if (expert_episodes < 1 || eval_episodes < 1 || eval_expert_episodes < 1) fail("episode counts must be at least 1");
  if (seeds.empty()) fail("at least one seed is required");
  if (smoothing_window < 1) fail("smoothing_window must be at least 1");
  if (threads < 0) fail("threads must be non-negative");
  if (monitor_interval < 0 || monitor_episodes < 1) fail("monitor settings out of range");
  if (!(merge_tolerance >= 0.0)) fail("merge_tolerance must be non-negative");
  if (window_start < 0 || window_start >= horizon) fail("window_start must lie in [0, horizon)");
  if (actor != "sampling" && actor != "marginal") fail("actor must be 'sampling' or 'marginal'");
  if (out_dir.empty()) fail("out_dir must not be empty");
  train_options().validate();
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "schema_version = 1\n";
  for (const auto& [name, field] : fields()) out << name << " = " << field.get(*this) << '\n';
  return out.str();
}

RunConfig RunConfig::parse(std::istream& in) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::kValidation, "config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "schema_version") {
      if (value != "1") throw Error(ErrorKind::kValidation, "config: unsupported schema_version " + value);
      continue;
    }
    c.set(key, value);
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kUsage, "cannot open config file " + path);
  return parse(f);
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.elbo = elbo;
  o.horizon = horizon;
  o.online_refine_steps = online_refine_steps;
  o.sample_bc_latents = sample_bc_latents;
  o.init_scale = init_scale;
  return o;
}

int RunConfig::resolved_threads() const {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace deconf
