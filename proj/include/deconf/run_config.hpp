#pragma once

#include "deconf/train.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace deconf {

/// Experiment configuration. Text form is one `key = value` per line, `#` starts a
/// comment, lists are comma-separated. Unknown keys are rejected.
struct RunConfig {
  std::string env = "bandit";  // "bandit" or a path to a family JSON file
  int horizon = 100;
  int expert_episodes = 1000;
  int eval_episodes = 1000;
  int eval_expert_episodes = 100;
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t data_seed = 7;
  ElboConfig elbo;
  int online_refine_steps = 1000;
  bool sample_bc_latents = false;
  double init_scale = 0.01;
  std::string out_dir = "out";
  int smoothing_window = 20;
  int threads = 0;  // 0 = available cores
  int monitor_interval = 500;
  int monitor_episodes = 100;
  double merge_tolerance = 0.05;
  int window_start = 80;
  std::string actor = "sampling";  // sampling | marginal
  bool raster = true;

  static const std::vector<std::string>& keys();
  static std::string describe(const std::string& key);

  /// Parses and assigns one value. Unknown key or malformed value: validation error.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  void validate() const;
  std::string to_text() const;
  static RunConfig parse(std::istream& in);
  static RunConfig load(const std::string& path);

  TrainOptions train_options() const;
  int resolved_threads() const;
};

}  // namespace deconf
