#pragma once

#include "deconf/env.hpp"
#include "deconf/report.hpp"
#include "deconf/run_config.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace deconf {

/// Entry point of the `deconf` binary. Returns the process exit code:
/// 0 success, 1 usage error, 2 validation failure, 3 numerical abort.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "bandit" or a path to a family JSON file; the result is validated.
std::shared_ptr<const ConfoundedMdp> load_environment(const std::string& env);

/// Writes the expert dataset and returns its summary as printed by `gen-expert`.
std::string cmd_gen_expert(const RunConfig& config, const std::string& path);

/// Trains one checkpoint per seed into `out_dir`.
std::string cmd_train(const RunConfig& config, const std::string& algo, const std::optional<std::string>& data,
                      const std::string& out_dir);

/// Evaluates `policy` on every seed and writes metric files into `out_dir`.
std::string cmd_eval(const RunConfig& config, const std::string& policy,
                     const std::optional<std::string>& checkpoints, const std::optional<std::string>& data,
                     const std::string& out_dir, bool traces);

CompareOutcome cmd_compare(const std::string& summary_a, const std::string& summary_b,
                           const CompareThresholds& thresholds);

std::uint64_t fnv1a_64(const std::string& bytes);

}  // namespace deconf
