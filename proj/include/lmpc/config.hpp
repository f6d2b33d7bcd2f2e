// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lmpc/agent.hpp"

namespace lmpc {

/// Everything a command needs. Text form is one `key=value` per line with
/// dotted keys (plan.K=200); `#` starts a comment.
struct RunConfig {
  std::string env_name = "pendulum_po";
  std::uint64_t seed = 0;
  std::size_t ensemble_size = 5;
  std::string out = "run";
  /// OpenMP threads; 0 keeps the runtime default.
  std::size_t threads = 0;

  RssmConfig rssm;
  TrainConfig train;
  PlanConfig plan;
  AgentConfig agent;

  /// When false the wall_clock_s column is written as 0 so repeated runs
  /// produce byte-identical metrics.
  bool wall_clock = true;
  std::size_t keep_checkpoints = 3;
  std::size_t ablate_seeds = 4;
  std::size_t ablate_last_k = 5;

  void validate() const;
  LoopConfig loop() const;
};

/// Every accepted key, in dump order.
std::vector<std::string> config_keys();

/// Sets one key. Throws ConfigError listing the valid keys when `key` is
/// unknown, or naming the key when the value does not parse.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Applies the lines of `in` on top of `config`. `origin` prefixes errors.
void apply_config_text(RunConfig& config, std::istream& in, const std::string& origin);

/// Defaults, then the file (if non-empty), then each "key=value" override.
/// The result is validated.
RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

/// Full effective configuration; apply_config_text reads it back exactly.
std::string dump_config(const RunConfig& config);

}  // namespace lmpc
