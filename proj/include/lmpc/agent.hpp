// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lmpc/dataset.hpp"
#include "lmpc/ensemble.hpp"
#include "lmpc/envs.hpp"
#include "lmpc/planner.hpp"

namespace lmpc {

struct AgentConfig {
  std::size_t seed_episodes = 5;
  std::size_t train_steps = 200;
  std::size_t outer_iterations = 30;
  double explore_noise = 0.3;
  /// Run an evaluation episode every this many iterations; 0 disables.
  std::size_t eval_every = 0;

  void validate() const;
};

/// n episodes of uniform random actions. Episode j resets with a seed drawn
/// from `rng`.
Dataset collect_seed_episodes(const envs::Environment& env, std::size_t n, Rng& rng);

struct EpisodeOutcome {
  EpisodeRecord record;
  double reward = 0.0;
  /// Set when the environment or planner threw; `record` holds the steps
  /// completed before the error.
  bool failed = false;
  std::string error;
  /// Averages over steps of the last planner iteration's best and mean R.
  double plan_best_return = 0.0;
  double plan_mean_return = 0.0;
};

struct ControlOptions {
  ActionMode mode = ActionMode::kExplore;
  double explore_noise = 0.3;
  bool parallel = true;
  RolloutCounter* counter = nullptr;
};

/// One MPC episode: filter the belief, plan from a warm-started mixture,
/// act. The reset seed is the first draw from `rng`.
EpisodeOutcome run_control_episode(const envs::Environment& env,
                                   const PosteriorEnsemble& ensemble, const PlanConfig& plan_config,
                                   Rng& rng, const ControlOptions& options = {});

/// Mean ensemble disagreement over the probe sequences, from the belief
/// after the reset observation of seed 0 (posterior means).
double probe_disagreement(const PosteriorEnsemble& ensemble, const envs::Environment& env,
                          std::size_t horizon);

struct LoopConfig {
  AgentConfig agent;
  PlanConfig plan;
  TrainConfig train;
  RssmConfig rssm;
  std::size_t ensemble_size = 5;
  std::uint64_t seed = 0;
  bool parallel = true;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t episodes = 0;
  std::size_t transitions = 0;
  std::vector<double> train_loss;  // per member
  double episode_reward = 0.0;
  double plan_best_return = 0.0;
  double plan_mean_return = 0.0;
  double disagreement = 0.0;
  /// Meaningful only when `evaluated`.
  double eval_reward = 0.0;
  bool evaluated = false;
};

struct History {
  std::size_t seed_episodes = 0;
  std::size_t seed_transitions = 0;
  std::vector<IterationRecord> iterations;
  Dataset data;
  PosteriorEnsemble ensemble;

  /// Episode rewards of the last `n` control episodes.
  std::vector<double> last_rewards(std::size_t n) const;
};

struct LoopHooks {
  std::function<void(const Dataset&)> on_seed_data;
  /// Called after each iteration with the episode just added.
  std::function<void(const IterationRecord&, const EpisodeRecord&, const History&)> on_iteration;
};

/// Seed data, then per iteration: train every member, run one exploring
/// control episode, add it to the dataset, record metrics. Errors abort the
/// loop.
History outer_loop(const envs::Environment& env, const LoopConfig& config,
                   const LoopHooks& hooks = {});

}  // namespace lmpc
