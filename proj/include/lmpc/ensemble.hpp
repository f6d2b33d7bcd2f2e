// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lmpc/adam.hpp"
#include "lmpc/dataset.hpp"
#include "lmpc/rng.hpp"
#include "lmpc/rssm.hpp"

namespace lmpc {

struct TrainConfig {
  std::size_t batch = 16;
  std::size_t segment_length = 30;
  double learning_rate = 1e-3;
  double grad_clip = 100.0;
  /// L2 penalty standing in for the weight prior.
  double weight_decay = 1e-6;
  ad::AdamConfig adam{};

  void validate() const;
};

/// Particle approximation of p(theta | D): E independently trained models.
struct PosteriorEnsemble {
  std::vector<ModelParams> members;
  std::vector<ad::AdamState> optimizers;
  /// Per-member minibatch and sampling streams.
  std::vector<Rng> streams;

  std::size_t size() const { return members.size(); }
  const RssmConfig& config() const { return members.at(0).config; }
};

/// Member i is initialised from derive_seed(master_seed, i, 0); its
/// minibatch stream starts from derive_seed(master_seed, i, 1).
PosteriorEnsemble init_ensemble(const RssmConfig& config, std::size_t E,
                                std::uint64_t master_seed);

/// Wraps already-trained members (e.g. from a checkpoint) with fresh
/// optimiser state and streams.
PosteriorEnsemble ensemble_from_members(std::vector<ModelParams> members,
                                        std::uint64_t master_seed);

struct TrainReport {
  /// losses[i][step] for member i.
  std::vector<std::vector<double>> losses;

  /// Mean of the last `window` losses of member i.
  double recent_loss(std::size_t member, std::size_t window = 50) const;
};

/// Runs `steps` Adam steps on every member, each with its own minibatch
/// stream. Members train in parallel; results do not depend on thread count.
/// Errors from a member are rethrown prefixed with its index.
TrainReport train_ensemble(PosteriorEnsemble& ensemble, const Dataset& data, std::size_t steps,
                           const TrainConfig& config);

/// Per-member latent states plus the last executed action.
struct EnsembleBelief {
  std::vector<LatentState> states;
  std::vector<double> last_action;
  /// Number of observations folded in so far.
  std::size_t steps = 0;

  std::size_t size() const { return states.size(); }
};

EnsembleBelief initial_belief(const PosteriorEnsemble& ensemble);

/// Folds in the observation x_t after `action` (a_{t-1}) was executed. On
/// the first observation the deterministic state is left at zero. With
/// `use_mean` the posterior mean replaces sampling.
EnsembleBelief belief_update(const PosteriorEnsemble& ensemble, const EnsembleBelief& belief,
                             std::span<const double> action, std::span<const double> observation,
                             Rng& rng, bool use_mean = false);

/// Variance across members of predicted cumulative reward for one action
/// sequence (horizon x action_dim, row-major). Rollouts follow the prior
/// mean so only model disagreement contributes.
double ensemble_disagreement(const PosteriorEnsemble& ensemble, const EnsembleBelief& belief,
                             std::span<const double> actions, std::size_t horizon);

/// Fixed probe action sequences used for disagreement diagnostics.
std::vector<std::vector<double>> probe_sequences(std::size_t horizon, std::size_t action_dim);

}  // namespace lmpc
