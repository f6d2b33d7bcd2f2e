// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>

#include "lmpc/ensemble.hpp"

namespace lmpc {

/// Counts latent rollouts, one per (candidate, member) pair.
struct RolloutCounter {
  std::atomic<std::uint64_t> rollouts{0};
  std::atomic<std::uint64_t> calls{0};

  void reset() {
    rollouts = 0;
    calls = 0;
  }
};

/// One candidate-evaluation request. Candidate k is the row-major sequence
/// candidates[k * T * A, (k + 1) * T * A). Rollout (k, i) starts from member
/// i's belief state and draws its latent noise from derive_seed(seed, k, i),
/// T * s_dim normals in time order.
struct RolloutJob {
  const PosteriorEnsemble* ensemble = nullptr;
  const EnsembleBelief* belief = nullptr;
  std::span<const double> candidates;
  std::size_t K = 0;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
};

/// Summed predicted reward of every rollout, written to
/// member_returns[k * E + i]. Throws NumericError naming (k, i, t) on a
/// non-finite reward.
void rollout_serial(const RolloutJob& job, std::span<double> member_returns,
                    RolloutCounter* counter = nullptr);

/// Same results bit for bit, computed in row blocks of `block` candidates
/// per member and spread over OpenMP threads.
void rollout_parallel(const RolloutJob& job, std::span<double> member_returns,
                      RolloutCounter* counter = nullptr, std::size_t block = 32);

}  // namespace lmpc
