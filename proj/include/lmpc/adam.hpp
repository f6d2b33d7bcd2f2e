// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "lmpc/tensor.hpp"

namespace lmpc::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments and step count, one slot per parameter.
struct AdamState {
  ParameterSet first;
  ParameterSet second;
  std::uint64_t step = 0;

  static AdamState for_params(const ParameterSet& params);
};

/// One Adam update of `params` in place. Throws NumericError naming the
/// parameter if a gradient is not finite, before anything is modified.
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state,
               double learning_rate, const AdamConfig& config = {});

double global_norm(const ParameterSet& grads);

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_by_global_norm(ParameterSet& grads, double max_norm);

}  // namespace lmpc::ad
