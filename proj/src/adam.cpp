// SPDX-License-Identifier: Apache-2.0
#include "lmpc/adam.hpp"

#include <cmath>

#include "lmpc/error.hpp"

namespace lmpc::ad {

AdamState AdamState::for_params(const ParameterSet& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state,
               double learning_rate, const AdamConfig& config) {
  if (grads.size() != params.size() || state.first.size() != params.size() ||
      state.second.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].shape() != params[p].shape()) {
      throw ShapeError("adam_step: gradient shape " + shape_str(grads[p].shape()) +
                       " does not match parameter " + params.name(p) + " " +
                       shape_str(params[p].shape()));
    }
    if (!grads[p].all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter " + params.name(p));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = params[p];
    Tensor& m = state.first[p];
    Tensor& v = state.second[p];
    const Tensor& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

double global_norm(const ParameterSet& grads) {
  double s = 0.0;
  for (const auto& g : grads.values()) {
    for (double x : g.data()) s += x * x;
  }
  return std::sqrt(s);
}

double clip_by_global_norm(ParameterSet& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& g : grads.values()) {
      for (auto& x : g.data()) x *= f;
    }
  }
  return norm;
}

}  // namespace lmpc::ad
