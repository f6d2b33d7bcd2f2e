// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lmpc/rng.hpp"
#include "lmpc/tensor.hpp"

namespace lmpc {

struct RssmConfig {
  std::size_t obs_dim = 2;
  std::size_t action_dim = 1;
  std::size_t h_dim = 64;       // deterministic (GRU) state
  std::size_t s_dim = 16;       // stochastic state
  std::size_t hidden_dim = 64;  // width of the fully connected layers
  double min_std = 0.1;
  double free_nats = 1.0;
  double reward_scale = 1.0;
  /// Fixed std of the observation likelihood.
  double obs_std = 1.0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
  friend bool operator==(const RssmConfig&, const RssmConfig&) = default;
};

/// Indices into ModelParams::weights. Weight matrices are stored
/// [in, out] so a layer computes `x W + b` on row vectors.
enum Param : std::size_t {
  // GRU cell on input concat(s, a).
  kGruWz, kGruUz, kGruBz,
  kGruWr, kGruUr, kGruBr,
  kGruWn, kGruUn, kGruBn,
  // p(s | h)
  kPriorW1, kPriorB1, kPriorWm, kPriorBm, kPriorWs, kPriorBs,
  // observation encoder
  kEncW1, kEncB1, kEncW2, kEncB2,
  // q(s | h, x) on concat(h, enc(x))
  kPostW1, kPostB1, kPostWm, kPostBm, kPostWs, kPostBs,
  // p(x | h, s) and p(r | h, s) on concat(h, s)
  kObsW1, kObsB1, kObsW2, kObsB2,
  kRewW1, kRewB1, kRewW2, kRewB2,
  kParamCount
};

/// All weights of one recurrent state-space model.
struct ModelParams {
  RssmConfig config;
  ad::ParameterSet weights;

  const ad::Tensor& operator[](Param p) const { return weights[p]; }
  ad::Tensor& operator[](Param p) { return weights[p]; }

  /// Throws ShapeError if the weights do not match `config`.
  void check() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Names and shapes of every parameter for `config`, in Param order.
std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const RssmConfig& config);

/// Glorot-uniform weights and zero biases.
ModelParams init_params(const RssmConfig& config, std::uint64_t seed);
ModelParams zero_params(const RssmConfig& config);

struct LatentState {
  std::vector<double> h;
  std::vector<double> s;

  static LatentState zeros(const RssmConfig& c) {
    return {std::vector<double>(c.h_dim, 0.0), std::vector<double>(c.s_dim, 0.0)};
  }
  friend bool operator==(const LatentState&, const LatentState&) = default;
};

/// Diagonal Gaussian; std is already floored at min_std where applicable.
struct GaussianHead {
  std::vector<double> mean;
  std::vector<double> std;
};

struct Decoded {
  GaussianHead obs;
  GaussianHead reward;
};

std::vector<double> gru_step(const ModelParams& p, const LatentState& prev,
                             std::span<const double> action);
GaussianHead prior(const ModelParams& p, std::span<const double> h);
GaussianHead posterior(const ModelParams& p, std::span<const double> h,
                       std::span<const double> x);
Decoded decode(const ModelParams& p, std::span<const double> h, std::span<const double> s);

/// Reparameterised draw mean + std * eps.
std::vector<double> sample(const GaussianHead& head, Rng& rng);

/// KL(q || p) for diagonal Gaussians, summed over dimensions.
double kl_diag_gaussian(const GaussianHead& q, const GaussianHead& p);

// Row-batched forward passes used by belief tracking and planning. Every
// buffer is row-major with `rows` rows. Each row is computed independently,
// so results do not depend on how rows are grouped into calls.
namespace batched {

void gru(const ModelParams& p, std::size_t rows, std::span<const double> h,
         std::span<const double> s, std::span<const double> a, std::span<double> h_out);
void prior(const ModelParams& p, std::size_t rows, std::span<const double> h,
           std::span<double> mean, std::span<double> std);
void posterior(const ModelParams& p, std::size_t rows, std::span<const double> h,
               std::span<const double> x, std::span<double> mean, std::span<double> std);
void reward(const ModelParams& p, std::size_t rows, std::span<const double> h,
            std::span<const double> s, std::span<double> r);
void observation(const ModelParams& p, std::size_t rows, std::span<const double> h,
                 std::span<const double> s, std::span<double> x);

}  // namespace batched

/// Fixed-length training segments stacked along the batch axis.
///
/// obs[t] is x_t with shape [batch, obs_dim] for t in [0, length).
/// actions[t] is the action taken after observing x_t, t in [0, length-1).
/// rewards[t] is the reward received on arriving at x_{t+1}, shape [batch, 1].
struct SegmentBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<ad::Tensor> obs;
  std::vector<ad::Tensor> actions;
  std::vector<ad::Tensor> rewards;

  void check(const RssmConfig& config) const;
};

struct ElboResult {
  /// Negative ELBO with the free-nats floor, averaged over the batch.
  double loss = 0.0;
  /// Observation and reward negative log-likelihood.
  double reconstruction = 0.0;
  /// KL(q || p) summed over time before flooring.
  double complexity = 0.0;
  /// Gradient of `loss`; empty unless requested.
  ad::ParameterSet gradients;
};

/// Sequential negative ELBO of `batch` under `params`. The initial
/// deterministic state and preceding action are zero; latent samples use the
/// reparameterisation trick with noise drawn from `rng` in time order.
/// Throws NumericError with the term breakdown if the loss is not finite.
ElboResult elbo(const ModelParams& params, const SegmentBatch& batch, Rng& rng,
                bool with_gradient = true);

/// Mean squared error of one-step open-loop observation predictions (prior
/// mean, no posterior correction) along the segments.
double one_step_prediction_error(const ModelParams& params, const SegmentBatch& batch, Rng& rng);

}  // namespace lmpc
