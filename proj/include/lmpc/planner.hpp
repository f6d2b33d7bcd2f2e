// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lmpc/envs.hpp"
#include "lmpc/gmm.hpp"
#include "lmpc/rollout.hpp"

namespace lmpc {

struct PlanConfig {
  std::size_t K = 200;  // candidates per iteration
  std::size_t U = 10;   // update iterations
  std::size_t T = 12;   // horizon
  std::size_t M = 5;    // mixture components
  double lambda = 1.0;  // inverted step size
  double kappa = 0.0;   // entropy weight
  double elite_fraction = 0.1;
  double sigma_floor = 1e-3;
  double pi_floor = 1e-6;
  double init_std = 0.5;
  double action_low = -1.0;
  double action_high = 1.0;
  std::string likelihood = "indicator";

  /// Throws ConfigError naming the offending field.
  void validate() const;
  MixtureFloors floors() const { return {sigma_floor, pi_floor}; }
};

/// Optimality likelihood W(R) over member-averaged returns. Only the
/// indicator ships; the registry exists so alternatives can be added.
using LikelihoodFn = std::vector<double> (*)(std::span<const double> returns,
                                             double elite_fraction);
LikelihoodFn find_likelihood(const std::string& name);
std::vector<std::string> likelihood_names();

/// 1[R_k >= R_thd] with R_thd the n-th largest return,
/// n = clamp(ceil(e K), 1, K). Ties at the threshold all pass.
std::vector<double> indicator_likelihood(std::span<const double> returns, double elite_fraction);

/// Something that scores K action sequences of length T. Returns are
/// written as member_returns[k * members() + i].
class TrajectoryEvaluator {
 public:
  virtual ~TrajectoryEvaluator() = default;
  virtual std::size_t members() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual void evaluate(std::span<const double> candidates, std::size_t K, std::size_t T,
                        std::uint64_t seed, std::span<double> member_returns) = 0;
};

/// Latent rollouts through every ensemble member from the current belief.
class EnsembleEvaluator final : public TrajectoryEvaluator {
 public:
  EnsembleEvaluator(const PosteriorEnsemble& ensemble, const EnsembleBelief& belief,
                    bool parallel = true, RolloutCounter* counter = nullptr)
      : ensemble_(ensemble), belief_(belief), parallel_(parallel), counter_(counter) {}

  std::size_t members() const override { return ensemble_.size(); }
  std::size_t action_dim() const override { return ensemble_.config().action_dim; }
  void evaluate(std::span<const double> candidates, std::size_t K, std::size_t T,
                std::uint64_t seed, std::span<double> member_returns) override;

 private:
  const PosteriorEnsemble& ensemble_;
  const EnsembleBelief& belief_;
  bool parallel_;
  RolloutCounter* counter_;
};

/// Deterministic analytic reward of the whole sequence; one "member".
class LandscapeEvaluator final : public TrajectoryEvaluator {
 public:
  explicit LandscapeEvaluator(envs::Landscape landscape) : landscape_(std::move(landscape)) {}

  std::size_t members() const override { return 1; }
  std::size_t action_dim() const override { return landscape_.action_dim; }
  void evaluate(std::span<const double> candidates, std::size_t K, std::size_t T,
                std::uint64_t seed, std::span<double> member_returns) override;

 private:
  envs::Landscape landscape_;
};

struct CandidateBatch {
  std::size_t K = 0;
  std::size_t dims = 0;
  std::size_t members = 0;
  std::vector<double> actions;         // K x dims
  std::vector<double> member_returns;  // K x members
  std::vector<double> returns;         // R_k, mean over members
  std::vector<double> weights;         // w_k, sums to one
};

/// Fills actions, member_returns and returns.
CandidateBatch evaluate_candidates(TrajectoryEvaluator& evaluator, std::vector<double> candidates,
                                   std::size_t K, std::size_t T, std::uint64_t seed);

/// Normalised weights W(R_k)^(1/lambda) * q(a_k)^(-kappa), given log q(a_k).
/// If every raw weight is zero or the sum is not finite, all weight goes to
/// the best candidate and a warning is logged.
std::vector<double> optimality_weights(std::span<const double> returns,
                                       std::span<const double> log_q, double lambda, double kappa,
                                       double elite_fraction,
                                       const std::string& likelihood = "indicator");

struct IterationStats {
  double best_return = 0.0;
  double mean_return = 0.0;
  /// 1 / sum w_k^2.
  double effective_sample_size = 0.0;
  /// N_m per component.
  std::vector<double> occupancy;
};

struct PlanResult {
  GmmParams gmm;
  std::vector<IterationStats> iterations;
  /// phi after each iteration.
  std::vector<GmmParams> trace;
};

/// U iterations of sample, evaluate, weight, update starting from `initial`.
/// Each iteration first draws the rollout seed from `rng`, then samples.
/// U = 0 returns `initial` unchanged.
/// On error the exception propagates; `partial`, if given, keeps the
/// iterations completed so far.
PlanResult plan(TrajectoryEvaluator& evaluator, const GmmParams& initial, const PlanConfig& config,
                Rng& rng, PlanResult* partial = nullptr);

struct CemResult {
  GaussianProposal proposal;
  std::vector<IterationStats> iterations;
  std::vector<GaussianProposal> trace;
};

/// Single-Gaussian cross-entropy planner with elite-indicator weights. Uses
/// the random stream in the same order as plan() with one component.
CemResult plan_cem(TrajectoryEvaluator& evaluator, const GaussianProposal& initial,
                   const PlanConfig& config, Rng& rng);

enum class ActionMode { kExplore, kEvaluate };

/// First step of the plan. Explore: sample from the mixture, add Gaussian
/// noise of std `noise_std`, clip. Evaluate: mean of the heaviest component.
std::vector<double> executed_action(const GmmParams& gmm, ActionMode mode, double noise_std,
                                    double low, double high, Rng& rng);

}  // namespace lmpc
