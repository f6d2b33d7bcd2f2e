// SPDX-License-Identifier: Apache-2.0
#include "lmpc/planner.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "lmpc/error.hpp"

namespace lmpc {

void PlanConfig::validate() const {
  if (K < 2) throw ConfigError("plan.K must be >= 2");
  if (U < 1) throw ConfigError("plan.U must be >= 1");
  if (T < 1) throw ConfigError("plan.T must be >= 1");
  if (M < 1) throw ConfigError("plan.M must be >= 1");
  if (!(lambda > 0)) throw ConfigError("plan.lambda must be > 0");
  if (!(kappa >= 0)) throw ConfigError("plan.kappa must be >= 0");
  if (!(elite_fraction > 0 && elite_fraction <= 1)) {
    throw ConfigError("plan.elite_fraction must be in (0, 1]");
  }
  if (!(sigma_floor > 0)) throw ConfigError("plan.sigma_floor must be > 0");
  if (!(pi_floor >= 0) || pi_floor * static_cast<double>(M) >= 1.0) {
    throw ConfigError("plan.pi_floor must be in [0, 1/M)");
  }
  if (!(init_std > 0)) throw ConfigError("plan.init_std must be > 0");
  if (!(action_low < action_high)) throw ConfigError("plan: action_low must be < action_high");
  find_likelihood(likelihood);
}

std::vector<double> indicator_likelihood(std::span<const double> returns, double elite_fraction) {
  const std::size_t K = returns.size();
  if (K == 0) return {};
  const auto want = static_cast<std::size_t>(
      std::ceil(elite_fraction * static_cast<double>(K) - 1e-9));
  const std::size_t n = std::clamp<std::size_t>(want, 1, K);
  std::vector<double> sorted(returns.begin(), returns.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n - 1),
                   sorted.end(), std::greater<>());
  const double threshold = sorted[n - 1];
  std::vector<double> out(K);
  for (std::size_t k = 0; k < K; ++k) out[k] = returns[k] >= threshold ? 1.0 : 0.0;
  return out;
}

LikelihoodFn find_likelihood(const std::string& name) {
  if (name == "indicator") return &indicator_likelihood;
  throw ConfigError("unknown optimality likelihood '" + name + "' (valid: indicator)");
}

std::vector<std::string> likelihood_names() { return {"indicator"}; }

void EnsembleEvaluator::evaluate(std::span<const double> candidates, std::size_t K, std::size_t T,
                                 std::uint64_t seed, std::span<double> member_returns) {
  RolloutJob job{&ensemble_, &belief_, candidates, K, T, seed};
  if (parallel_) rollout_parallel(job, member_returns, counter_);
  else rollout_serial(job, member_returns, counter_);
}

void LandscapeEvaluator::evaluate(std::span<const double> candidates, std::size_t K, std::size_t T,
                                  std::uint64_t, std::span<double> member_returns) {
  if (T != landscape_.horizon) {
    throw ShapeError("landscape '" + landscape_.name + "' has horizon " +
                     std::to_string(landscape_.horizon) + ", planner asked for " +
                     std::to_string(T));
  }
  const std::size_t D = T * landscape_.action_dim;
  if (candidates.size() != K * D || member_returns.size() != K) {
    throw ShapeError("landscape evaluator: buffer sizes");
  }
  for (std::size_t k = 0; k < K; ++k) {
    member_returns[k] = landscape_.reward(candidates.subspan(k * D, D));
  }
}

CandidateBatch evaluate_candidates(TrajectoryEvaluator& evaluator, std::vector<double> candidates,
                                   std::size_t K, std::size_t T, std::uint64_t seed) {
  CandidateBatch b;
  b.K = K;
  b.dims = T * evaluator.action_dim();
  b.members = evaluator.members();
  b.actions = std::move(candidates);
  if (b.actions.size() != K * b.dims) throw ShapeError("evaluate_candidates: candidate count");
  b.member_returns.assign(K * b.members, 0.0);
  evaluator.evaluate(b.actions, K, T, seed, b.member_returns);
  b.returns.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < b.members; ++i) s += b.member_returns[k * b.members + i];
    b.returns[k] = s / static_cast<double>(b.members);
    if (!std::isfinite(b.returns[k])) {
      throw NumericError("evaluate_candidates: non-finite return for candidate " +
                         std::to_string(k));
    }
  }
  return b;
}

std::vector<double> optimality_weights(std::span<const double> returns,
                                       std::span<const double> log_q, double lambda, double kappa,
                                       double elite_fraction, const std::string& likelihood) {
  const std::size_t K = returns.size();
  if (K == 0) throw ShapeError("optimality_weights: no candidates");
  if (kappa != 0 && log_q.size() != K) throw ShapeError("optimality_weights: log_q size");
  const auto W = find_likelihood(likelihood)(returns, elite_fraction);

  std::vector<double> w(K);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    double raw = W[k] == 1.0 ? 1.0 : std::pow(W[k], 1.0 / lambda);
    if (kappa != 0 && raw != 0) raw *= std::exp(-kappa * log_q[k]);
    w[k] = raw;
    total += raw;
  }
  if (!(total > 0) || !std::isfinite(total)) {
    const auto best = static_cast<std::size_t>(
        std::max_element(returns.begin(), returns.end()) - returns.begin());
    spdlog::warn("optimality weights degenerate (sum {}); using the best candidate only", total);
    std::fill(w.begin(), w.end(), 0.0);
    w[best] = 1.0;
    return w;
  }
  for (auto& x : w) x /= total;
  return w;
}

namespace {

IterationStats summarize(const CandidateBatch& b, std::vector<double> occupancy) {
  IterationStats s;
  s.best_return = *std::max_element(b.returns.begin(), b.returns.end());
  double sum = 0.0, sq = 0.0;
  for (double r : b.returns) sum += r;
  for (double w : b.weights) sq += w * w;
  s.mean_return = sum / static_cast<double>(b.K);
  s.effective_sample_size = sq > 0 ? 1.0 / sq : 0.0;
  s.occupancy = std::move(occupancy);
  return s;
}

}  // namespace

PlanResult plan(TrajectoryEvaluator& evaluator, const GmmParams& initial, const PlanConfig& config,
                Rng& rng, PlanResult* partial) {
  PlanConfig checked = config;
  checked.U = std::max<std::size_t>(config.U, 1);
  checked.validate();
  initial.check();
  if (initial.horizon != config.T || initial.action_dim != evaluator.action_dim()) {
    throw ShapeError("plan: mixture shape does not match horizon and action size");
  }
  PlanResult local;
  PlanResult& res = partial != nullptr ? *partial : local;
  res = PlanResult{};
  res.gmm = initial;
  for (std::size_t j = 0; j < config.U; ++j) {
    const std::uint64_t seed = rng.next_u64();
    auto cand = sample_candidates(res.gmm, config.K, config.action_low, config.action_high, rng);
    CandidateBatch batch = evaluate_candidates(evaluator, std::move(cand), config.K, config.T, seed);
    std::vector<double> log_q;
    if (config.kappa != 0) {
      log_q.resize(config.K);
      for (std::size_t k = 0; k < config.K; ++k) {
        log_q[k] = gmm_log_density(
            res.gmm, std::span<const double>(batch.actions).subspan(k * batch.dims, batch.dims));
      }
    }
    batch.weights = optimality_weights(batch.returns, log_q, config.lambda, config.kappa,
                                       config.elite_fraction, config.likelihood);
    std::vector<double> occupancy(res.gmm.components());
    res.gmm = paets_update(res.gmm, batch.actions, batch.weights, config.floors(), occupancy);
    res.iterations.push_back(summarize(batch, std::move(occupancy)));
    res.trace.push_back(res.gmm);
  }
  if (partial != nullptr) return *partial;
  return local;
}

CemResult plan_cem(TrajectoryEvaluator& evaluator, const GaussianProposal& initial,
                   const PlanConfig& config, Rng& rng) {
  config.validate();
  const std::size_t D = config.T * evaluator.action_dim();
  if (initial.mean.size() != D || initial.std.size() != D) {
    throw ShapeError("plan_cem: proposal shape does not match horizon and action size");
  }
  CemResult res;
  res.proposal = initial;
  const std::vector<double> no_log_q;
  for (std::size_t j = 0; j < config.U; ++j) {
    const std::uint64_t seed = rng.next_u64();
    std::vector<double> cand(config.K * D);
    for (std::size_t k = 0; k < config.K; ++k) {
      for (std::size_t d = 0; d < D; ++d) {
        const double x = res.proposal.mean[d] + res.proposal.std[d] * rng.normal();
        cand[k * D + d] = std::clamp(x, config.action_low, config.action_high);
      }
    }
    CandidateBatch batch = evaluate_candidates(evaluator, std::move(cand), config.K, config.T, seed);
    batch.weights = optimality_weights(batch.returns, no_log_q, config.lambda, 0.0,
                                       config.elite_fraction, config.likelihood);
    res.proposal = cem_update(res.proposal, batch.actions, batch.weights, config.sigma_floor);
    res.iterations.push_back(summarize(batch, {1.0}));
    res.trace.push_back(res.proposal);
  }
  return res;
}

std::vector<double> executed_action(const GmmParams& gmm, ActionMode mode, double noise_std,
                                    double low, double high, Rng& rng) {
  gmm.check();
  const std::size_t A = gmm.action_dim;
  std::vector<double> a(A);
  if (mode == ActionMode::kEvaluate) {
    const auto m = static_cast<std::size_t>(
        std::max_element(gmm.weights.begin(), gmm.weights.end()) - gmm.weights.begin());
    for (std::size_t d = 0; d < A; ++d) a[d] = std::clamp(gmm.means[m][d], low, high);
    return a;
  }
  const auto seq = sample_candidates(gmm, 1, low, high, rng);
  for (std::size_t d = 0; d < A; ++d) {
    double x = seq[d];
    if (noise_std > 0) x += noise_std * rng.normal();
    a[d] = std::clamp(x, low, high);
  }
  return a;
}

}  // namespace lmpc
