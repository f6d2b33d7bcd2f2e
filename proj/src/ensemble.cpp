// SPDX-License-Identifier: Apache-2.0
#include "lmpc/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "lmpc/error.hpp"

namespace lmpc {

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (segment_length < 2) throw ConfigError("train: segment_length must be >= 2");
  if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(grad_clip > 0)) throw ConfigError("train: grad_clip must be > 0");
  if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
}

PosteriorEnsemble init_ensemble(const RssmConfig& config, std::size_t E,
                                std::uint64_t master_seed) {
  if (E == 0) throw ConfigError("ensemble: size must be >= 1");
  config.validate();
  std::vector<ModelParams> members;
  for (std::size_t i = 0; i < E; ++i) {
    members.push_back(init_params(config, derive_seed(master_seed, i, 0)));
  }
  return ensemble_from_members(std::move(members), master_seed);
}

PosteriorEnsemble ensemble_from_members(std::vector<ModelParams> members,
                                        std::uint64_t master_seed) {
  if (members.empty()) throw ConfigError("ensemble: size must be >= 1");
  PosteriorEnsemble ens;
  for (std::size_t i = 0; i < members.size(); ++i) {
    ens.optimizers.push_back(ad::AdamState::for_params(members[i].weights));
    ens.streams.emplace_back(derive_seed(master_seed, i, 1));
  }
  ens.members = std::move(members);
  return ens;
}

double TrainReport::recent_loss(std::size_t member, std::size_t window) const {
  const auto& l = losses.at(member);
  if (l.empty()) return 0.0;
  const std::size_t n = std::min(window, l.size());
  double s = 0.0;
  for (std::size_t i = l.size() - n; i < l.size(); ++i) s += l[i];
  return s / static_cast<double>(n);
}

namespace {

void train_member(ModelParams& params, ad::AdamState& opt, Rng& rng, const Dataset& data,
                  std::size_t steps, std::size_t length, const TrainConfig& cfg,
                  std::vector<double>& losses) {
  for (std::size_t step = 0; step < steps; ++step) {
    SegmentBatch batch = sample_segments(data, cfg.batch, length, rng);
    ElboResult r = elbo(params, batch, rng, true);
    losses.push_back(r.loss);
    if (cfg.weight_decay > 0) {
      for (std::size_t p = 0; p < params.weights.size(); ++p) {
        auto& g = r.gradients[p];
        const auto& w = params.weights[p];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.weight_decay * w[i];
      }
    }
    ad::clip_by_global_norm(r.gradients, cfg.grad_clip);
    ad::adam_step(params.weights, r.gradients, opt, cfg.learning_rate, cfg.adam);
  }
}

}  // namespace

TrainReport train_ensemble(PosteriorEnsemble& ensemble, const Dataset& data, std::size_t steps,
                           const TrainConfig& config) {
  config.validate();
  const std::size_t E = ensemble.size();
  TrainReport report;
  report.losses.resize(E);
  if (steps == 0) return report;
  if (data.empty()) throw Error("train_ensemble: dataset is empty");

  std::size_t longest = 0;
  for (const auto& e : data.episodes) longest = std::max(longest, e.length());
  const std::size_t length = std::min(config.segment_length, longest);
  if (length < 2) throw Error("train_ensemble: episodes are shorter than 2 steps");

  std::vector<std::exception_ptr> errors(E);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < E; ++i) {
    try {
      // Train a private copy and publish it only on success.
      ModelParams params = ensemble.members[i];
      ad::AdamState opt = ensemble.optimizers[i];
      train_member(params, opt, ensemble.streams[i], data, steps, length, config,
                   report.losses[i]);
      ensemble.members[i] = std::move(params);
      ensemble.optimizers[i] = std::move(opt);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < E; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const NumericError& e) {
      throw NumericError("ensemble member " + std::to_string(i) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error("ensemble member " + std::to_string(i) + ": " + e.what());
    }
  }
  return report;
}

EnsembleBelief initial_belief(const PosteriorEnsemble& ensemble) {
  const auto& c = ensemble.config();
  EnsembleBelief b;
  b.states.assign(ensemble.size(), LatentState::zeros(c));
  b.last_action.assign(c.action_dim, 0.0);
  return b;
}

EnsembleBelief belief_update(const PosteriorEnsemble& ensemble, const EnsembleBelief& belief,
                             std::span<const double> action, std::span<const double> observation,
                             Rng& rng, bool use_mean) {
  const auto& c = ensemble.config();
  if (belief.size() != ensemble.size()) {
    throw ShapeError("belief_update: belief has " + std::to_string(belief.size()) +
                     " members, ensemble has " + std::to_string(ensemble.size()));
  }
  if (action.size() != c.action_dim || observation.size() != c.obs_dim) {
    throw ShapeError("belief_update: action or observation has the wrong size");
  }
  EnsembleBelief next;
  next.steps = belief.steps + 1;
  next.last_action.assign(action.begin(), action.end());
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const auto& params = ensemble.members[i];
    LatentState st;
    st.h = belief.steps > 0 ? gru_step(params, belief.states[i], action) : belief.states[i].h;
    GaussianHead q = posterior(params, st.h, observation);
    st.s = use_mean ? q.mean : sample(q, rng);
    next.states.push_back(std::move(st));
  }
  return next;
}

double ensemble_disagreement(const PosteriorEnsemble& ensemble, const EnsembleBelief& belief,
                             std::span<const double> actions, std::size_t horizon) {
  const auto& c = ensemble.config();
  if (actions.size() != horizon * c.action_dim) {
    throw ShapeError("ensemble_disagreement: action sequence does not match horizon");
  }
  if (belief.size() != ensemble.size()) throw ShapeError("ensemble_disagreement: belief size");
  const std::size_t E = ensemble.size();
  if (E < 2) return 0.0;
  std::vector<double> returns(E, 0.0);
  for (std::size_t i = 0; i < E; ++i) {
    const auto& p = ensemble.members[i];
    LatentState st = belief.states[i];
    std::vector<double> std_buf(c.s_dim), r(1);
    for (std::size_t t = 0; t < horizon; ++t) {
      st.h = gru_step(p, st, actions.subspan(t * c.action_dim, c.action_dim));
      batched::prior(p, 1, st.h, st.s, std_buf);
      batched::reward(p, 1, st.h, st.s, r);
      returns[i] += r[0];
    }
  }
  double mean = 0.0;
  for (double v : returns) mean += v;
  mean /= static_cast<double>(E);
  double var = 0.0;
  for (double v : returns) var += (v - mean) * (v - mean);
  return var / static_cast<double>(E);
}

std::vector<std::vector<double>> probe_sequences(std::size_t horizon, std::size_t action_dim) {
  std::vector<std::vector<double>> probes;
  for (double level : {0.0, 0.5, -0.5}) {
    probes.emplace_back(horizon * action_dim, level);
  }
  std::vector<double> wave(horizon * action_dim);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t d = 0; d < action_dim; ++d) {
      wave[t * action_dim + d] = 0.8 * std::sin(0.5 * static_cast<double>(t) + static_cast<double>(d));
    }
  }
  probes.push_back(std::move(wave));
  return probes;
}

}  // namespace lmpc
