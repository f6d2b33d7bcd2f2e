// SPDX-License-Identifier: Apache-2.0
#include "lmpc/agent.hpp"

#include <algorithm>
#include <exception>

#include "lmpc/error.hpp"

namespace lmpc {

void AgentConfig::validate() const {
  if (!(explore_noise >= 0)) throw ConfigError("agent.explore_noise must be >= 0");
}

namespace {

EpisodeRecord empty_record(const envs::EnvSpec& spec, std::uint64_t seed, PolicyTag tag) {
  EpisodeRecord r;
  r.seed = seed;
  r.policy = tag;
  r.obs_dim = spec.obs_dim;
  r.action_dim = spec.action_dim;
  return r;
}

}  // namespace

Dataset collect_seed_episodes(const envs::Environment& env, std::size_t n, Rng& rng) {
  const auto& spec = env.spec();
  Dataset data;
  data.obs_dim = spec.obs_dim;
  data.action_dim = spec.action_dim;
  for (std::size_t j = 0; j < n; ++j) {
    const std::uint64_t seed = rng.next_u64();
    auto [state, obs] = env.reset(seed);
    EpisodeRecord ep = empty_record(spec, seed, PolicyTag::kRandom);
    std::vector<double> a(spec.action_dim);
    for (std::size_t t = 0; t < spec.episode_length; ++t) {
      for (auto& x : a) x = rng.uniform(spec.action_low, spec.action_high);
      auto step = env.step(state, a);
      ep.append(obs, a, step.reward);
      state = std::move(step.state);
      obs = std::move(step.observation);
    }
    data.add(std::move(ep));
  }
  return data;
}

EpisodeOutcome run_control_episode(const envs::Environment& env,
                                   const PosteriorEnsemble& ensemble, const PlanConfig& plan_config,
                                   Rng& rng, const ControlOptions& options) {
  plan_config.validate();
  const auto& spec = env.spec();
  const auto& c = ensemble.config();
  if (c.obs_dim != spec.obs_dim || c.action_dim != spec.action_dim) {
    throw ShapeError("run_control_episode: model and environment dimensions differ");
  }
  const bool evaluate = options.mode == ActionMode::kEvaluate;

  EpisodeOutcome out;
  const std::uint64_t seed = rng.next_u64();
  out.record = empty_record(spec, seed, evaluate ? PolicyTag::kEvaluate : PolicyTag::kExplore);
  try {
    auto [state, obs] = env.reset(seed);
    EnsembleBelief belief = initial_belief(ensemble);
    std::vector<double> prev_action(spec.action_dim, 0.0);
    GmmParams phi;
    double best_sum = 0.0, mean_sum = 0.0;
    for (std::size_t t = 0; t < spec.episode_length; ++t) {
      belief = belief_update(ensemble, belief, prev_action, obs, rng, evaluate);
      phi = t == 0 ? initial_gmm(plan_config.M, plan_config.T, spec.action_dim,
                                 plan_config.init_std, plan_config.action_low,
                                 plan_config.action_high)
                   : warm_start(phi, plan_config.init_std);
      EnsembleEvaluator evaluator(ensemble, belief, options.parallel, options.counter);
      PlanResult res = plan(evaluator, phi, plan_config, rng);
      phi = std::move(res.gmm);
      best_sum += res.iterations.back().best_return;
      mean_sum += res.iterations.back().mean_return;

      auto a = executed_action(phi, options.mode, evaluate ? 0.0 : options.explore_noise,
                               spec.action_low, spec.action_high, rng);
      auto step = env.step(state, a);
      out.record.append(obs, a, step.reward);
      out.reward += step.reward;
      out.plan_best_return = best_sum / static_cast<double>(t + 1);
      out.plan_mean_return = mean_sum / static_cast<double>(t + 1);
      state = std::move(step.state);
      obs = std::move(step.observation);
      prev_action = std::move(a);
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = "step " + std::to_string(out.record.length()) + ": " + e.what();
  }
  return out;
}

double probe_disagreement(const PosteriorEnsemble& ensemble, const envs::Environment& env,
                          std::size_t horizon) {
  const auto [state, obs] = env.reset(0);
  Rng unused(0);
  const std::vector<double> no_action(env.spec().action_dim, 0.0);
  const EnsembleBelief belief =
      belief_update(ensemble, initial_belief(ensemble), no_action, obs, unused, true);
  const auto probes = probe_sequences(horizon, env.spec().action_dim);
  double total = 0.0;
  for (const auto& p : probes) total += ensemble_disagreement(ensemble, belief, p, horizon);
  return total / static_cast<double>(probes.size());
}

std::vector<double> History::last_rewards(std::size_t n) const {
  const std::size_t take = std::min(n, iterations.size());
  std::vector<double> out;
  for (std::size_t j = iterations.size() - take; j < iterations.size(); ++j) {
    out.push_back(iterations[j].episode_reward);
  }
  return out;
}

History outer_loop(const envs::Environment& env, const LoopConfig& config, const LoopHooks& hooks) {
  config.agent.validate();
  config.plan.validate();
  config.train.validate();
  RssmConfig rssm = config.rssm;
  rssm.obs_dim = env.spec().obs_dim;
  rssm.action_dim = env.spec().action_dim;

  History hist;
  hist.ensemble = init_ensemble(rssm, config.ensemble_size, derive_seed(config.seed, 1));
  Rng seed_rng(derive_seed(config.seed, 2));
  hist.data = collect_seed_episodes(env, config.agent.seed_episodes, seed_rng);
  hist.seed_episodes = hist.data.episodes.size();
  hist.seed_transitions = hist.data.transitions();
  if (hooks.on_seed_data) hooks.on_seed_data(hist.data);

  for (std::size_t it = 1; it <= config.agent.outer_iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    const TrainReport report =
        train_ensemble(hist.ensemble, hist.data, config.agent.train_steps, config.train);
    for (std::size_t i = 0; i < hist.ensemble.size(); ++i) {
      rec.train_loss.push_back(report.recent_loss(i));
    }

    Rng control_rng(derive_seed(config.seed, 3, it));
    ControlOptions opts{ActionMode::kExplore, config.agent.explore_noise, config.parallel, nullptr};
    EpisodeOutcome ep = run_control_episode(env, hist.ensemble, config.plan, control_rng, opts);
    if (ep.failed) throw Error("outer iteration " + std::to_string(it) + ": " + ep.error);

    rec.episode_reward = ep.reward;
    rec.plan_best_return = ep.plan_best_return;
    rec.plan_mean_return = ep.plan_mean_return;
    rec.disagreement = probe_disagreement(hist.ensemble, env, config.plan.T);

    if (config.agent.eval_every > 0 && it % config.agent.eval_every == 0) {
      Rng eval_rng(derive_seed(config.seed, 4, it));
      ControlOptions eo{ActionMode::kEvaluate, 0.0, config.parallel, nullptr};
      EpisodeOutcome ev = run_control_episode(env, hist.ensemble, config.plan, eval_rng, eo);
      if (ev.failed) throw Error("evaluation at iteration " + std::to_string(it) + ": " + ev.error);
      rec.eval_reward = ev.reward;
      rec.evaluated = true;
    }

    hist.data.add(ep.record);
    rec.episodes = hist.data.episodes.size();
    rec.transitions = hist.data.transitions();
    hist.iterations.push_back(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec, ep.record, hist);
  }
  return hist;
}

}  // namespace lmpc
