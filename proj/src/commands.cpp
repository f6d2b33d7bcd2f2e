// SPDX-License-Identifier: Apache-2.0
#include "lmpc/commands.hpp"

#include <omp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "lmpc/checkpoint.hpp"
#include "lmpc/error.hpp"
#include "lmpc/metrics.hpp"

namespace lmpc {

namespace fs = std::filesystem;

namespace {

void apply_threads(const RunConfig& config) {
  if (config.threads > 0) omp_set_num_threads(static_cast<int>(config.threads));
}

void prepare_out(const RunConfig& config) {
  fs::create_directories(config.out);
  std::ofstream cfg(fs::path(config.out) / "config.txt", std::ios::trunc);
  if (!cfg) throw Error("cannot write " + (fs::path(config.out) / "config.txt").string());
  cfg << dump_config(config);
}

void prune_checkpoints(const fs::path& dir, std::size_t keep) {
  if (keep == 0) return;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("iter_", 0) == 0 && e.path().extension() == ".lmpc") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (std::size_t j = 0; j + keep < files.size(); ++j) fs::remove(files[j]);
}

std::string checkpoint_name(std::size_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%04zu.lmpc", iteration);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

History cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  apply_threads(config);
  prepare_out(config);
  const fs::path out(config.out);
  const fs::path ckpt_dir = out / "checkpoints";
  fs::create_directories(ckpt_dir);
  const fs::path dataset_path = out / "dataset.lmpd";
  fs::remove(dataset_path);

  auto env = envs::make_env(config.env_name);
  MetricsWriter metrics(out / "metrics.csv");
  const auto start = std::chrono::steady_clock::now();

  LoopHooks hooks;
  hooks.on_seed_data = [&](const Dataset& data) {
    for (const auto& ep : data.episodes) append_episode(dataset_path, ep);
  };
  hooks.on_iteration = [&](const IterationRecord& rec, const EpisodeRecord& ep,
                           const History& hist) {
    append_episode(dataset_path, ep);
    MetricsRow row;
    row.iteration = rec.iteration;
    row.episodes = rec.episodes;
    row.transitions = rec.transitions;
    row.train_loss = rec.train_loss;
    row.episode_reward = rec.episode_reward;
    row.plan_best_return = rec.plan_best_return;
    row.plan_mean_return = rec.plan_mean_return;
    row.disagreement = rec.disagreement;
    if (config.wall_clock) {
      row.wall_clock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    metrics.write(row);
    save_ensemble(ckpt_dir / checkpoint_name(rec.iteration), hist.ensemble.members);
    prune_checkpoints(ckpt_dir, config.keep_checkpoints);
    spdlog::info("iteration {}: reward {:.3f}, disagreement {:.4g}", rec.iteration,
                 rec.episode_reward, rec.disagreement);
  };

  History hist = outer_loop(*env, config.loop(), hooks);
  const auto last = hist.last_rewards(5);
  log << "train done: iterations=" << hist.iterations.size()
      << " transitions=" << hist.data.transitions() << " mean_last5_reward=" << mean_of(last)
      << " out=" << out.string() << '\n';
  return hist;
}

EvalSummary cmd_eval(const RunConfig& config, const fs::path& checkpoint, std::size_t episodes,
                     std::ostream& log) {
  config.validate();
  apply_threads(config);
  if (episodes == 0) throw ConfigError("eval: --episodes must be >= 1");
  if (!fs::exists(checkpoint)) throw Error("checkpoint not found: " + checkpoint.string());
  auto members = load_ensemble(checkpoint);
  const PosteriorEnsemble ens = ensemble_from_members(std::move(members), config.seed);
  auto env = envs::make_env(config.env_name);

  EvalSummary s;
  for (std::size_t j = 0; j < episodes; ++j) {
    Rng rng(derive_seed(config.seed, 5, j));
    ControlOptions opts{ActionMode::kEvaluate, 0.0, true, nullptr};
    EpisodeOutcome ep = run_control_episode(*env, ens, config.plan, rng, opts);
    if (ep.failed) throw Error("evaluation episode " + std::to_string(j) + ": " + ep.error);
    s.rewards.push_back(ep.reward);
  }
  s.median = percentile(s.rewards, 50);
  s.p5 = percentile(s.rewards, 5);
  s.p95 = percentile(s.rewards, 95);
  log << "eval: episodes=" << episodes << " median=" << s.median << " p5=" << s.p5
      << " p95=" << s.p95 << '\n';
  return s;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::ostream& log) {
  config.validate();
  apply_threads(config);
  prepare_out(config);
  auto env = envs::make_env(config.env_name);

  std::vector<AblationRow> rows;
  for (bool model : {true, false}) {
    for (bool action : {true, false}) {
      AblationRow row;
      row.model_uncertainty = model;
      row.action_uncertainty = action;
      row.E = model ? config.ensemble_size : 1;
      row.M = action ? config.plan.M : 1;
      row.K = config.plan.K * config.ensemble_size / row.E;
      for (std::size_t s = 0; s < config.ablate_seeds; ++s) {
        RunConfig c = config;
        c.ensemble_size = row.E;
        c.plan.M = row.M;
        c.plan.K = row.K;
        c.seed = config.seed + s;
        History hist = outer_loop(*env, c.loop());
        const auto last = hist.last_rewards(config.ablate_last_k);
        row.rewards.insert(row.rewards.end(), last.begin(), last.end());
        spdlog::info("ablate E={} M={} seed {}: mean last reward {:.3f}", row.E, row.M, c.seed,
                     mean_of(last));
      }
      row.mean = mean_of(row.rewards);
      double ss = 0.0;
      for (double r : row.rewards) ss += (r - row.mean) * (r - row.mean);
      row.std = row.rewards.size() > 1 ? std::sqrt(ss / static_cast<double>(row.rewards.size() - 1))
                                       : 0.0;
      rows.push_back(std::move(row));
    }
  }

  std::ofstream csv(fs::path(config.out) / "ablation.csv", std::ios::trunc);
  csv << "model_uncertainty,action_uncertainty,E,M,K,mean_reward,std_reward,n\n";
  log << "model  action   E  M     K   reward (mean +- std)\n";
  for (const auto& r : rows) {
    csv << (r.model_uncertainty ? 1 : 0) << ',' << (r.action_uncertainty ? 1 : 0) << ',' << r.E
        << ',' << r.M << ',' << r.K << ',' << r.mean << ',' << r.std << ',' << r.rewards.size() << '\n';
    char line[128];
    std::snprintf(line, sizeof line, "  %s      %s   %3zu %2zu %5zu   %.2f +- %.2f\n",
                  r.model_uncertainty ? "y" : "-", r.action_uncertainty ? "y" : "-", r.E, r.M,
                  r.K, r.mean, r.std);
    log << line;
  }
  return rows;
}

PlanResult cmd_plan_demo(const std::string& landscape, const RunConfig& config, std::ostream& log) {
  const envs::Landscape land = envs::make_landscape(landscape);
  RunConfig c = config;
  c.plan.T = land.horizon;
  c.validate();
  apply_threads(c);
  prepare_out(c);

  Rng rng(derive_seed(c.seed, 6));
  const GmmParams initial = initial_gmm(c.plan.M, land.horizon, land.action_dim, c.plan.init_std,
                                        c.plan.action_low, c.plan.action_high);
  LandscapeEvaluator evaluator(land);
  PlanResult res = plan(evaluator, initial, c.plan, rng);

  std::ofstream csv(fs::path(c.out) / "plan_trace.csv", std::ios::trunc);
  if (!csv) throw Error("cannot write plan_trace.csv");
  csv.precision(17);
  csv << "iteration,component,weight,dim,mean,std\n";
  auto dump = [&](std::size_t j, const GmmParams& g) {
    for (std::size_t m = 0; m < g.components(); ++m) {
      for (std::size_t d = 0; d < g.dims(); ++d) {
        csv << j << ',' << m << ',' << g.weights[m] << ',' << d << ',' << g.means[m][d] << ','
            << g.stds[m][d] << '\n';
      }
    }
  };
  dump(0, initial);
  for (std::size_t j = 0; j < res.trace.size(); ++j) dump(j + 1, res.trace[j]);

  log << "plan-demo " << landscape << ": iterations=" << res.iterations.size()
      << " best_return=" << res.iterations.back().best_return << '\n';
  for (std::size_t m = 0; m < res.gmm.components(); ++m) {
    log << "  component " << m << ": weight=" << res.gmm.weights[m]
        << " mean[0]=" << res.gmm.means[m][0] << " std[0]=" << res.gmm.stds[m][0] << '\n';
  }
  return res;
}

}  // namespace lmpc
