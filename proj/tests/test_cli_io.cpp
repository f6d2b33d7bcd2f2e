// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lmpc/checkpoint.hpp"
#include "lmpc/commands.hpp"
#include "lmpc/config.hpp"
#include "lmpc/dataset.hpp"
#include "lmpc/error.hpp"
#include "lmpc/metrics.hpp"
#include "support.hpp"

namespace lmpc {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunConfig tiny_run(const std::string& name) {
  RunConfig c = load_config({}, {"rssm.h_dim=4", "rssm.s_dim=3", "rssm.hidden_dim=5",
                                 "plan.K=20", "plan.U=2", "plan.T=4", "plan.M=2",
                                 "agent.seed_episodes=2", "agent.train_steps=3",
                                 "agent.outer_iterations=3", "train.batch=4",
                                 "train.segment_length=8", "ensemble.E=2", "io.wall_clock=false",
                                 "io.keep_checkpoints=2", "ablate.seeds=1", "ablate.last_k=2"});
  c.out = test::scratch_dir(name).string();
  return c;
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, EmptyInputGivesDefaults) {
  const RunConfig c = load_config({}, {});
  const RunConfig d;
  EXPECT_EQ(dump_config(c), dump_config(d));
  EXPECT_EQ(c.plan.K, 200u);
  EXPECT_EQ(c.rssm.obs_std, 1.0);
}

TEST(Config, OverridesParse) {
  const RunConfig c = load_config({}, {"plan.M=5", " plan.kappa = 0.25 ", "io.wall_clock=false",
                                       "env.name=pointmass_po"});
  EXPECT_EQ(c.plan.M, 5u);
  EXPECT_EQ(c.plan.kappa, 0.25);
  EXPECT_FALSE(c.wall_clock);
  EXPECT_EQ(c.env_name, "pointmass_po");
}

TEST(Config, InvalidValuesAreRejected) {
  EXPECT_THROW(load_config({}, {"plan.K=0"}), ConfigError);
  EXPECT_THROW(load_config({}, {"plan.K=-3"}), ConfigError);
  EXPECT_THROW(load_config({}, {"plan.lambda=abc"}), ConfigError);
  EXPECT_THROW(load_config({}, {"io.wall_clock=maybe"}), ConfigError);
  EXPECT_THROW(load_config({}, {"env.name=cartpole"}), ConfigError);
  EXPECT_THROW(load_config({}, {"plan.K"}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/lmpc.cfg", {}), ConfigError);
}

TEST(Config, UnknownKeyListsValidKeys) {
  RunConfig c;
  try {
    apply_setting(c, "plan.horizon", "5");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("plan.horizon"), std::string::npos);
    for (const auto& k : config_keys()) EXPECT_NE(msg.find(k), std::string::npos) << k;
  }
}

TEST(Config, ErrorsCarryOriginAndLine) {
  RunConfig c;
  std::istringstream in("# comment\nplan.K=100\n\nplan.U=oops\n");
  try {
    apply_config_text(c, in, "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("run.cfg:4: ", 0), 0u) << e.what();
  }
  EXPECT_EQ(c.plan.K, 100u);
}

TEST(Config, DumpRoundTrips) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    RunConfig c;
    c.seed = rng.next_u64();
    c.plan.K = 2 + rng.index(500);
    c.plan.lambda = rng.uniform(0.1, 10.0);
    c.rssm.min_std = rng.uniform(1e-3, 1.0);
    c.train.learning_rate = rng.uniform(1e-5, 1e-2);
    c.wall_clock = rng.uniform() < 0.5;
    c.out = "dir " + std::to_string(trial);
    RunConfig back;
    std::istringstream in(dump_config(c));
    apply_config_text(back, in, "dump");
    EXPECT_EQ(dump_config(back), dump_config(c));
    EXPECT_EQ(back.plan.lambda, c.plan.lambda);
    EXPECT_EQ(back.seed, c.seed);
  }
}

TEST(Config, FileThenOverrides) {
  const auto dir = test::scratch_dir("config_file");
  std::ofstream(dir / "a.cfg") << "plan.K=50\nplan.U=3 # trailing comment\n";
  const RunConfig c = load_config(dir / "a.cfg", {"plan.U=7"});
  EXPECT_EQ(c.plan.K, 50u);
  EXPECT_EQ(c.plan.U, 7u);
}

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, RowFormat) {
  MetricsRow r;
  r.iteration = 3;
  r.episodes = 8;
  r.transitions = 800;
  r.train_loss = {1.5, 2.25};
  r.episode_reward = -0.5;
  r.plan_best_return = 4;
  r.plan_mean_return = 0.125;
  r.disagreement = 1e-3;
  EXPECT_EQ(format_metrics_row(r), "3,8,800,1.5;2.25,-0.5,4,0.125,0.001,0");
}

TEST(Metrics, CsvHasHeaderAndOneFieldPerColumn) {
  const auto dir = test::scratch_dir("metrics");
  {
    MetricsWriter w(dir / "m.csv");
    MetricsRow r;
    r.train_loss = {0.1, 0.2, 0.3};
    w.write(r);
    r.iteration = 1;
    w.write(r);
  }
  std::istringstream in(read_file(dir / "m.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kMetricsHeader);
  const auto columns = std::count(line.begin(), line.end(), ',');
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), columns) << line;
  }
  EXPECT_EQ(rows, 2);
}

TEST(Metrics, Percentile) {
  const std::vector<double> v{5, 1, 3, 2, 4};
  EXPECT_EQ(percentile(v, 50), 3.0);
  EXPECT_EQ(percentile(v, 0), 1.0);
  EXPECT_EQ(percentile(v, 100), 5.0);
  EXPECT_EQ(percentile(v, 25), 2.0);
  EXPECT_DOUBLE_EQ(percentile(v, 5), 1.2);
  EXPECT_EQ(percentile(std::vector<double>{7}, 95), 7.0);
  EXPECT_THROW(percentile(std::vector<double>{}, 50), Error);
}

// ---------------------------------------------------------------------------
// Commands

TEST(Commands, TrainWritesRunDirectory) {
  const RunConfig c = tiny_run("train");
  std::ostringstream log;
  const History h = cmd_train(c, log);
  const fs::path out(c.out);
  EXPECT_EQ(read_file(out / "config.txt"), dump_config(c));
  EXPECT_NE(log.str().find("train done: iterations=3"), std::string::npos) << log.str();

  std::vector<std::string> ckpts;
  for (const auto& e : fs::directory_iterator(out / "checkpoints")) {
    ckpts.push_back(e.path().filename().string());
  }
  std::sort(ckpts.begin(), ckpts.end());
  EXPECT_EQ(ckpts, (std::vector<std::string>{"iter_0002.lmpc", "iter_0003.lmpc"}));
  EXPECT_EQ(load_ensemble(out / "checkpoints" / "iter_0003.lmpc"), h.ensemble.members);

  EXPECT_EQ(load_dataset(out / "dataset.lmpd"), h.data);

  std::istringstream metrics(read_file(out / "metrics.csv"));
  std::string line;
  int rows = 0;
  std::getline(metrics, line);
  while (std::getline(metrics, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0");  // wall clock disabled
  }
  EXPECT_EQ(rows, 3);
}

TEST(Commands, EvalIsReproducibleAndNeedsCheckpoint) {
  RunConfig c = tiny_run("eval");
  std::ostringstream log;
  EXPECT_THROW(cmd_eval(c, fs::path(c.out) / "missing.lmpc", 2, log), Error);
  const auto ens = init_ensemble(test::tiny_config(), 2, 3);
  const auto ckpt = fs::path(c.out) / "e.lmpc";
  save_ensemble(ckpt, ens.members);
  const auto a = cmd_eval(c, ckpt, 3, log);
  const auto b = cmd_eval(c, ckpt, 3, log);
  EXPECT_EQ(a.rewards, b.rewards);
  ASSERT_EQ(a.rewards.size(), 3u);
  EXPECT_LE(a.p5, a.median);
  EXPECT_LE(a.median, a.p95);
  EXPECT_THROW(cmd_eval(c, ckpt, 0, log), ConfigError);
}

TEST(Commands, AblateProducesFourCells) {
  RunConfig c = tiny_run("ablate");
  c.agent.outer_iterations = 2;
  std::ostringstream log;
  const auto rows = cmd_ablate(c, log);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].E, 2u);
  EXPECT_EQ(rows[0].M, 2u);
  EXPECT_EQ(rows[3].E, 1u);
  EXPECT_EQ(rows[3].M, 1u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.rewards.size(), 2u);
    EXPECT_EQ(r.K * r.E, c.plan.K * c.ensemble_size);  // equal rollout budget
  }
  std::istringstream csv(read_file(fs::path(c.out) / "ablation.csv"));
  std::string line;
  int n = 0;
  while (std::getline(csv, line)) ++n;
  EXPECT_EQ(n, 5);
}

TEST(Commands, PlanDemoWritesTrace) {
  RunConfig c = tiny_run("demo");
  c.plan.M = 3;
  std::ostringstream log;
  const auto res = cmd_plan_demo("bimodal", c, log);
  EXPECT_EQ(res.trace.size(), c.plan.U);
  std::istringstream csv(read_file(fs::path(c.out) / "plan_trace.csv"));
  std::string line;
  int n = 0;
  while (std::getline(csv, line)) ++n;
  EXPECT_EQ(n, 1 + static_cast<int>((c.plan.U + 1) * 3));
  EXPECT_THROW(cmd_plan_demo("rastrigin", c, log), ConfigError);
}

// ---------------------------------------------------------------------------
// Binary

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LMPC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = test::scratch_dir("cli");
  EXPECT_EQ(run_cli("train --set bogus.key=1"), 2);
  EXPECT_EQ(run_cli("train --set plan.K=0"), 2);
  EXPECT_EQ(run_cli("eval --checkpoint " + (dir / "none.lmpc").string() + " --out " +
                    dir.string()),
            1);
  EXPECT_NE(run_cli(""), 0);
  EXPECT_EQ(run_cli("plan-demo quadratic --set plan.U=2 --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "plan_trace.csv"));
}

}  // namespace
}  // namespace lmpc
