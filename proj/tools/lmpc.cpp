// SPDX-License-Identifier: Apache-2.0
// Command-line driver: train, eval, ablate, plan-demo.
#include <spdlog/spdlog.h>

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lmpc/commands.hpp"
#include "lmpc/error.hpp"

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string seed;
  std::string out;
  std::string threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "key=value config file");
  cmd->add_option("--set", c.sets, "override one key, e.g. --set plan.K=100")->take_all();
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--threads", c.threads, "OpenMP threads (0 = default)");
}

lmpc::RunConfig resolve(const Common& c) {
  std::vector<std::string> sets = c.sets;
  if (!c.seed.empty()) sets.push_back("seed=" + c.seed);
  if (!c.out.empty()) sets.push_back("out=" + c.out);
  if (!c.threads.empty()) sets.push_back("threads=" + c.threads);
  return lmpc::load_config(c.config_file, sets);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware latent model predictive control"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  Common train_opts, eval_opts, ablate_opts, demo_opts;
  auto* train = app.add_subcommand("train", "run the training and control loop");
  add_common(train, train_opts);

  auto* eval = app.add_subcommand("eval", "evaluate a saved ensemble");
  add_common(eval, eval_opts);
  std::string checkpoint;
  std::size_t episodes = 10;
  eval->add_option("--checkpoint", checkpoint, "ensemble checkpoint file")->required();
  eval->add_option("--episodes", episodes, "number of evaluation episodes");

  auto* ablate = app.add_subcommand("ablate", "model x action uncertainty ablation grid");
  add_common(ablate, ablate_opts);

  auto* demo = app.add_subcommand("plan-demo", "plan against an analytic reward landscape");
  add_common(demo, demo_opts);
  std::string landscape = "bimodal";
  demo->add_option("landscape", landscape, "bimodal or quadratic");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*train) {
      lmpc::cmd_train(resolve(train_opts), std::cout);
    } else if (*eval) {
      lmpc::cmd_eval(resolve(eval_opts), checkpoint, episodes, std::cout);
    } else if (*ablate) {
      lmpc::cmd_ablate(resolve(ablate_opts), std::cout);
    } else if (*demo) {
      lmpc::cmd_plan_demo(landscape, resolve(demo_opts), std::cout);
    }
  } catch (const lmpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
