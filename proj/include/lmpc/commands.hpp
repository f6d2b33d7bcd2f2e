// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lmpc/config.hpp"
#include "lmpc/planner.hpp"

namespace lmpc {

/// Runs the outer loop. Writes into config.out: config.txt, metrics.csv,
/// dataset.lmpd (append-only) and checkpoints/iter_NNNN.lmpc, keeping the
/// newest io.keep_checkpoints. Prints a final summary line to `log`.
History cmd_train(const RunConfig& config, std::ostream& log);

struct EvalSummary {
  std::vector<double> rewards;
  double median = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
};

/// `episodes` deterministic evaluation episodes from a saved ensemble.
EvalSummary cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
                     std::size_t episodes, std::ostream& log);

struct AblationRow {
  bool model_uncertainty = false;   // E > 1
  bool action_uncertainty = false;  // M > 1
  std::size_t E = 1;
  std::size_t M = 1;
  /// Candidates per iteration; K * E is the same in every row.
  std::size_t K = 0;
  /// Last ablate.last_k control-episode rewards of every seed.
  std::vector<double> rewards;
  double mean = 0.0;
  double std = 0.0;
};

/// The 2x2 grid {E, 1} x {M, 1} over ablate.seeds shared seeds, at equal
/// rollout budget: rows with one member plan with plan.K * E candidates.
/// Writes config.out/ablation.csv and prints the table.
std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::ostream& log);

/// Plans once against an analytic landscape and writes every iteration's
/// mixture to config.out/plan_trace.csv.
PlanResult cmd_plan_demo(const std::string& landscape, const RunConfig& config, std::ostream& log);

}  // namespace lmpc
