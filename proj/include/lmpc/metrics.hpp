// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace lmpc {

/// One line of metrics.csv per outer iteration.
struct MetricsRow {
  std::size_t iteration = 0;
  std::size_t episodes = 0;
  std::size_t transitions = 0;
  std::vector<double> train_loss;  // per member, joined with ';'
  double episode_reward = 0.0;
  double plan_best_return = 0.0;
  double plan_mean_return = 0.0;
  double disagreement = 0.0;
  double wall_clock_s = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "iteration,episodes,transitions,train_loss,episode_reward,plan_best_return,"
    "plan_mean_return,disagreement,wall_clock_s";

std::string format_metrics_row(const MetricsRow& row);

/// Truncates `path`, writes the header, then one flushed line per row.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const MetricsRow& row);

 private:
  std::ofstream out_;
};

/// Linear-interpolation percentile, q in [0, 100].
double percentile(std::span<const double> values, double q);

}  // namespace lmpc
