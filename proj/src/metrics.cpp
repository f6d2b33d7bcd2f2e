// SPDX-License-Identifier: Apache-2.0
#include "lmpc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lmpc/error.hpp"

namespace lmpc {

namespace {

void put(std::ostringstream& os, double v) {
  os.precision(17);
  os << v;
}

}  // namespace

std::string format_metrics_row(const MetricsRow& row) {
  std::ostringstream os;
  os << row.iteration << ',' << row.episodes << ',' << row.transitions << ',';
  for (std::size_t i = 0; i < row.train_loss.size(); ++i) {
    if (i > 0) os << ';';
    put(os, row.train_loss[i]);
  }
  for (double v : {row.episode_reward, row.plan_best_return, row.plan_mean_return,
                   row.disagreement, row.wall_clock_s}) {
    os << ',';
    put(os, v);
  }
  return os.str();
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw Error("cannot write " + path.string());
  out_ << kMetricsHeader << '\n' << std::flush;
}

void MetricsWriter::write(const MetricsRow& row) {
  out_ << format_metrics_row(row) << '\n' << std::flush;
  if (!out_) throw Error("metrics write failed");
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace lmpc
