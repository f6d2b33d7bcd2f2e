// SPDX-License-Identifier: Apache-2.0
// Small helpers shared by the unit tests: random inputs and finite differences.
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lmpc/autodiff.hpp"
#include "lmpc/rng.hpp"
#include "lmpc/rssm.hpp"

namespace lmpc::test {

inline ad::Tensor random_tensor(const ad::Shape& shape, Rng& rng, double lo = -2.0,
                                double hi = 2.0) {
  ad::Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central differences of f at x, one coordinate at a time.
inline std::vector<double> numeric_gradient(const std::function<double(const ad::Tensor&)>& f,
                                            ad::Tensor x, double step = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f(x);
    x[i] = keep - step;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * step);
  }
  return g;
}

/// A tiny model config for fast tests.
inline RssmConfig tiny_config(std::size_t obs_dim = 2, std::size_t action_dim = 1) {
  RssmConfig c;
  c.obs_dim = obs_dim;
  c.action_dim = action_dim;
  c.h_dim = 4;
  c.s_dim = 3;
  c.hidden_dim = 5;
  return c;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lmpc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace lmpc::test
