// SPDX-License-Identifier: Apache-2.0
#include "lmpc/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lmpc/error.hpp"

namespace lmpc {

void GmmParams::check() const {
  const std::size_t M = weights.size();
  if (M == 0) throw ShapeError("gmm: no components");
  if (means.size() != M || stds.size() != M) throw ShapeError("gmm: component count mismatch");
  for (std::size_t m = 0; m < M; ++m) {
    if (means[m].size() != dims() || stds[m].size() != dims()) {
      throw ShapeError("gmm: component " + std::to_string(m) + " has the wrong dimension");
    }
  }
}

GmmParams initial_gmm(std::size_t M, std::size_t horizon, std::size_t action_dim, double init_std,
                      double low, double high) {
  if (M == 0) throw ConfigError("gmm: M must be >= 1");
  GmmParams g;
  g.horizon = horizon;
  g.action_dim = action_dim;
  const std::size_t D = horizon * action_dim;
  g.weights.assign(M, 1.0 / static_cast<double>(M));
  for (std::size_t m = 0; m < M; ++m) {
    const double level =
        low + (static_cast<double>(m) + 0.5) * (high - low) / static_cast<double>(M);
    g.means.emplace_back(D, level);
    g.stds.emplace_back(D, init_std);
  }
  return g;
}

GmmParams warm_start(const GmmParams& previous, double init_std) {
  previous.check();
  GmmParams g = previous;
  const std::size_t M = g.components(), D = g.dims(), A = g.action_dim;
  for (std::size_t m = 0; m < M; ++m) {
    auto& mu = g.means[m];
    std::copy(previous.means[m].begin() + static_cast<std::ptrdiff_t>(A), previous.means[m].end(),
              mu.begin());
    std::fill(mu.begin() + static_cast<std::ptrdiff_t>(D - A), mu.end(), 0.0);
    std::fill(g.stds[m].begin(), g.stds[m].end(), init_std);
    g.weights[m] = 1.0 / static_cast<double>(M);
  }
  return g;
}

namespace {

double component_log_density(const std::vector<double>& mu, const std::vector<double>& sigma,
                             const double* a) {
  constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)
  double lp = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    const double z = (a[d] - mu[d]) / sigma[d];
    lp += -0.5 * z * z - std::log(sigma[d]) - kHalfLog2Pi;
  }
  return lp;
}

// log pi_m + log N(a; mu_m, sigma_m) for every m.
void joint_log_densities(const GmmParams& g, const double* a, std::vector<double>& out) {
  out.resize(g.components());
  for (std::size_t m = 0; m < g.components(); ++m) {
    out[m] = std::log(g.weights[m]) + component_log_density(g.means[m], g.stds[m], a);
  }
}

double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

double gmm_log_density(const GmmParams& gmm, std::span<const double> a) {
  gmm.check();
  if (a.size() != gmm.dims()) throw ShapeError("gmm_density: point has the wrong dimension");
  std::vector<double> lp;
  joint_log_densities(gmm, a.data(), lp);
  return log_sum_exp(lp);
}

double gmm_density(const GmmParams& gmm, std::span<const double> a) {
  return std::exp(gmm_log_density(gmm, a));
}

std::vector<double> responsibilities(const GmmParams& gmm, std::span<const double> candidates,
                                     std::size_t K) {
  gmm.check();
  const std::size_t M = gmm.components(), D = gmm.dims();
  if (candidates.size() != K * D) throw ShapeError("responsibilities: candidate buffer size");
  std::vector<double> eta(M * K);
  std::vector<double> lp;
  for (std::size_t k = 0; k < K; ++k) {
    joint_log_densities(gmm, candidates.data() + k * D, lp);
    const double lse = log_sum_exp(lp);
    for (std::size_t m = 0; m < M; ++m) eta[m * K + k] = std::exp(lp[m] - lse);
  }
  return eta;
}

std::vector<double> sample_candidates(const GmmParams& gmm, std::size_t K, double low,
                                      double high, Rng& rng) {
  gmm.check();
  const std::size_t M = gmm.components(), D = gmm.dims();
  std::vector<double> cdf(M);
  double acc = 0.0;
  for (std::size_t m = 0; m < M; ++m) cdf[m] = (acc += gmm.weights[m]);
  std::vector<double> out(K * D);
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t m = 0;
    if (M > 1) {
      const double u = rng.uniform() * acc;
      m = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      m = std::min(m, M - 1);
    }
    const auto& mu = gmm.means[m];
    const auto& sd = gmm.stds[m];
    for (std::size_t d = 0; d < D; ++d) {
      out[k * D + d] = std::clamp(mu[d] + sd[d] * rng.normal(), low, high);
    }
  }
  return out;
}

namespace {

void apply_weight_floor(std::vector<double>& pi, double floor) {
  const std::size_t M = pi.size();
  std::vector<bool> fixed(M, false);
  for (std::size_t round = 0; round < M; ++round) {
    bool changed = false;
    for (std::size_t m = 0; m < M; ++m) {
      if (!fixed[m] && pi[m] < floor) {
        fixed[m] = true;
        changed = true;
      }
    }
    double free_mass = 0.0;
    std::size_t n_fixed = 0;
    for (std::size_t m = 0; m < M; ++m) {
      if (fixed[m]) ++n_fixed;
      else free_mass += pi[m];
    }
    const double target = 1.0 - static_cast<double>(n_fixed) * floor;
    for (std::size_t m = 0; m < M; ++m) {
      if (fixed[m]) pi[m] = floor;
      else if (free_mass > 0) pi[m] *= target / free_mass;
    }
    if (!changed) break;
  }
}

}  // namespace

GmmParams paets_update(const GmmParams& gmm, std::span<const double> candidates,
                       std::span<const double> w, const MixtureFloors& floors,
                       std::span<double> occupancy) {
  const std::size_t K = w.size(), M = gmm.components(), D = gmm.dims();
  if (candidates.size() != K * D) throw ShapeError("paets_update: candidate buffer size");
  if (!occupancy.empty() && occupancy.size() != M) throw ShapeError("paets_update: occupancy size");
  const auto eta = responsibilities(gmm, candidates, K);

  GmmParams next = gmm;
  std::vector<double> mass(M, 0.0);
  double total = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    double n = 0.0;
    for (std::size_t k = 0; k < K; ++k) n += eta[m * K + k] * w[k];
    mass[m] = n;
    total += n;
    if (!(n > std::numeric_limits<double>::min())) continue;  // dead: keep mu, sigma

    auto& mu = next.means[m];
    auto& sd = next.stds[m];
    std::fill(mu.begin(), mu.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double omega = eta[m * K + k] * w[k] / n;
      const double* a = candidates.data() + k * D;
      for (std::size_t d = 0; d < D; ++d) mu[d] += omega * a[d];
    }
    std::vector<double> var(D, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double omega = eta[m * K + k] * w[k] / n;
      const double* a = candidates.data() + k * D;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = a[d] - mu[d];
        var[d] += omega * diff * diff;
      }
    }
    for (std::size_t d = 0; d < D; ++d) sd[d] = std::max(std::sqrt(var[d]), floors.sigma);
  }
  for (std::size_t m = 0; m < M; ++m) {
    next.weights[m] = total > 0 ? mass[m] / total : 1.0 / static_cast<double>(M);
  }
  apply_weight_floor(next.weights, floors.pi);
  if (!occupancy.empty()) std::copy(mass.begin(), mass.end(), occupancy.begin());
  return next;
}

GaussianProposal cem_update(const GaussianProposal& proposal, std::span<const double> candidates,
                            std::span<const double> w, double sigma_floor) {
  const std::size_t K = w.size(), D = proposal.mean.size();
  if (candidates.size() != K * D) throw ShapeError("cem_update: candidate buffer size");
  double s = 0.0;
  for (double x : w) s += x;
  if (!(s > 0)) throw NumericError("cem_update: weights sum to zero");

  GaussianProposal next{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0)};
  for (std::size_t k = 0; k < K; ++k) {
    const double wk = w[k] / s;
    for (std::size_t d = 0; d < D; ++d) next.mean[d] += wk * candidates[k * D + d];
  }
  std::vector<double> var(D, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double wk = w[k] / s;
    for (std::size_t d = 0; d < D; ++d) {
      const double diff = candidates[k * D + d] - next.mean[d];
      var[d] += wk * diff * diff;
    }
  }
  for (std::size_t d = 0; d < D; ++d) next.std[d] = std::max(std::sqrt(var[d]), sigma_floor);
  return next;
}

}  // namespace lmpc
