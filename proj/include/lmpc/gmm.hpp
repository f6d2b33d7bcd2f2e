// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lmpc/rng.hpp"

namespace lmpc {

/// Diagonal Gaussian mixture over flattened action sequences
/// (horizon x action_dim, row-major).
struct GmmParams {
  std::size_t horizon = 0;
  std::size_t action_dim = 0;
  std::vector<double> weights;             // pi_m
  std::vector<std::vector<double>> means;  // mu_m
  std::vector<std::vector<double>> stds;   // sigma_m

  std::size_t components() const { return weights.size(); }
  std::size_t dims() const { return horizon * action_dim; }

  /// Throws ShapeError on inconsistent sizes.
  void check() const;
  friend bool operator==(const GmmParams&, const GmmParams&) = default;
};

struct MixtureFloors {
  double sigma = 1e-3;
  double pi = 1e-6;
};

/// M components of width init_std and weight 1/M. Component m's mean is
/// the constant sequence at low + (m + 1/2)(high - low)/M, so M = 1 starts
/// at the centre of the action range.
GmmParams initial_gmm(std::size_t M, std::size_t horizon, std::size_t action_dim, double init_std,
                      double low, double high);

/// Shift every mean one step earlier and zero the last step; reset stds to
/// `init_std` and weights to 1/M.
GmmParams warm_start(const GmmParams& previous, double init_std);

/// log q(a; phi), computed with log-sum-exp over components.
double gmm_log_density(const GmmParams& gmm, std::span<const double> a);
double gmm_density(const GmmParams& gmm, std::span<const double> a);

/// eta[m * K + k]: responsibility of component m for candidate k. Each
/// column sums to one.
std::vector<double> responsibilities(const GmmParams& gmm, std::span<const double> candidates,
                                     std::size_t K);

/// Ancestral sampling: component ~ Categorical(pi) (skipped when M = 1),
/// then a diagonal Gaussian draw, clipped to [low, high]. Returns K x dims.
std::vector<double> sample_candidates(const GmmParams& gmm, std::size_t K, double low,
                                      double high, Rng& rng);

/// Responsibility-weighted mixture refit from normalised candidate weights
/// `w`. Components with zero mass keep their previous mean and std; then
/// the std and weight floors are applied and the weights renormalised.
/// `occupancy`, when non-empty, receives N_m.
GmmParams paets_update(const GmmParams& gmm, std::span<const double> candidates,
                       std::span<const double> w, const MixtureFloors& floors,
                       std::span<double> occupancy = {});

struct GaussianProposal {
  std::vector<double> mean;
  std::vector<double> std;
  friend bool operator==(const GaussianProposal&, const GaussianProposal&) = default;
};

/// Classic cross-entropy refit: renormalise `w`, then the weighted mean and
/// variance of the candidates, std floored at `sigma_floor`.
GaussianProposal cem_update(const GaussianProposal& proposal, std::span<const double> candidates,
                            std::span<const double> w, double sigma_floor);

}  // namespace lmpc
