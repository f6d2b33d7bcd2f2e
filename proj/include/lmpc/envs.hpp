// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lmpc::envs {

struct EnvSpec {
  std::string name;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  double action_low = -1.0;
  double action_high = 1.0;
  std::size_t episode_length = 100;
  /// Control period; physics integrates `substeps` steps per period.
  double dt = 0.05;
  std::size_t substeps = 10;
};

/// Full physical state; the agent never sees it directly.
struct EnvState {
  std::vector<double> position;
  std::vector<double> velocity;
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepResult {
  EnvState state;
  std::vector<double> observation;
  double reward = 0.0;
};

/// Stateless dynamics; episodes carry their EnvState as a value.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual EnvState initial_state(std::uint64_t seed) const = 0;
  virtual std::vector<double> observe(const EnvState& state) const = 0;
  /// Actions outside the bounds are clipped.
  virtual StepResult step(const EnvState& state, std::span<const double> action) const = 0;

  std::pair<EnvState, std::vector<double>> reset(std::uint64_t seed) const {
    EnvState s = initial_state(seed);
    auto obs = observe(s);
    return {std::move(s), std::move(obs)};
  }
};

/// Torque-limited pendulum swing-up. The angle is stored from the hanging
/// position; observations are (cos, sin) of the angle from upright, so the
/// angular velocity is hidden. Reward (1 + cos) / 2 - 0.01 u^2 lies in
/// [-0.01, 1] for u in [-1, 1].
class PendulumPO final : public Environment {
 public:
  struct Physics {
    double gravity = 9.81;
    double length = 1.0;
    double mass = 1.0;
    double damping = 0.1;
    double max_torque = 4.0;
    double action_cost = 0.01;
  };

  PendulumPO();
  explicit PendulumPO(Physics physics, EnvSpec spec);

  const EnvSpec& spec() const override { return spec_; }
  const Physics& physics() const { return physics_; }
  /// Hanging down, angle and velocity each uniform in [-0.1, 0.1].
  EnvState initial_state(std::uint64_t seed) const override;
  std::vector<double> observe(const EnvState& state) const override;
  StepResult step(const EnvState& state, std::span<const double> action) const override;

  /// Mechanical energy per unit mass, zero at rest hanging down.
  double energy(const EnvState& state) const;
  static EnvState from_upright_angle(double theta, double velocity);

 private:
  Physics physics_;
  EnvSpec spec_;
};

/// Planar point mass driven toward the origin. Only the position is
/// observed. Reward is minus the distance to the origin.
class PointMassPO final : public Environment {
 public:
  struct Physics {
    double mass = 1.0;
    double max_force = 1.0;
  };

  PointMassPO();
  explicit PointMassPO(Physics physics, EnvSpec spec);

  const EnvSpec& spec() const override { return spec_; }
  const Physics& physics() const { return physics_; }
  /// Position uniform in [-1, 1]^2, at rest.
  EnvState initial_state(std::uint64_t seed) const override;
  std::vector<double> observe(const EnvState& state) const override;
  StepResult step(const EnvState& state, std::span<const double> action) const override;

 private:
  Physics physics_;
  EnvSpec spec_;
};

/// "pendulum_po" or "pointmass_po"; throws ConfigError otherwise.
std::unique_ptr<Environment> make_env(const std::string& name);
std::vector<std::string> env_names();

// ---------------------------------------------------------------------------
// Analytic reward landscapes over action sequences, for planner-only runs.

struct Landscape {
  std::string name;
  std::size_t horizon = 1;
  std::size_t action_dim = 1;
  double (*reward)(std::span<const double> actions) = nullptr;
};

/// "bimodal": 1-step, 1-d, two equal bumps near -0.6 and +0.6.
/// "quadratic": -||a||^2 over a 5-step, 1-d sequence.
Landscape make_landscape(const std::string& name);
std::vector<std::string> landscape_names();

}  // namespace lmpc::envs
