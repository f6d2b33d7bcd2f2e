// SPDX-License-Identifier: Apache-2.0
#include "lmpc/envs.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lmpc/error.hpp"
#include "lmpc/rng.hpp"

namespace lmpc::envs {

namespace {

std::vector<double> clip_action(const EnvSpec& spec, std::span<const double> action) {
  if (action.size() != spec.action_dim) {
    throw ShapeError(spec.name + ": action has " + std::to_string(action.size()) +
                     " entries, expected " + std::to_string(spec.action_dim));
  }
  std::vector<double> u(action.begin(), action.end());
  for (auto& x : u) {
    if (!std::isfinite(x)) throw NumericError(spec.name + ": non-finite action");
    const double c = std::clamp(x, spec.action_low, spec.action_high);
    if (c != x) spdlog::debug("{}: action {} clipped to {}", spec.name, x, c);
    x = c;
  }
  return u;
}

// Velocity Verlet with a velocity-dependent term evaluated at the half step.
// Exact for constant acceleration, energy error O(h^2) for conservative forces.
template <class Accel>
void verlet(double& q, double& v, double h, std::size_t n, Accel accel) {
  for (std::size_t i = 0; i < n; ++i) {
    const double v_half = v + 0.5 * h * accel(q, v);
    q += h * v_half;
    v = v_half + 0.5 * h * accel(q, v_half);
  }
}

EnvSpec pendulum_spec() { return EnvSpec{"pendulum_po", 2, 1, -1.0, 1.0, 100, 0.05, 10}; }
EnvSpec pointmass_spec() { return EnvSpec{"pointmass_po", 2, 2, -1.0, 1.0, 100, 0.05, 10}; }

}  // namespace

PendulumPO::PendulumPO() : PendulumPO(Physics{}, pendulum_spec()) {}

PendulumPO::PendulumPO(Physics physics, EnvSpec spec) : physics_(physics), spec_(std::move(spec)) {
  if (spec_.episode_length < 1 || spec_.substeps < 1 || !(spec_.dt > 0)) {
    throw ConfigError("pendulum_po: invalid spec");
  }
}

EnvState PendulumPO::initial_state(std::uint64_t seed) const {
  Rng rng(seed);
  const double angle = rng.uniform(-0.1, 0.1);
  const double velocity = rng.uniform(-0.1, 0.1);
  return EnvState{{angle}, {velocity}};
}

EnvState PendulumPO::from_upright_angle(double theta, double velocity) {
  return EnvState{{theta + std::numbers::pi}, {velocity}};
}

std::vector<double> PendulumPO::observe(const EnvState& state) const {
  const double theta = state.position.at(0) - std::numbers::pi;
  return {std::cos(theta), std::sin(theta)};
}

StepResult PendulumPO::step(const EnvState& state, std::span<const double> action) const {
  const auto u = clip_action(spec_, action);
  const auto& p = physics_;
  const double torque = u[0] * p.max_torque / (p.mass * p.length * p.length);
  double q = state.position.at(0), v = state.velocity.at(0);
  verlet(q, v, spec_.dt / static_cast<double>(spec_.substeps), spec_.substeps,
         [&](double q, double v) {
           return -(p.gravity / p.length) * std::sin(q) - p.damping * v + torque;
         });
  StepResult r;
  r.state = EnvState{{q}, {v}};
  r.observation = observe(r.state);
  r.reward = 0.5 * (1.0 + r.observation[0]) - p.action_cost * u[0] * u[0];
  return r;
}

double PendulumPO::energy(const EnvState& state) const {
  const double q = state.position.at(0), v = state.velocity.at(0);
  const auto& p = physics_;
  return 0.5 * p.length * p.length * v * v + p.gravity * p.length * (1.0 - std::cos(q));
}

PointMassPO::PointMassPO() : PointMassPO(Physics{}, pointmass_spec()) {}

PointMassPO::PointMassPO(Physics physics, EnvSpec spec)
    : physics_(physics), spec_(std::move(spec)) {
  if (spec_.episode_length < 1 || spec_.substeps < 1 || !(spec_.dt > 0)) {
    throw ConfigError("pointmass_po: invalid spec");
  }
}

EnvState PointMassPO::initial_state(std::uint64_t seed) const {
  Rng rng(seed);
  EnvState s;
  for (std::size_t d = 0; d < spec_.action_dim; ++d) {
    s.position.push_back(rng.uniform(-1.0, 1.0));
    s.velocity.push_back(0.0);
  }
  return s;
}

std::vector<double> PointMassPO::observe(const EnvState& state) const { return state.position; }

StepResult PointMassPO::step(const EnvState& state, std::span<const double> action) const {
  const auto u = clip_action(spec_, action);
  StepResult r;
  r.state = state;
  const double h = spec_.dt / static_cast<double>(spec_.substeps);
  for (std::size_t d = 0; d < u.size(); ++d) {
    const double accel = u[d] * physics_.max_force / physics_.mass;
    verlet(r.state.position[d], r.state.velocity[d], h, spec_.substeps,
           [accel](double, double) { return accel; });
  }
  r.observation = observe(r.state);
  double dist = 0.0;
  for (double x : r.state.position) dist += x * x;
  r.reward = -std::sqrt(dist);
  return r;
}

std::unique_ptr<Environment> make_env(const std::string& name) {
  if (name == "pendulum_po") return std::make_unique<PendulumPO>();
  if (name == "pointmass_po") return std::make_unique<PointMassPO>();
  throw ConfigError("unknown environment '" + name + "' (valid: pendulum_po, pointmass_po)");
}

std::vector<std::string> env_names() { return {"pendulum_po", "pointmass_po"}; }

namespace {

double bump(double x, double center, double width) {
  const double z = (x - center) / width;
  return std::exp(-0.5 * z * z);
}

double bimodal_reward(std::span<const double> a) {
  return bump(a[0], -0.6, 0.12) + bump(a[0], 0.6, 0.12);
}

double quadratic_reward(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return -s;
}

}  // namespace

Landscape make_landscape(const std::string& name) {
  if (name == "bimodal") return Landscape{"bimodal", 1, 1, &bimodal_reward};
  if (name == "quadratic") return Landscape{"quadratic", 5, 1, &quadratic_reward};
  throw ConfigError("unknown landscape '" + name + "' (valid: bimodal, quadratic)");
}

std::vector<std::string> landscape_names() { return {"bimodal", "quadratic"}; }

}  // namespace lmpc::envs
