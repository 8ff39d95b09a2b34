#pragma once

#include "bnp/core_types.hpp"

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <span>

namespace bnp {

/// Jacobians of the discrete-time step map.
struct LinearizedDynamics {
  Eigen::Matrix4d A;
  Eigen::Matrix<double, 4, 2> B;
};

// Forward-Euler unicycle:
//   px' = px + dt v cos(theta),  py' = py + dt v sin(theta),
//   v'  = v + dt a,              theta' = theta + dt omega.
// Controls are saturated before integration when bounds are given.
inline AgentState step(const AgentState& s, AgentControl u, double dt,
                       const std::optional<ControlBounds>& bounds = std::nullopt) {
  if (bounds) u = bounds->clamp(u);
  return {s.px + dt * s.v * std::cos(s.theta), s.py + dt * s.v * std::sin(s.theta),
          s.v + dt * u.a, s.theta + dt * u.omega};
}

inline LinearizedDynamics linearize(const AgentState& s, const AgentControl& /*u*/, double dt) {
  const double c = std::cos(s.theta);
  const double sn = std::sin(s.theta);
  LinearizedDynamics lin;
  lin.A.setIdentity();
  lin.A(0, 2) = dt * c;
  lin.A(0, 3) = -dt * s.v * sn;
  lin.A(1, 2) = dt * sn;
  lin.A(1, 3) = dt * s.v * c;
  lin.B.setZero();
  lin.B(2, 0) = dt;
  lin.B(3, 1) = dt;
  return lin;
}

/// Integrates `controls` from `x0`. Stored controls are the saturated ones, so
/// states[k+1] == step(states[k], controls[k]) holds with or without bounds.
inline Trajectory rollout(const AgentState& x0, std::span<const AgentControl> controls, double dt,
                          const std::optional<ControlBounds>& bounds = std::nullopt) {
  if (controls.empty()) throw InvalidArgument("rollout needs at least one control");
  Trajectory traj;
  traj.states.reserve(controls.size() + 1);
  traj.controls.reserve(controls.size());
  traj.states.push_back(x0);
  for (const auto& u_raw : controls) {
    const AgentControl u = bounds ? bounds->clamp(u_raw) : u_raw;
    traj.controls.push_back(u);
    traj.states.push_back(step(traj.states.back(), u, dt));
  }
  return traj;
}

}  // namespace bnp
