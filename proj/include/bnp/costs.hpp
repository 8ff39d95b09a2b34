#pragma once

#include "bnp/core_types.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace bnp {

struct CostWeights {
  double w_pos{1.0};
  double w_v{0.1};
  double w_theta{0.1};
  double w_a{0.1};
  double w_omega{0.1};
  double mu{100.0};  ///< hinge slope
  double d{0.4};     ///< separation below which the hinge is active

  void validate() const {
    if (w_pos < 0 || w_v < 0 || w_theta < 0 || w_a < 0 || w_omega < 0)
      throw InvalidArgument("cost weights must be >= 0");
    if (!(mu > 0)) throw InvalidArgument("mu must be > 0");
    if (!(d > 0)) throw InvalidArgument("safety distance must be > 0");
  }
};

/// Weights the planners use for a scenario: hinge active below d_plan.
inline CostWeights planning_weights(const Scenario& sc) {
  return {sc.w_track.pos, sc.w_track.v, sc.w_track.theta, sc.w_ctrl.a, sc.w_ctrl.omega, sc.mu,
          sc.d_plan};
}

/// Maps an angle difference to (-pi, pi].
inline double wrap_angle(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(x + std::numbers::pi, two_pi);
  if (r < 0) r += two_pi;
  r -= std::numbers::pi;
  return r == -std::numbers::pi ? std::numbers::pi : r;
}

inline double individual_stage_cost(const AgentState& s, const AgentControl& u,
                                    const AgentState& target, const CostWeights& w) {
  const double dx = s.px - target.px;
  const double dy = s.py - target.py;
  const double dv = s.v - target.v;
  const double dth = wrap_angle(s.theta - target.theta);
  return w.w_pos * (dx * dx + dy * dy) + w.w_v * dv * dv + w.w_theta * dth * dth +
         w.w_a * u.a * u.a + w.w_omega * u.omega * u.omega;
}

/// mu * max(d - |p_i - p_j|, 0). Exactly symmetric in its arguments.
inline double safety_stage_cost(const Eigen::Vector2d& p_i, const Eigen::Vector2d& p_j,
                                const CostWeights& w) {
  const double gap = w.d - (p_i - p_j).norm();
  return gap > 0.0 ? w.mu * gap : 0.0;
}

namespace detail {

inline void require_same_horizon(const Trajectory& a, const Trajectory& b) {
  if (a.horizon() != b.horizon() || a.states.size() != b.states.size())
    throw InvalidArgument("trajectories must share the same horizon");
}

// Control at stage k; the terminal stage carries no control.
inline AgentControl stage_control(const Trajectory& t, int k) {
  return k < t.horizon() ? t.controls[static_cast<std::size_t>(k)] : AgentControl{};
}

}  // namespace detail

/// Sum over stages 0..T of the individual cost.
inline double individual_total_cost(const Trajectory& traj, const AgentState& target,
                                    const CostWeights& w) {
  double total = 0.0;
  for (int k = 0; k <= traj.horizon(); ++k)
    total += individual_stage_cost(traj.states[static_cast<std::size_t>(k)],
                                   detail::stage_control(traj, k), target, w);
  return total;
}

/// Individual cost plus hinge terms against predecessors only; successors are ignored.
inline double surrogate_total_cost(const Trajectory& traj, std::span<const Trajectory> predecessors,
                                   const AgentState& target, const CostWeights& w) {
  for (const auto& p : predecessors) detail::require_same_horizon(traj, p);
  double total = 0.0;
  for (int k = 0; k <= traj.horizon(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    total += individual_stage_cost(traj.states[ks], detail::stage_control(traj, k), target, w);
    for (const auto& p : predecessors)
      total += safety_stage_cost(traj.states[ks].position(), p.states[ks].position(), w);
  }
  return total;
}

struct SocialCost {
  double total{0.0};
  std::vector<CostBreakdown> per_agent;
};

/// True costs of every agent: individual plus hinge against every other agent.
/// Each unordered pair therefore appears once per agent and twice in the total.
inline SocialCost social_cost(std::span<const Trajectory> trajectories,
                              std::span<const AgentState> targets, const CostWeights& w) {
  if (trajectories.size() != targets.size())
    throw InvalidArgument("one target per trajectory is required");
  for (const auto& t : trajectories) detail::require_same_horizon(trajectories.front(), t);
  const std::size_t n = trajectories.size();
  SocialCost out;
  out.per_agent.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& ti = trajectories[i];
    double safety = 0.0;
    for (int k = 0; k <= ti.horizon(); ++k) {
      const auto ks = static_cast<std::size_t>(k);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        safety += safety_stage_cost(ti.states[ks].position(), trajectories[j].states[ks].position(), w);
      }
    }
    out.per_agent[i] = {individual_total_cost(ti, targets[i], w), safety};
  }
  for (const auto& c : out.per_agent) out.total += c.individual + c.safety;
  return out;
}

inline PositionSequence positions(const Trajectory& t) {
  PositionSequence out;
  out.reserve(t.states.size());
  for (const auto& s : t.states) out.push_back(s.position());
  return out;
}

/// Smallest distance between two trajectories over all shared steps.
inline double min_separation(const Trajectory& a, const Trajectory& b) {
  detail::require_same_horizon(a, b);
  double best = kInf;
  for (std::size_t k = 0; k < a.states.size(); ++k)
    best = std::min(best, (a.states[k].position() - b.states[k].position()).norm());
  return best;
}

inline double min_separation(const PositionSequence& a, const Trajectory& b) {
  double best = kInf;
  const std::size_t n = std::min(a.size(), b.states.size());
  for (std::size_t k = 0; k < n; ++k) best = std::min(best, (a[k] - b.states[k].position()).norm());
  return best;
}

}  // namespace bnp
