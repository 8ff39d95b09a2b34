#pragma once

#include "bnp/core_types.hpp"
#include "bnp/costs.hpp"
#include "bnp/dynamics.hpp"

#include <algorithm>
#include <array>
#include <span>
#include <vector>

namespace bnp {

struct FilterResult {
  Trajectory trajectory;
  Policy policy;
  bool modified{false};
  bool safe{false};      ///< separation > d_col against every predecessor at every step
  int switch_step{-1};   ///< first step driven by the evasive maneuver
  std::vector<PositionSequence> probes;  ///< every evasive rollout that was scored
};

namespace detail {

inline double min_sep_against(const Trajectory& traj, std::span<const Trajectory> preds) {
  double best = kInf;
  for (const auto& p : preds) best = std::min(best, min_separation(traj, p));
  return best;
}

// First step whose separation to some predecessor is <= d_col, or -1.
inline int first_violation(const Trajectory& traj, std::span<const Trajectory> preds, double d_col) {
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    for (const auto& p : preds)
      if ((traj.states[k].position() - p.states[k].position()).norm() <= d_col) return static_cast<int>(k);
  return -1;
}

enum class Speed { Brake, Hold };

// Keeps the nominal controls before `s`, then flies a constant turn at full rate.
// Braking decelerates as hard as allowed but never below zero speed.
inline Trajectory evasive_rollout(const Trajectory& nominal, int s, Speed speed, double omega, double dt,
                                  const ControlBounds& b) {
  Trajectory out;
  out.states.assign(nominal.states.begin(), nominal.states.begin() + s + 1);
  out.controls.assign(nominal.controls.begin(), nominal.controls.begin() + s);
  for (int t = s; t < nominal.horizon(); ++t) {
    const AgentState& x = out.states.back();
    double a = 0.0;
    if (speed == Speed::Brake) a = std::clamp(-x.v / dt, b.a_min, std::max(b.a_min, 0.0));
    const AgentControl u = b.clamp({a, omega});
    out.controls.push_back(u);
    out.states.push_back(step(x, u, dt));
  }
  return out;
}

}  // namespace detail

/// Rollout-based supervisor. Returns the plan untouched when it keeps more than
/// d_col from every predecessor. Otherwise it searches switch steps backwards from
/// just before the first violation and, at the latest step where one exists, takes
/// the evasive maneuver (brake or hold speed, turn left or right at full rate) with
/// the largest separation, saturated at d_plan. When no maneuver is safe the most
/// separated one is returned with safe = false.
inline FilterResult filter_plan(const Trajectory& traj, const Policy& policy, std::span<const Trajectory> preds,
                                const Scenario& sc) {
  for (const auto& p : preds) detail::require_same_horizon(traj, p);
  FilterResult res;
  res.trajectory = traj;
  res.policy = policy;
  const int kv = detail::first_violation(traj, preds, sc.d_col);
  if (kv < 0) {
    res.safe = true;
    return res;
  }

  const ControlBounds b = sc.control_bounds.value_or(ControlBounds{});
  const double w_left = b.omega_max;
  const double w_right = b.omega_min;
  struct Candidate {
    detail::Speed speed;
    double omega;
  };
  const std::array<Candidate, 4> candidates{{{detail::Speed::Brake, w_left},
                                             {detail::Speed::Brake, w_right},
                                             {detail::Speed::Hold, w_left},
                                             {detail::Speed::Hold, w_right}}};

  Trajectory best_effort;
  double best_effort_sep = -kInf;
  int best_effort_step = 0;
  for (int s = std::max(kv - 1, 0); s >= 0; --s) {
    bool found = false;
    Trajectory chosen;
    double chosen_score = -kInf;
    for (const auto& c : candidates) {
      Trajectory cand = detail::evasive_rollout(traj, s, c.speed, c.omega, sc.dt, b);
      res.probes.push_back(positions(cand));
      const double sep = detail::min_sep_against(cand, preds);
      const double score = std::min(sep, sc.d_plan);
      if (score > best_effort_sep) {
        best_effort_sep = score;
        best_effort = cand;
        best_effort_step = s;
      }
      if (!(sep > sc.d_col)) continue;
      if (score > chosen_score) {
        chosen_score = score;
        chosen = std::move(cand);
        found = true;
      }
    }
    if (found) {
      res.trajectory = std::move(chosen);
      res.switch_step = s;
      res.safe = true;
      break;
    }
  }
  if (!res.safe) {
    res.trajectory = std::move(best_effort);
    res.switch_step = best_effort_step;
  }
  res.modified = true;
  res.policy.nominal = res.trajectory;
  res.policy.gains.resize(static_cast<std::size_t>(traj.horizon()), FeedbackGain::Zero());
  for (int t = res.switch_step; t < traj.horizon(); ++t) res.policy.gains[static_cast<std::size_t>(t)].setZero();
  return res;
}

/// Throwing form: the filtered trajectory, or FilterFailed when no evasive
/// maneuver restores separation.
inline Trajectory safety_filter(const Trajectory& traj, const Policy& policy, std::span<const Trajectory> preds,
                                const Scenario& sc) {
  FilterResult res = filter_plan(traj, policy, preds, sc);
  if (!res.safe) throw FilterFailed("no evasive maneuver keeps separation above d_col");
  return res.trajectory;
}

}  // namespace bnp
