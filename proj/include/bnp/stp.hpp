#pragma once

#include "bnp/core_types.hpp"
#include "bnp/costs.hpp"
#include "bnp/dynamics.hpp"
#include "bnp/ilqr.hpp"
#include "bnp/safety_filter.hpp"

#include <span>
#include <vector>

namespace bnp {

struct StpOptions {
  IlqrOptions ilqr{};
  /// Agents flagged here plan ignoring everyone (e.g. still outside the zone).
  /// Others may still treat them as predecessors. Empty means nobody.
  std::vector<bool> unaware;
  /// Per-agent initial controls; empty (or an empty entry) means zero controls.
  std::vector<std::vector<AgentControl>> init;
};

namespace detail {

inline bool flagged(const std::vector<bool>& mask, int i) {
  return static_cast<std::size_t>(i) < mask.size() && mask[static_cast<std::size_t>(i)];
}

}  // namespace detail

/// Sequential trajectory planning over a (possibly incomplete) order of play.
/// Assigned agents are solved in prefix order, each avoiding the assigned agents
/// before it. Unassigned agents follow in ascending id and avoid every assigned
/// agent (AvoidAssigned) or nobody (Unaware). Every plan goes through the safety
/// filter against the same predecessors. The value is the full social cost at
/// d_plan; a solver or filter failure makes it +inf but still returns plans.
inline SubgameSolution solve_stp(const IncompletePermutation& p, const JointState& x0, const Scenario& sc,
                                 const StpOptions& opts = {}) {
  const int n = sc.N;
  if (x0.size() != n || p.size() != n) throw InvalidArgument("joint state and permutation must cover N agents");
  const CostWeights w = planning_weights(sc);
  const PlanningModel model = planning_model(sc);

  SubgameSolution sol;
  sol.profile.resize(static_cast<std::size_t>(n));
  sol.trajectories.resize(static_cast<std::size_t>(n));
  sol.records.resize(static_cast<std::size_t>(n));
  std::vector<bool> solved(static_cast<std::size_t>(n), false);
  bool failed = false;

  auto solve_agent = [&](int i, std::vector<int> preds) {
    const auto is = static_cast<std::size_t>(i);
    if (detail::flagged(opts.unaware, i)) preds.clear();
    std::sort(preds.begin(), preds.end());
    std::vector<Trajectory> pred_trajs;
    pred_trajs.reserve(preds.size());
    for (int j : preds) pred_trajs.push_back(sol.trajectories[static_cast<std::size_t>(j)]);

    std::span<const AgentControl> init;
    if (is < opts.init.size()) init = opts.init[is];
    AgentSolveRecord& rec = sol.records[is];
    rec.predecessors = preds;
    ++sol.solver_calls;

    Trajectory traj;
    Policy policy;
    try {
      SingleAgentResult r = solve_single_agent(x0.agents[is], sc.targets[is], pred_trajs, w, model, opts.ilqr, init);
      traj = std::move(r.trajectory);
      policy = std::move(r.policy);
      rec.probes = std::move(r.probes);
    } catch (const NonFiniteError&) {
      rec.solver_failed = true;
      failed = true;
      std::vector<AgentControl> zeros(static_cast<std::size_t>(sc.T));
      traj = rollout(x0.agents[is], zeros, sc.dt, sc.control_bounds);
      policy = Policy{traj, std::vector<FeedbackGain>(static_cast<std::size_t>(sc.T), FeedbackGain::Zero())};
      rec.probes.push_back(positions(traj));
    }

    FilterResult f = filter_plan(traj, policy, pred_trajs, sc);
    rec.filtered = f.modified;
    rec.filter_failed = !f.safe;
    if (!f.safe) failed = true;
    for (auto& pr : f.probes) rec.probes.push_back(std::move(pr));
    sol.trajectories[is] = std::move(f.trajectory);
    sol.profile[is] = std::move(f.policy);
    solved[is] = true;
  };

  const auto& assigned = p.assigned();
  for (std::size_t m = 0; m < assigned.size(); ++m)
    solve_agent(assigned[m], std::vector<int>(assigned.begin(), assigned.begin() + static_cast<long>(m)));
  for (int i : p.unassigned())
    solve_agent(i, p.mode() == UnassignedMode::AvoidAssigned ? assigned : std::vector<int>{});

  const SocialCost social = social_cost(sol.trajectories, sc.targets, w);
  sol.costs = social.per_agent;
  sol.social_cost = failed ? kInf : social.total;
  sol.feasible = !failed;
  for (int i = 0; i < n && sol.feasible; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!(min_separation(sol.trajectories[static_cast<std::size_t>(i)], sol.trajectories[static_cast<std::size_t>(j)]) >
            sc.d_col)) {
        sol.feasible = false;
        break;
      }
  return sol;
}

inline SubgameSolution solve_stp(const Permutation& p, const JointState& x0, const Scenario& sc,
                                 const StpOptions& opts = {}) {
  return solve_stp(IncompletePermutation::complete(p), x0, sc, opts);
}

/// True iff agents i and j stay strictly more than d_col apart at every step.
inline bool pairwise_collision_free(const SubgameSolution& sol, int i, int j, const Scenario& sc) {
  if (i == j) throw InvalidArgument("pairwise check needs two distinct agents");
  return min_separation(sol.trajectories[static_cast<std::size_t>(i)], sol.trajectories[static_cast<std::size_t>(j)]) >
         sc.d_col;
}

/// Stronger, solver-aware version of the pairwise check: every plan agent i tried
/// while solving keeps more than d_plan from agent j's final plan, and vice versa.
/// Making one of them a predecessor of the other then cannot change either solve.
inline bool interaction_free(const SubgameSolution& sol, int i, int j, const Scenario& sc) {
  if (i == j) throw InvalidArgument("pairwise check needs two distinct agents");
  auto clear = [&](int a, int b) {
    const Trajectory& tb = sol.trajectories[static_cast<std::size_t>(b)];
    for (const auto& probe : sol.records[static_cast<std::size_t>(a)].probes)
      if (!(min_separation(probe, tb) > sc.d_plan)) return false;
    return true;
  };
  return clear(i, j) && clear(j, i);
}

}  // namespace bnp
