#pragma once

#include "bnp/harness.hpp"
#include "bnp/scenario_io.hpp"

#include "json.hpp"

#include <cmath>
#include <ostream>
#include <span>
#include <string>

namespace bnp {

inline constexpr int kTraceSchemaVersion = 1;

namespace detail {

// JSON has no infinities; non-finite numbers become null.
inline nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

inline nlohmann::json to_json(const AgentState& s) { return {s.px, s.py, s.v, s.theta}; }
inline nlohmann::json to_json(const AgentControl& u) { return {u.a, u.omega}; }

}  // namespace detail

inline nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json j{{"closed_loop_cost", m.closed_loop_cost},
                   {"group_time", m.group_time},
                   {"timed_out", m.timed_out},
                   {"min_separation", detail::num(m.min_separation)},
                   {"collided", m.collided},
                   {"nodes_explored_mean", m.nodes_explored_mean},
                   {"filter_failed", m.filter_failed},
                   {"filter_failed_steps", m.filter_failed_steps},
                   {"infeasible_replans", m.infeasible_replans},
                   {"steps", m.steps}};
  if (m.oracle_equal) j["oracle_equal"] = *m.oracle_equal;
  return j;
}

/// Newline-delimited JSON: a header, one record per step, one per search-tree
/// event, and a closing metrics record. No wall-clock values are written, so
/// identical runs give identical files.
inline void write_trial_trace(std::ostream& os, const TrialConfig& cfg, const TrialResult& r) {
  nlohmann::json header{{"type", "header"},
                        {"schema_version", kTraceSchemaVersion},
                        {"planner", to_string(cfg.planner)},
                        {"seed", cfg.seed},
                        {"N", cfg.N},
                        {"replan_every", cfg.replan_every},
                        {"sim_dt", cfg.sim_dt},
                        {"max_sim_time", cfg.max_sim_time},
                        {"scenario", emit_scenario(r.scenario)}};
  os << header.dump() << "\n";
  for (const auto& s : r.steps) {
    nlohmann::json states = nlohmann::json::array();
    nlohmann::json controls = nlohmann::json::array();
    for (int id : s.active) {
      states.push_back(detail::to_json(s.states[static_cast<std::size_t>(id)]));
      controls.push_back(detail::to_json(s.controls[static_cast<std::size_t>(id)]));
    }
    os << nlohmann::json{{"type", "step"},
                         {"step", s.step},
                         {"t", s.t},
                         {"active", s.active},
                         {"states", states},
                         {"controls", controls},
                         {"permutation", s.permutation},
                         {"stage_cost", s.stage_cost},
                         {"value", detail::num(s.value)},
                         {"replanned", s.replanned},
                         {"nodes_explored", s.nodes_explored},
                         {"filter_failed", s.filter_failed}}
              .dump()
       << "\n";
    for (const auto& n : s.tree)
      os << nlohmann::json{{"type", "node"},         {"step", s.step},
                           {"seq", n.seq},           {"prefix", n.prefix},
                           {"rho", n.rho},           {"raw_value", detail::num(n.raw_value)},
                           {"bound", detail::num(n.bound)}, {"event", n.event}}
                .dump()
         << "\n";
  }
  nlohmann::json tail = metrics_json(r.metrics);
  tail["type"] = "metrics";
  os << tail.dump() << "\n";
}

inline const char* kSummaryHeader =
    "planner,N,cost_mean,cost_std,group_mean,group_std,timeout_rate,collision_rate,nodes_mean";

inline void write_summary_row(std::ostream& os, const SummaryRow& r) {
  os << r.planner << ',' << r.N << ',' << r.cost_mean << ',' << r.cost_std << ',' << r.group_mean << ','
     << r.group_std << ',' << r.timeout_rate << ',' << r.collision_rate << ',' << r.nodes_mean << "\n";
}

inline std::string trials_header(bool with_oracle) {
  std::string h =
      "planner,N,seed,closed_loop_cost,group_time,timed_out,min_separation,collided,filter_failed,nodes_explored_mean";
  if (with_oracle) h += ",oracle_equal";
  return h;
}

/// One trials.csv row without the line terminator.
inline void write_trial_row(std::ostream& os, const std::string& planner, int n, std::uint64_t seed, const Metrics& m,
                            bool with_oracle) {
  os << planner << ',' << n << ',' << seed << ',' << m.closed_loop_cost << ',' << m.group_time << ','
     << (m.timed_out ? 1 : 0) << ',' << m.min_separation << ',' << (m.collided ? 1 : 0) << ','
     << (m.filter_failed ? 1 : 0) << ',' << m.nodes_explored_mean;
  if (with_oracle) os << ',' << (m.oracle_equal.value_or(false) ? "true" : "false");
}

}  // namespace bnp
