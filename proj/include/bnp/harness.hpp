#pragma once

#include "bnp/branch_and_play.hpp"
#include "bnp/core_types.hpp"
#include "bnp/costs.hpp"
#include "bnp/dynamics.hpp"
#include "bnp/stp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace bnp {

struct SamplingFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Planner { Bnp, Fcfs, Randomized, BruteForce };

inline const char* to_string(Planner p) {
  switch (p) {
    case Planner::Bnp: return "bnp";
    case Planner::Fcfs: return "fcfs";
    case Planner::Randomized: return "random";
    case Planner::BruteForce: return "brute";
  }
  return "?";
}

inline std::optional<Planner> parse_planner(const std::string& s) {
  if (s == "bnp") return Planner::Bnp;
  if (s == "fcfs") return Planner::Fcfs;
  if (s == "random") return Planner::Randomized;
  if (s == "brute") return Planner::BruteForce;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// scenario generation

/// Agents on the zone circle at jittered angles, each flying toward the antipodal
/// point where it must stop. Redraws until all starts are more than d_plan apart.
inline Scenario sample_scenario(std::uint64_t seed, int n, const Scenario& tmpl) {
  if (n < 2) throw InvalidArgument("sample_scenario needs N >= 2");
  Scenario sc = tmpl;
  sc.N = n;
  sc.seed = seed;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5ce7u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> turn(0.0, 2.0 * std::numbers::pi);
  const double r = sc.zone_radius;
  const Eigen::Vector2d c = sc.center();
  for (int draw = 0; draw < 100; ++draw) {
    const double rotation = sc.jitter > 0.0 ? turn(rng) : 0.0;
    sc.starts.clear();
    sc.targets.clear();
    for (int i = 0; i < n; ++i) {
      const double ang = rotation + 2.0 * std::numbers::pi * i / n + sc.jitter * (std::numbers::pi / n) * unit(rng);
      const double speed = sc.start_speed * (1.0 + 0.5 * sc.jitter * unit(rng));
      const double heading = ang + std::numbers::pi;
      sc.starts.push_back({c.x() + r * std::cos(ang), c.y() + r * std::sin(ang), speed, heading});
      sc.targets.push_back({c.x() - r * std::cos(ang), c.y() - r * std::sin(ang), 0.0, heading});
    }
    double min_sep = kInf;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        min_sep = std::min(min_sep, (sc.starts[static_cast<std::size_t>(i)].position() -
                                     sc.starts[static_cast<std::size_t>(j)].position())
                                        .norm());
    if (min_sep > sc.d_plan) return sc;
  }
  throw SamplingFailed("could not place agents more than d_plan apart in 100 draws");
}

// ---------------------------------------------------------------------------
// first-come-first-served

/// Time until a straight-line extrapolation enters the zone (0 when inside,
/// +inf when it never does).
inline double predicted_entry_time(const AgentState& s, const Scenario& sc) {
  if (sc.in_zone(s)) return 0.0;
  const Eigen::Vector2d d = s.position() - sc.center();
  const Eigen::Vector2d vel(s.v * std::cos(s.theta), s.v * std::sin(s.theta));
  const double a = vel.squaredNorm();
  if (a == 0.0) return kInf;
  const double b = 2.0 * d.dot(vel);
  const double cc = d.squaredNorm() - sc.zone_radius * sc.zone_radius;
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0) return kInf;
  const double tau = (-b - std::sqrt(disc)) / (2.0 * a);
  return tau >= 0.0 ? tau : kInf;
}

/// Agents already inside ordered by recorded entry time, then the agents outside
/// by predicted entry time; ties by id. `entry_times[i]` is +inf until agent i
/// has entered.
inline Permutation fcfs_order(const JointState& x, const Scenario& sc, std::span<const double> entry_times) {
  struct Key {
    int group;
    double time;
    int id;
  };
  std::vector<Key> keys;
  for (int i = 0; i < x.size(); ++i) {
    const auto is = static_cast<std::size_t>(i);
    const double recorded = is < entry_times.size() ? entry_times[is] : kInf;
    if (std::isfinite(recorded))
      keys.push_back({0, recorded, i});
    else if (sc.in_zone(x.agents[is]))
      keys.push_back({0, x.t * sc.dt, i});
    else
      keys.push_back({1, predicted_entry_time(x.agents[is], sc), i});
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.group != b.group) return a.group < b.group;
    if (a.time != b.time) return a.time < b.time;
    return a.id < b.id;
  });
  std::vector<int> order;
  for (const auto& k : keys) order.push_back(k.id);
  return Permutation(std::move(order));
}

// ---------------------------------------------------------------------------
// closed loop

struct TrialConfig {
  std::uint64_t seed{0};
  int N{4};
  Planner planner{Planner::Bnp};
  int replan_every{5};
  double sim_dt{0.1};
  double max_sim_time{55.0};
  BnpOptions bnp{};
  bool verify_oracle{false};

  void validate() const {
    if (replan_every < 1) throw InvalidArgument("replan_every must be >= 1");
    if (!(max_sim_time > 0.0)) throw InvalidArgument("max_sim_time must be > 0");
    if (!(sim_dt > 0.0)) throw InvalidArgument("sim_dt must be > 0");
  }
};

struct Metrics {
  double closed_loop_cost{0.0};  ///< raw; normalized in aggregate()
  double group_time{0.0};
  bool timed_out{false};
  double min_separation{kInf};
  bool collided{false};
  double nodes_explored_mean{0.0};
  double wall_time{0.0};
  bool filter_failed{false};
  int filter_failed_steps{0};
  int infeasible_replans{0};
  std::optional<bool> oracle_equal;  ///< set in verification mode
  int steps{0};
};

struct StepRecord {
  int step{0};
  double t{0.0};
  std::vector<AgentState> states;  ///< before the step
  std::vector<AgentControl> controls;
  std::vector<int> permutation;  ///< global ids of active agents, leader first
  std::vector<int> active;
  double stage_cost{0.0};
  double value{kInf};  ///< social cost of the executed subgame
  bool replanned{false};
  std::int64_t nodes_explored{0};
  bool filter_failed{false};
  std::vector<NodeTraceRecord> tree;  ///< search events on replanning steps (bnp only)
};

struct TrialResult {
  Metrics metrics;
  std::vector<StepRecord> steps;
  Scenario scenario;
};

namespace detail {

inline Scenario restrict(const Scenario& sc, const std::vector<int>& ids, const std::vector<AgentState>& states) {
  Scenario sub = sc;
  sub.N = static_cast<int>(ids.size());
  sub.starts.clear();
  sub.targets.clear();
  for (int id : ids) {
    sub.starts.push_back(states[static_cast<std::size_t>(id)]);
    sub.targets.push_back(sc.targets[static_cast<std::size_t>(id)]);
  }
  return sub;
}

}  // namespace detail

/// Receding-horizon simulation. Every `replan_every` steps the order of play is
/// recomputed on the agents still flying; every step STP is solved for that order
/// and each agent applies its first planned control. Agents outside the zone plan
/// ignoring others; arrived agents are frozen and leave all interactions.
inline TrialResult run_trial(const TrialConfig& cfg, const Scenario& scenario, bool keep_trace = true) {
  cfg.validate();
  scenario.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Scenario sc = scenario;
  sc.dt = cfg.sim_dt;
  sc.timeout = cfg.max_sim_time;
  const int n = sc.N;
  const auto nn = static_cast<std::size_t>(n);
  const CostWeights w = planning_weights(sc);

  TrialResult out;
  out.scenario = sc;
  Metrics& m = out.metrics;

  std::vector<AgentState> x = sc.starts;
  std::vector<bool> arrived(nn, false);
  std::vector<double> entry(nn, kInf);
  std::vector<std::vector<AgentControl>> prev_plan(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    if (sc.in_zone(x[i])) entry[i] = 0.0;
    if ((x[i].position() - sc.targets[i].position()).norm() <= sc.arrive_radius) arrived[i] = true;
  }

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0x0dd5u};
  std::mt19937_64 rng(seq);

  std::vector<int> order;  // global ids, leader first
  std::optional<SearchResult> prev_search;
  std::vector<int> prev_search_ids;
  std::int64_t nodes_total = 0;
  int replans = 0;
  bool oracle_ok = true;
  double last_arrival = 0.0;

  auto update_min_sep = [&](const std::vector<int>& ids) {
    for (std::size_t a = 0; a < ids.size(); ++a)
      for (std::size_t b = a + 1; b < ids.size(); ++b)
        m.min_separation = std::min(m.min_separation, (x[static_cast<std::size_t>(ids[a])].position() -
                                                       x[static_cast<std::size_t>(ids[b])].position())
                                                          .norm());
  };

  const int max_steps = static_cast<int>(std::llround(cfg.max_sim_time / cfg.sim_dt));
  int k = 0;
  for (;; ++k) {
    std::vector<int> active;
    for (int i = 0; i < n; ++i)
      if (!arrived[static_cast<std::size_t>(i)]) active.push_back(i);
    update_min_sep(active);
    if (active.empty()) break;
    if (k >= max_steps) {
      m.timed_out = true;
      break;
    }

    const Scenario sub = detail::restrict(sc, active, x);
    const JointState jx{sub.starts, k};
    const auto na = active.size();
    std::vector<std::vector<AgentControl>> init(na);
    for (std::size_t a = 0; a < na; ++a) init[a] = shift_controls(prev_plan[static_cast<std::size_t>(active[a])]);

    std::vector<bool> unaware(na, false);
    for (std::size_t a = 0; a < na; ++a) unaware[a] = !sc.in_zone(x[static_cast<std::size_t>(active[a])]);
    BnpOptions bopts = cfg.bnp;
    bopts.stp.unaware = unaware;

    StepRecord rec;
    rec.step = k;
    rec.t = k * sc.dt;
    rec.active = active;

    if (k % cfg.replan_every == 0 || order.empty()) {
      rec.replanned = true;
      ++replans;
      std::vector<int> local;
      switch (cfg.planner) {
        case Planner::Bnp: {
          WarmstartData warm;
          if (prev_search && prev_search_ids == active) warm = make_warmstart(*prev_search);
          warm.init = init;
          SearchResult r = branch_and_play(sub, jx, bopts, warm);
          rec.nodes_explored = r.stats.nodes_explored;
          nodes_total += r.stats.nodes_explored;
          if (r.status == SearchStatus::Infeasible) {
            ++m.infeasible_replans;
          } else {
            local = r.permutation.order();
          }
          if (cfg.verify_oracle && na <= static_cast<std::size_t>(kBruteForceCap)) {
            const BruteForceResult bf = brute_force_order(sub, jx, bopts, warm);
            if (!(bf.value == r.value || (!std::isfinite(bf.value) && !std::isfinite(r.value)))) oracle_ok = false;
          }
          if (keep_trace) rec.tree = r.trace;
          prev_search = std::move(r);
          prev_search_ids = active;
          break;
        }
        case Planner::BruteForce: {
          WarmstartData warm;
          warm.init = init;
          const BruteForceResult bf = brute_force_order(sub, jx, bopts, warm);
          rec.nodes_explored = bf.prefix_evaluations;
          nodes_total += bf.prefix_evaluations;
          if (std::isfinite(bf.value)) local = bf.permutation.order();
          else ++m.infeasible_replans;
          break;
        }
        case Planner::Fcfs: {
          std::vector<double> sub_entry;
          for (int id : active) sub_entry.push_back(entry[static_cast<std::size_t>(id)]);
          local = fcfs_order(jx, sub, sub_entry).order();
          break;
        }
        case Planner::Randomized: {
          local.resize(na);
          std::iota(local.begin(), local.end(), 0);
          std::shuffle(local.begin(), local.end(), rng);
          break;
        }
      }
      if (!local.empty()) {
        order.clear();
        for (int l : local) order.push_back(active[static_cast<std::size_t>(l)]);
      }
    }

    // Order restricted to the active agents; anyone missing (e.g. after an
    // infeasible first replan) is appended by id.
    std::vector<int> global;
    for (int id : order)
      if (!arrived[static_cast<std::size_t>(id)]) global.push_back(id);
    for (int id : active)
      if (std::find(global.begin(), global.end(), id) == global.end()) global.push_back(id);
    std::vector<int> local_order;
    for (int id : global)
      local_order.push_back(static_cast<int>(std::find(active.begin(), active.end(), id) - active.begin()));

    StpOptions stp = bopts.stp;
    stp.init = init;
    const SubgameSolution sol = solve_stp(Permutation(local_order), jx, sub, stp);
    bool step_failed = false;
    for (const auto& r : sol.records) step_failed = step_failed || r.filter_failed || r.solver_failed;
    if (step_failed) {
      ++m.filter_failed_steps;
      m.filter_failed = true;
    }

    // Execute the first control and accumulate the realized stage cost.
    std::vector<AgentControl> u(nn);
    for (std::size_t a = 0; a < na; ++a) {
      const auto id = static_cast<std::size_t>(active[a]);
      u[id] = sol.profile[a].control(0, x[id]);
      if (sc.control_bounds) u[id] = sc.control_bounds->clamp(u[id]);
      prev_plan[id] = sol.trajectories[a].controls;
    }
    double stage = 0.0;
    for (int ia : active) {
      const auto i = static_cast<std::size_t>(ia);
      stage += individual_stage_cost(x[i], u[i], sc.targets[i], w);
      for (int ja : active)
        if (ja != ia) stage += safety_stage_cost(x[i].position(), x[static_cast<std::size_t>(ja)].position(), w);
    }
    m.closed_loop_cost += stage;

    if (keep_trace) {
      rec.states = x;
      rec.controls = u;
      rec.permutation = global;
      rec.stage_cost = stage;
      rec.value = sol.social_cost;
      rec.filter_failed = step_failed;
      out.steps.push_back(std::move(rec));
    }

    const double t_next = (k + 1) * sc.dt;
    for (int ia : active) {
      const auto i = static_cast<std::size_t>(ia);
      x[i] = step(x[i], u[i], sc.dt);
      if (!std::isfinite(entry[i]) && sc.in_zone(x[i])) entry[i] = t_next;
      if ((x[i].position() - sc.targets[i].position()).norm() <= sc.arrive_radius) {
        arrived[i] = true;
        x[i].v = 0.0;
        last_arrival = t_next;
      }
    }
  }

  m.steps = k;
  m.group_time = m.timed_out ? cfg.max_sim_time : last_arrival;
  m.collided = m.min_separation <= sc.d_col;
  m.nodes_explored_mean = replans > 0 ? static_cast<double>(nodes_total) / replans : 0.0;
  if (cfg.verify_oracle && cfg.planner == Planner::Bnp) m.oracle_equal = oracle_ok;
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// statistics

struct MeanStd {
  double mean{0.0};
  double std{0.0};
};

/// Mean and sample standard deviation (0 for a single value).
inline MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("mean_std needs at least one value");
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

struct SummaryRow {
  std::string planner;
  int N{0};
  double cost_mean{0.0};
  double cost_std{0.0};
  double group_mean{0.0};
  double group_std{0.0};
  double timeout_rate{0.0};    ///< percent
  double collision_rate{0.0};  ///< percent
  double nodes_mean{0.0};
  int trials{0};
};

/// Summary over trials. Costs are divided by `normalizer` (the mean raw FCFS cost
/// over the same seeds); pass 1 for raw costs.
inline SummaryRow aggregate(const std::string& planner, int n, std::span<const Metrics> trials, double normalizer = 1.0) {
  if (trials.empty()) throw InvalidArgument("aggregate needs at least one trial");
  if (!(normalizer > 0.0)) throw InvalidArgument("normalizer must be > 0");
  std::vector<double> cost;
  std::vector<double> group;
  std::vector<double> nodes;
  int timeouts = 0;
  int collisions = 0;
  for (const auto& t : trials) {
    cost.push_back(t.closed_loop_cost / normalizer);
    group.push_back(t.group_time);
    nodes.push_back(t.nodes_explored_mean);
    timeouts += t.timed_out ? 1 : 0;
    collisions += t.collided ? 1 : 0;
  }
  const MeanStd c = mean_std(cost);
  const MeanStd g = mean_std(group);
  SummaryRow row{planner, n, c.mean, c.std, g.mean, g.std, 0.0, 0.0, mean_std(nodes).mean,
                 static_cast<int>(trials.size())};
  row.timeout_rate = 100.0 * timeouts / static_cast<double>(trials.size());
  row.collision_rate = 100.0 * collisions / static_cast<double>(trials.size());
  return row;
}

/// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
inline double sign_test_p(int wins, int n) {
  if (n <= 0) return 1.0;
  double p = 0.0;
  for (int k = wins; k <= n; ++k) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) -
                                                n * std::numbers::ln2);
  return std::min(p, 1.0);
}

}  // namespace bnp
