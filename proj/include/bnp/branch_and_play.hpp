#pragma once

#include "bnp/core_types.hpp"
#include "bnp/stp.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnp {

enum class Exploration { BestFirst, DepthFirst };
enum class SearchStatus { Optimal, BudgetExhausted, Infeasible };
enum class NodeStatus { Open, Pruned, Expanded, Incumbent };

inline const char* to_string(SearchStatus s) {
  switch (s) {
    case SearchStatus::Optimal: return "optimal";
    case SearchStatus::BudgetExhausted: return "budget_exhausted";
    case SearchStatus::Infeasible: return "infeasible";
  }
  return "?";
}

struct CapExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BnpOptions {
  Exploration exploration{Exploration::BestFirst};
  UnassignedMode unassigned_mode{UnassignedMode::AvoidAssigned};
  bool enforce_admissibility{true};
  bool pairwise_pruning{true};
  bool bound_pruning{true};
  std::optional<std::int64_t> node_budget;
  StpOptions stp{};

  void validate(int n) const {
    if (node_budget && *node_budget < n) throw InvalidArgument("node_budget must be >= N");
  }
};

struct SearchNode {
  IncompletePermutation perm;
  double parent_bound{-kInf};
  double raw_value{kInf};
  double bound{kInf};
  SubgameSolution solution;
  NodeStatus status{NodeStatus::Open};
  std::vector<int> forbidden_next;  ///< players that may not be appended next (pairwise pruning)
};

struct SearchStats {
  std::int64_t nodes_explored{0};  ///< bounded nodes of order >= 1
  std::int64_t nodes_pruned_bound{0};
  std::int64_t nodes_pruned_pairwise{0};
  std::int64_t incumbent_updates{0};
  std::int64_t admissibility_violations{0};  ///< child raw value below its parent's
  double wall_time{0.0};
};

/// One event in the life of a tree node, in logical order.
struct NodeTraceRecord {
  std::int64_t seq{0};
  std::string prefix;
  int rho{0};
  double raw_value{kInf};
  double bound{kInf};
  std::string event;  ///< bounded | expanded | incumbent | candidate | pruned_bound | pruned_pairwise | infeasible
};

struct SearchResult {
  SearchStatus status{SearchStatus::Infeasible};
  Permutation permutation;
  double value{kInf};
  SubgameSolution solution;
  IncompletePermutation incumbent_node;  ///< node whose solution was accepted (may be incomplete)
  SearchStats stats;
  std::vector<NodeTraceRecord> trace;
};

/// Inputs carried from the previous planning step.
struct WarmstartData {
  std::vector<std::vector<AgentControl>> init;  ///< per-agent initial controls
  std::vector<IncompletePermutation> seeds;     ///< nodes re-bounded first to seed the incumbent
};

inline std::int64_t full_tree_size(int n) {
  std::int64_t total = 0;
  std::int64_t level = 1;
  for (int rho = 1; rho <= n; ++rho) {
    level *= n - rho + 1;
    total += level;
  }
  return total;
}

/// Bounds nodes with STP from a fixed joint state. Results are memoized by node.
class StpOracle {
public:
  StpOracle(const Scenario& sc, JointState x0, StpOptions opts)
      : sc_(sc), x0_(std::move(x0)), opts_(std::move(opts)) {}

  const SubgameSolution& operator()(const IncompletePermutation& p) {
    const std::string key = p.str() + (p.mode() == UnassignedMode::Unaware ? "u" : "a");
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, solve_stp(p, x0_, sc_, opts_)).first;
    return it->second;
  }

  bool independent(const SubgameSolution& sol, int i, int j) const { return interaction_free(sol, i, j, sc_); }
  bool cached(const IncompletePermutation& p) const {
    return cache_.contains(p.str() + (p.mode() == UnassignedMode::Unaware ? "u" : "a"));
  }

private:
  const Scenario& sc_;
  JointState x0_;
  StpOptions opts_;
  std::map<std::string, SubgameSolution> cache_;
};

// ---------------------------------------------------------------------------
// search primitives

inline bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

/// Index of the node to explore next.
/// BestFirst: minimal bound, then deeper, then lexicographically smaller prefix.
/// DepthFirst: deepest, then minimal bound, then lexicographically smaller prefix.
inline std::size_t select_node(const std::vector<SearchNode>& open, Exploration strategy) {
  if (open.empty()) throw InvalidArgument("select_node needs a non-empty pool");
  auto better = [strategy](const SearchNode& a, const SearchNode& b) {
    const int ra = a.perm.order();
    const int rb = b.perm.order();
    if (strategy == Exploration::BestFirst) {
      if (a.bound != b.bound) return a.bound < b.bound;
      if (ra != rb) return ra > rb;
    } else {
      if (ra != rb) return ra > rb;
      if (a.bound != b.bound) return a.bound < b.bound;
    }
    return lex_less(a.perm.assigned(), b.perm.assigned());
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < open.size(); ++i)
    if (better(open[i], open[best])) best = i;
  return best;
}

/// Removes every node whose bound is strictly above the incumbent value.
inline std::int64_t prune_by_bound(std::vector<SearchNode>& open, double incumbent_value) {
  const auto before = open.size();
  std::erase_if(open, [incumbent_value](const SearchNode& n) { return n.bound > incumbent_value; });
  return static_cast<std::int64_t>(before - open.size());
}

/// Enforced bound of a node given its raw value.
inline double enforced_bound(double raw, double parent_bound, bool enforce) {
  if (!std::isfinite(raw)) return kInf;
  return enforce ? std::max(raw, parent_bound) : raw;
}

template <class Oracle>
SearchNode bound_node(const IncompletePermutation& perm, double parent_bound, Oracle& oracle, const BnpOptions& opts) {
  SearchNode node;
  node.perm = perm;
  node.parent_bound = parent_bound;
  node.solution = oracle(perm);
  node.raw_value = node.solution.social_cost;
  node.bound = enforced_bound(node.raw_value, parent_bound, opts.enforce_admissibility);
  return node;
}

/// True when every complete descendant of `node` would get the node's own
/// solution, so the node can be closed with that solution.
template <class Oracle>
bool promotable(const SearchNode& node, const Oracle& oracle) {
  if (node.perm.is_complete() || !node.solution.feasible || !std::isfinite(node.bound)) return false;
  const auto& un = node.perm.unassigned();
  if (node.perm.mode() == UnassignedMode::AvoidAssigned) {
    for (std::size_t a = 0; a < un.size(); ++a)
      for (std::size_t b = a + 1; b < un.size(); ++b)
        if (!oracle.independent(node.solution, un[a], un[b])) return false;
  } else {
    for (int i : un)
      for (int j = 0; j < node.perm.size(); ++j)
        if (j != i && !oracle.independent(node.solution, i, j)) return false;
  }
  return true;
}

/// Children of `node`, excluding its forbidden players, in ascending player id.
inline std::vector<IncompletePermutation> expand(const SearchNode& node, UnassignedMode mode) {
  if (node.perm.is_complete()) throw InvalidArgument("cannot expand a complete permutation");
  std::vector<IncompletePermutation> children;
  for (int agent : node.perm.unassigned())
    if (std::find(node.forbidden_next.begin(), node.forbidden_next.end(), agent) == node.forbidden_next.end())
      children.push_back(node.perm.extended(agent, mode));
  return children;
}

// ---------------------------------------------------------------------------
// the search

template <class Oracle>
SearchResult branch_and_play_search(int n, Oracle& oracle, const BnpOptions& opts,
                                    const std::vector<IncompletePermutation>& seeds = {}) {
  if (n < 1) throw InvalidArgument("N must be >= 1");
  opts.validate(n);
  const auto t0 = std::chrono::steady_clock::now();
  SearchResult res;
  SearchStats& st = res.stats;
  std::int64_t seq = 0;
  std::map<std::string, SearchNode> bounded;  // nodes of order >= 1 already evaluated, by prefix

  auto log = [&](const SearchNode& node, const char* event) {
    res.trace.push_back({seq++, node.perm.str(), node.perm.order(), node.raw_value, node.bound, event});
  };
  auto budget_left = [&] { return !opts.node_budget || st.nodes_explored < *opts.node_budget; };

  auto offer = [&](const SearchNode& node, const char* event) {
    if (node.bound < res.value) {
      res.value = node.bound;
      res.permutation = node.perm.completion();
      res.solution = node.solution;
      res.incumbent_node = node.perm;
      ++st.incumbent_updates;
      log(node, "incumbent");
    } else {
      log(node, event);
    }
  };

  // Evaluates a node of order >= 1 once; re-requests return the stored result.
  auto evaluate = [&](const IncompletePermutation& perm, double parent_bound, double parent_raw) -> SearchNode {
    const std::string key = perm.str();
    if (auto it = bounded.find(key); it != bounded.end()) return it->second;
    SearchNode node = bound_node(perm, parent_bound, oracle, opts);
    ++st.nodes_explored;
    if (std::isfinite(parent_raw) && node.raw_value < parent_raw) ++st.admissibility_violations;
    log(node, "bounded");
    bounded.emplace(key, node);
    return node;
  };

  if (n == 1) {
    SearchNode leaf = evaluate(IncompletePermutation::complete(Permutation::identity(1)), -kInf, kInf);
    if (leaf.solution.feasible && std::isfinite(leaf.bound)) offer(leaf, "candidate");
    res.status = std::isfinite(res.value) ? SearchStatus::Optimal : SearchStatus::Infeasible;
    st.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

  SearchNode root = bound_node(IncompletePermutation::root(n, UnassignedMode::Unaware), -kInf, oracle, opts);
  log(root, "bounded");
  if (!std::isfinite(root.bound)) {
    // An unbounded root makes every enforced path value infinite.
    res.status = SearchStatus::Infeasible;
    st.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

  // Seeds from the previous step: re-bound their root paths and accept closable ones.
  for (const auto& seed : seeds) {
    if (seed.size() != n || seed.order() < 1) continue;
    double pb = root.bound;
    double pr = root.raw_value;
    SearchNode node;
    bool ok = true;
    for (int rho = 1; rho <= seed.order() && ok; ++rho) {
      std::vector<int> prefix(seed.assigned().begin(), seed.assigned().begin() + rho);
      node = evaluate(IncompletePermutation(prefix, n, opts.unassigned_mode), pb, pr);
      if (!std::isfinite(node.bound)) ok = false;
      pb = node.bound;
      pr = node.raw_value;
    }
    if (!ok) continue;
    if (node.perm.is_complete() ? node.solution.feasible : (opts.pairwise_pruning && promotable(node, oracle)))
      offer(node, "candidate");
  }

  std::vector<SearchNode> open;
  bool exhausted = false;

  // Bounds and files the children of `parent`.
  auto branch = [&](SearchNode& parent) {
    const std::vector<IncompletePermutation> kids = expand(parent, opts.unassigned_mode);
    std::vector<SearchNode> children;
    for (const auto& perm : kids) {
      if (!budget_left() && !bounded.contains(perm.str())) {
        exhausted = true;
        break;
      }
      children.push_back(evaluate(perm, parent.bound, parent.raw_value));
    }

    // Twin rule: with i, j not interacting at parent s, (s,i,j,X) and (s,j,i,X) have
    // identical solutions from depth rho+2 on, so only the twin under the sibling with
    // the smaller enforced bound (ties: smaller id) needs to be kept.
    if (opts.pairwise_pruning && parent.perm.mode() == UnassignedMode::AvoidAssigned && parent.perm.order() >= 1) {
      for (auto& cj : children) {
        const int j = cj.perm.assigned().back();
        for (const auto& ci : children) {
          const int i = ci.perm.assigned().back();
          if (i == j || !std::isfinite(ci.bound)) continue;
          if (!(ci.bound < cj.bound || (ci.bound == cj.bound && i < j))) continue;
          if (!oracle.independent(parent.solution, i, j)) continue;
          if (!cj.perm.is_complete()) {
            cj.forbidden_next.push_back(i);
            ++st.nodes_pruned_pairwise;
          }
        }
        std::sort(cj.forbidden_next.begin(), cj.forbidden_next.end());
      }
    }

    for (auto& child : children) {
      if (!std::isfinite(child.bound)) {
        log(child, "infeasible");
        continue;
      }
      if (child.perm.is_complete()) {
        if (child.solution.feasible) offer(child, "candidate");
        else log(child, "infeasible");
        continue;
      }
      if (opts.pairwise_pruning && promotable(child, oracle)) {
        st.nodes_pruned_pairwise += static_cast<std::int64_t>(child.perm.unassigned().size());
        offer(child, "candidate");
        continue;
      }
      if (opts.bound_pruning && child.bound > res.value) {
        ++st.nodes_pruned_bound;
        log(child, "pruned_bound");
        continue;
      }
      open.push_back(std::move(child));
    }
    if (opts.bound_pruning && std::isfinite(res.value)) {
      for (const auto& node : open)
        if (node.bound > res.value) log(node, "pruned_bound");
      st.nodes_pruned_bound += prune_by_bound(open, res.value);
    }
  };

  branch(root);
  while (!open.empty() && !exhausted) {
    const std::size_t idx = select_node(open, opts.exploration);
    SearchNode node = std::move(open[idx]);
    open.erase(open.begin() + static_cast<long>(idx));
    if (opts.bound_pruning && node.bound > res.value) {
      ++st.nodes_pruned_bound;
      log(node, "pruned_bound");
      continue;
    }
    log(node, "expanded");
    branch(node);
  }
  if (!open.empty()) exhausted = true;

  if (exhausted)
    res.status = SearchStatus::BudgetExhausted;
  else
    res.status = std::isfinite(res.value) ? SearchStatus::Optimal : SearchStatus::Infeasible;
  st.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

/// Branch-and-Play from joint state x0, bounding nodes with STP.
inline SearchResult branch_and_play(const Scenario& sc, const JointState& x0, const BnpOptions& opts,
                                    const std::optional<WarmstartData>& warm = std::nullopt) {
  StpOptions stp = opts.stp;
  std::vector<IncompletePermutation> seeds;
  if (warm) {
    if (!warm->init.empty()) stp.init = warm->init;
    seeds = warm->seeds;
  }
  StpOracle oracle(sc, x0, std::move(stp));
  return branch_and_play_search(sc.N, oracle, opts, seeds);
}

/// Warmstart for the next planning step: the previous plan shifted by one step as
/// every agent's initial guess, and the previous incumbent node as a seed.
inline WarmstartData make_warmstart(const SearchResult& prev) {
  WarmstartData w;
  if (prev.solution.trajectories.empty()) return w;
  for (const auto& t : prev.solution.trajectories) w.init.push_back(shift_controls(t.controls));
  if (prev.incumbent_node.size() > 0 && prev.incumbent_node.order() > 0) w.seeds.push_back(prev.incumbent_node);
  return w;
}

// ---------------------------------------------------------------------------
// exhaustive oracle

struct BruteForceResult {
  Permutation permutation;
  double value{kInf};
  SubgameSolution solution;
  std::int64_t permutations_evaluated{0};
  std::int64_t prefix_evaluations{0};  ///< distinct subgames solved, root included
};

inline constexpr int kBruteForceCap = 8;

/// Enumerates all N! orders. Each order's value is its leaf's raw value, or with
/// enforcement the running maximum over the root and every prefix on its path,
/// exactly as the search computes bounds. Infeasible leaves are ineligible.
template <class Oracle>
BruteForceResult brute_force_search(int n, Oracle& oracle, const BnpOptions& opts, int cap = kBruteForceCap) {
  if (n > cap) throw CapExceeded("brute force is capped at N = " + std::to_string(cap));
  if (n < 1) throw InvalidArgument("N must be >= 1");
  BruteForceResult res;
  double root_value = -kInf;
  if (n > 1) {
    root_value = oracle(IncompletePermutation::root(n, UnassignedMode::Unaware)).social_cost;
    ++res.prefix_evaluations;
  }
  std::map<std::vector<int>, double> raw;  // prefix -> raw value
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  do {
    ++res.permutations_evaluated;
    double value = opts.enforce_admissibility ? root_value : -kInf;
    if (!std::isfinite(root_value) && n > 1) value = kInf;
    for (int rho = 1; rho <= n; ++rho) {
      std::vector<int> prefix(order.begin(), order.begin() + rho);
      auto it = raw.find(prefix);
      if (it == raw.end()) {
        const double v = oracle(IncompletePermutation(prefix, n, opts.unassigned_mode)).social_cost;
        ++res.prefix_evaluations;
        it = raw.emplace(prefix, v).first;
      }
      const double r = it->second;
      if (!std::isfinite(r)) value = kInf;
      else if (opts.enforce_admissibility || rho == n) value = std::max(value, r);
    }
    const SubgameSolution& leaf = oracle(IncompletePermutation(order, n, opts.unassigned_mode));
    if (!leaf.feasible || !std::isfinite(value)) continue;
    if (value < res.value) {
      res.value = value;
      res.permutation = Permutation(order);
      res.solution = leaf;
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return res;
}

inline BruteForceResult brute_force_order(const Scenario& sc, const JointState& x0, const BnpOptions& opts = {},
                                          const std::optional<WarmstartData>& warm = std::nullopt,
                                          int cap = kBruteForceCap) {
  if (sc.N > cap) throw CapExceeded("brute force is capped at N = " + std::to_string(cap));
  StpOptions stp = opts.stp;
  if (warm && !warm->init.empty()) stp.init = warm->init;
  StpOracle oracle(sc, x0, std::move(stp));
  return brute_force_search(sc.N, oracle, opts, cap);
}

}  // namespace bnp
