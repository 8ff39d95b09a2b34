#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// errors

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when a trajectory optimization produces non-finite costs or states.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when the evasive override cannot restore separation within the horizon.
struct FilterFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// states and trajectories

struct AgentState {
  double px{0.0};
  double py{0.0};
  double v{0.0};
  double theta{0.0};

  Eigen::Vector2d position() const { return {px, py}; }
  Eigen::Vector4d vec() const { return {px, py, v, theta}; }
  static AgentState from_vec(const Eigen::Vector4d& x) { return {x[0], x[1], x[2], x[3]}; }

  bool finite() const {
    return std::isfinite(px) && std::isfinite(py) && std::isfinite(v) && std::isfinite(theta);
  }
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct AgentControl {
  double a{0.0};
  double omega{0.0};

  Eigen::Vector2d vec() const { return {a, omega}; }
  static AgentControl from_vec(const Eigen::Vector2d& u) { return {u[0], u[1]}; }
  friend bool operator==(const AgentControl&, const AgentControl&) = default;
};

struct ControlBounds {
  double a_min{-2.0};
  double a_max{2.0};
  double omega_min{-1.5};
  double omega_max{1.5};

  AgentControl clamp(const AgentControl& u) const {
    return {std::clamp(u.a, a_min, a_max), std::clamp(u.omega, omega_min, omega_max)};
  }
  friend bool operator==(const ControlBounds&, const ControlBounds&) = default;
};

struct JointState {
  std::vector<AgentState> agents;
  int t{0};

  int size() const { return static_cast<int>(agents.size()); }
};

/// States 0..T and controls 0..T-1 of a single agent.
struct Trajectory {
  std::vector<AgentState> states;
  std::vector<AgentControl> controls;

  int horizon() const { return static_cast<int>(controls.size()); }
  Eigen::Vector2d position(int k) const { return states[static_cast<std::size_t>(k)].position(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

using FeedbackGain = Eigen::Matrix<double, 2, 4>;

/// Time-varying affine feedback u_t = nominal.u_t + K_t (x_t - nominal.x_t).
struct Policy {
  Trajectory nominal;
  std::vector<FeedbackGain> gains;

  AgentControl control(int t, const AgentState& x) const {
    const auto k = static_cast<std::size_t>(t);
    const Eigen::Vector4d dx = x.vec() - nominal.states[k].vec();
    return AgentControl::from_vec(nominal.controls[k].vec() + gains[k] * dx);
  }
};

// ---------------------------------------------------------------------------
// orders of play

/// A complete order of play. order[0] is the leader. Agent ids are 0-based.
class Permutation {
public:
  Permutation() = default;
  explicit Permutation(std::vector<int> order) : order_(std::move(order)) {
    std::vector<int> sorted = order_;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i] != static_cast<int>(i))
        throw InvalidArgument("permutation must be a bijection on 0..N-1");
    }
  }

  static Permutation identity(int n) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    return Permutation(std::move(order));
  }

  const std::vector<int>& order() const { return order_; }
  int size() const { return static_cast<int>(order_.size()); }
  int operator[](int i) const { return order_[static_cast<std::size_t>(i)]; }

  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < order_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(order_[i]);
    }
    return s + ")";
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;

private:
  std::vector<int> order_;
};

/// How players without an assigned order are solved in a subgame.
enum class UnassignedMode {
  AvoidAssigned,  ///< play last, avoiding every assigned player
  Unaware,        ///< ignore everyone
};

/// An ordered prefix of the order of play plus the remaining (unordered) players.
/// The unassigned set is kept sorted.
class IncompletePermutation {
public:
  IncompletePermutation() = default;

  IncompletePermutation(std::vector<int> assigned, int n, UnassignedMode mode)
      : assigned_(std::move(assigned)), mode_(mode) {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (int a : assigned_) {
      if (a < 0 || a >= n || seen[static_cast<std::size_t>(a)])
        throw InvalidArgument("incomplete permutation prefix must hold distinct ids in 0..N-1");
      seen[static_cast<std::size_t>(a)] = true;
    }
    for (int i = 0; i < n; ++i)
      if (!seen[static_cast<std::size_t>(i)]) unassigned_.push_back(i);
  }

  static IncompletePermutation root(int n, UnassignedMode mode) { return {{}, n, mode}; }
  static IncompletePermutation complete(const Permutation& p) {
    return {p.order(), p.size(), UnassignedMode::AvoidAssigned};
  }

  const std::vector<int>& assigned() const { return assigned_; }
  const std::vector<int>& unassigned() const { return unassigned_; }
  UnassignedMode mode() const { return mode_; }
  int order() const { return static_cast<int>(assigned_.size()); }
  int size() const { return static_cast<int>(assigned_.size() + unassigned_.size()); }
  bool is_complete() const { return unassigned_.empty(); }

  bool is_assigned(int agent) const {
    return std::find(assigned_.begin(), assigned_.end(), agent) != assigned_.end();
  }

  /// Child prefix that appends `agent`, keeping `mode`.
  IncompletePermutation extended(int agent, UnassignedMode mode) const {
    if (std::find(unassigned_.begin(), unassigned_.end(), agent) == unassigned_.end())
      throw InvalidArgument("cannot extend a prefix with an already assigned player");
    IncompletePermutation child;
    child.assigned_ = assigned_;
    child.assigned_.push_back(agent);
    child.unassigned_ = unassigned_;
    child.unassigned_.erase(std::find(child.unassigned_.begin(), child.unassigned_.end(), agent));
    child.mode_ = mode;
    return child;
  }

  /// Completes the prefix with unassigned players in ascending id order.
  Permutation completion() const {
    std::vector<int> order = assigned_;
    order.insert(order.end(), unassigned_.begin(), unassigned_.end());
    return Permutation(std::move(order));
  }

  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < assigned_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(assigned_[i]);
    }
    s += "|";
    for (std::size_t i = 0; i < unassigned_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(unassigned_[i]);
    }
    return s + ")";
  }

  friend bool operator==(const IncompletePermutation&, const IncompletePermutation&) = default;

private:
  std::vector<int> assigned_;
  std::vector<int> unassigned_;
  UnassignedMode mode_{UnassignedMode::AvoidAssigned};
};

inline bool is_complete(const IncompletePermutation& p) { return p.is_complete(); }

/// Children of order rho+1, one per unassigned player, in ascending id order.
/// Note: a prefix of order rho has (N - rho)! complete descendants.
inline std::vector<IncompletePermutation> descendants(const IncompletePermutation& p) {
  if (p.is_complete()) throw InvalidArgument("a complete permutation has no descendants");
  std::vector<IncompletePermutation> children;
  children.reserve(p.unassigned().size());
  for (int agent : p.unassigned()) children.push_back(p.extended(agent, p.mode()));
  return children;
}

// ---------------------------------------------------------------------------
// scenario

struct TrackingWeights {
  double pos{1.0};
  double v{0.1};
  double theta{0.1};
  friend bool operator==(const TrackingWeights&, const TrackingWeights&) = default;
};

struct ControlWeights {
  double a{0.1};
  double omega{0.1};
  friend bool operator==(const ControlWeights&, const ControlWeights&) = default;
};

/// A full problem instance. Agents are planned inside a circular ATC zone;
/// `d_plan` is the margin used by planners, `d_col` the collision threshold.
struct Scenario {
  int N{4};
  double dt{0.1};
  int T{20};
  std::vector<AgentState> starts;
  std::vector<AgentState> targets;
  std::array<double, 2> zone_center{0.0, 0.0};
  double zone_radius{2.5};
  double d_col{0.2};
  double d_plan{0.4};
  double mu{100.0};
  TrackingWeights w_track{};
  ControlWeights w_ctrl{};
  double timeout{55.0};
  double arrive_radius{0.15};
  std::optional<ControlBounds> control_bounds{ControlBounds{}};

  // Generation parameters, used when starts/targets are sampled.
  std::uint64_t seed{0};
  double jitter{0.5};
  double start_speed{0.5};

  Eigen::Vector2d center() const { return {zone_center[0], zone_center[1]}; }
  bool in_zone(const AgentState& s) const {
    return (s.position() - center()).norm() <= zone_radius;
  }

  JointState initial_state() const { return {starts, 0}; }

  void validate() const {
    if (N < 1) throw InvalidArgument("N must be >= 1");
    if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
    if (T < 1) throw InvalidArgument("T must be >= 1");
    if (!(zone_radius > 0.0)) throw InvalidArgument("zone_radius must be > 0");
    if (!(d_col > 0.0)) throw InvalidArgument("d_col must be > 0");
    if (d_plan < d_col) throw InvalidArgument("d_plan must be >= d_col");
    if (!(mu > 0.0)) throw InvalidArgument("mu must be > 0");
    if (w_track.pos < 0 || w_track.v < 0 || w_track.theta < 0 || w_ctrl.a < 0 || w_ctrl.omega < 0)
      throw InvalidArgument("cost weights must be >= 0");
    if (!(timeout > 0.0)) throw InvalidArgument("timeout must be > 0");
    if (!(arrive_radius > 0.0)) throw InvalidArgument("arrive_radius must be > 0");
    if (control_bounds) {
      const auto& b = *control_bounds;
      if (b.a_min > b.a_max || b.omega_min > b.omega_max)
        throw InvalidArgument("control_bounds must satisfy min <= max");
    }
    if (static_cast<int>(starts.size()) != N || static_cast<int>(targets.size()) != N)
      throw InvalidArgument("starts and targets must hold N states");
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// ---------------------------------------------------------------------------
// subgame solutions

struct CostBreakdown {
  double individual{0.0};
  double safety{0.0};
  double total() const { return individual + safety; }
};

using PositionSequence = std::vector<Eigen::Vector2d>;

/// Per-agent bookkeeping from a subgame solve.
struct AgentSolveRecord {
  std::vector<int> predecessors;        ///< ids the agent avoided, ascending
  std::vector<PositionSequence> probes; ///< every candidate plan whose cost or safety was tested
  bool filtered{false};
  bool filter_failed{false};
  bool solver_failed{false};
};

struct SubgameSolution {
  std::vector<Policy> profile;
  std::vector<Trajectory> trajectories;
  std::vector<CostBreakdown> costs;
  double social_cost{kInf};
  bool feasible{false};  ///< every pair separated by more than d_col at every step
  std::vector<AgentSolveRecord> records;
  int solver_calls{0};

  bool failed() const { return !std::isfinite(social_cost); }
};

}  // namespace bnp
