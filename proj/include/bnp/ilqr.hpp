#pragma once

#include "bnp/core_types.hpp"
#include "bnp/costs.hpp"
#include "bnp/dynamics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace bnp {

/// Time discretization and actuation limits shared by every agent.
struct PlanningModel {
  double dt{0.1};
  int T{20};
  std::optional<ControlBounds> bounds{ControlBounds{}};
};

inline PlanningModel planning_model(const Scenario& sc) { return {sc.dt, sc.T, sc.control_bounds}; }

enum class InitStrategy { ZeroControls, PreviousShifted };

struct IlqrOptions {
  int max_iters{100};
  double cost_tolerance{1e-9};  ///< stop when the relative decrease of an accepted step falls below
  double reg_init{1e-6};
  double reg_min{1e-9};
  double reg_max{1e6};
  std::vector<double> line_search_alphas{1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625};
  /// Kink half-widths tried in turn; the next one runs only while some stage sits
  /// within the current width of the margin.
  std::vector<double> hinge_bands{1e-2, 1e-4, 1e-6, 1e-8};
  InitStrategy init_strategy{InitStrategy::ZeroControls};

  void validate() const {
    if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
    if (!(cost_tolerance > 0) || !(reg_min > 0) || !(reg_max >= reg_min) || !(reg_init > 0))
      throw InvalidArgument("iLQR tolerances must be > 0");
    if (line_search_alphas.empty()) throw InvalidArgument("line search needs at least one step");
    if (hinge_bands.empty()) throw InvalidArgument("need at least one hinge band");
    for (double b : hinge_bands)
      if (!(b > 0)) throw InvalidArgument("hinge bands must be > 0");
  }
};

/// One accepted iLQR iterate.
struct IlqrIteration {
  int round{0};  ///< active-set round the iterate belongs to
  int iteration{0};
  double cost{0.0};
  double reg{0.0};
  double alpha{0.0};
};

struct SingleAgentResult {
  Trajectory trajectory;
  Policy policy;
  double cost{kInf};  ///< surrogate cost against every predecessor
  std::vector<IlqrIteration> trace;
  std::vector<PositionSequence> probes;  ///< converged plan of every active-set round
  std::vector<int> active;               ///< predecessor indices that entered the cost
};

inline std::vector<AgentControl> shift_controls(std::span<const AgentControl> controls) {
  std::vector<AgentControl> shifted(controls.begin(), controls.end());
  if (shifted.size() > 1) {
    std::rotate(shifted.begin(), shifted.begin() + 1, shifted.end());
    shifted.back() = shifted[shifted.size() - 2];
  }
  return shifted;
}

namespace detail {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat24 = Eigen::Matrix<double, 2, 4>;

struct IlqrProblem {
  AgentState x0;
  AgentState target;
  CostWeights w;
  PlanningModel model;
  std::vector<const Trajectory*> obstacles;  ///< predecessors whose hinge enters the cost
  double band{1e-2};  ///< half-width of the smoothed kink in the local model
};

inline double trajectory_cost(const IlqrProblem& pb, const Trajectory& traj) {
  double total = 0.0;
  for (int k = 0; k <= traj.horizon(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    total += individual_stage_cost(traj.states[ks], stage_control(traj, k), pb.target, pb.w);
    for (const Trajectory* o : pb.obstacles)
      total += safety_stage_cost(traj.states[ks].position(), o->states[ks].position(), pb.w);
  }
  return total;
}

struct StageModel {
  Vec4 lx;
  Mat4 lxx;
  Vec2 lu;
  Mat2 luu;
};

// Gradient and PSD curvature of the stage cost. Inside the hinge the curvature is
// replaced by mu/d along the separation direction. Within `band` of the kink the
// model uses a Huber ramp so plans resting on the margin can slide along it; the
// true cost is still what the line search measures.
inline StageModel stage_model(const IlqrProblem& pb, const Trajectory& traj, int k) {
  const auto ks = static_cast<std::size_t>(k);
  const AgentState& s = traj.states[ks];
  const AgentControl u = stage_control(traj, k);
  const CostWeights& w = pb.w;
  StageModel m;
  m.lx << 2.0 * w.w_pos * (s.px - pb.target.px), 2.0 * w.w_pos * (s.py - pb.target.py),
      2.0 * w.w_v * (s.v - pb.target.v), 2.0 * w.w_theta * wrap_angle(s.theta - pb.target.theta);
  m.lxx.setZero();
  m.lxx.diagonal() << 2.0 * w.w_pos, 2.0 * w.w_pos, 2.0 * w.w_v, 2.0 * w.w_theta;
  m.lu << 2.0 * w.w_a * u.a, 2.0 * w.w_omega * u.omega;
  m.luu.setZero();
  m.luu.diagonal() << 2.0 * w.w_a, 2.0 * w.w_omega;
  const Vec2 p = s.position();
  for (const Trajectory* o : pb.obstacles) {
    const Vec2 diff = p - o->states[ks].position();
    const double r = diff.norm();
    if (r >= w.d + pb.band || r < 1e-12) continue;
    const Vec2 n = diff / r;
    if (r <= w.d - pb.band) {
      m.lx.head<2>() -= w.mu * n;
      m.lxx.topLeftCorner<2, 2>() += (w.mu / w.d) * n * n.transpose();
    } else {
      m.lx.head<2>() -= w.mu * (w.d + pb.band - r) / (2.0 * pb.band) * n;
      m.lxx.topLeftCorner<2, 2>() += (w.mu / (2.0 * pb.band)) * n * n.transpose();
    }
  }
  return m;
}

struct BoxStep {
  Vec2 du;
  std::array<bool, 2> free{true, true};
};

// min 0.5 du'H du + g'du  s.t. lo <= du <= hi, H positive definite, 2 variables.
// The optimum is the best feasible point among the nine active-set candidates.
inline BoxStep solve_box_qp(const Mat2& H, const Vec2& g, const Vec2& lo, const Vec2& hi) {
  BoxStep best;
  double best_val = kInf;
  constexpr double tol = 1e-12;
  for (int s0 = 0; s0 < 3; ++s0) {
    for (int s1 = 0; s1 < 3; ++s1) {
      const std::array<int, 2> st{s0, s1};
      Vec2 du = Vec2::Zero();
      std::array<bool, 2> is_free{st[0] == 0, st[1] == 0};
      for (int i = 0; i < 2; ++i)
        if (!is_free[static_cast<std::size_t>(i)]) du[i] = st[static_cast<std::size_t>(i)] == 1 ? lo[i] : hi[i];
      if (is_free[0] && is_free[1]) {
        du = -H.ldlt().solve(g);
      } else if (is_free[0]) {
        du[0] = -(g[0] + H(0, 1) * du[1]) / H(0, 0);
      } else if (is_free[1]) {
        du[1] = -(g[1] + H(1, 0) * du[0]) / H(1, 1);
      }
      bool feasible = true;
      for (int i = 0; i < 2; ++i)
        if (du[i] < lo[i] - tol || du[i] > hi[i] + tol) feasible = false;
      if (!feasible) continue;
      const double val = 0.5 * du.dot(H * du) + g.dot(du);
      if (val < best_val) {
        best_val = val;
        best.du = du;
        best.free = is_free;
      }
    }
  }
  return best;
}

struct BackwardPass {
  std::vector<Vec2> k;
  std::vector<Mat24> K;
  double dv1{0.0};  ///< model change along the step is alpha*dv1 + alpha^2*dv2
  double dv2{0.0};
};

inline bool backward_pass(const IlqrProblem& pb, const Trajectory& traj, double reg, BackwardPass& out) {
  const int T = traj.horizon();
  out.k.assign(static_cast<std::size_t>(T), Vec2::Zero());
  out.K.assign(static_cast<std::size_t>(T), Mat24::Zero());
  out.dv1 = 0.0;
  out.dv2 = 0.0;
  const StageModel terminal = stage_model(pb, traj, T);
  Vec4 vx = terminal.lx;
  Mat4 vxx = terminal.lxx;
  const auto& bounds = pb.model.bounds;
  std::vector<StageModel> models(static_cast<std::size_t>(T));
  std::vector<LinearizedDynamics> lins(static_cast<std::size_t>(T));
  for (int t = T - 1; t >= 0; --t) {
    const auto ts = static_cast<std::size_t>(t);
    models[ts] = stage_model(pb, traj, t);
    lins[ts] = linearize(traj.states[ts], traj.controls[ts], pb.model.dt);
    const StageModel& m = models[ts];
    const LinearizedDynamics& lin = lins[ts];
    const Vec4 qx = m.lx + lin.A.transpose() * vx;
    const Vec2 qu = m.lu + lin.B.transpose() * vx;
    const Mat4 qxx = m.lxx + lin.A.transpose() * vxx * lin.A;
    Mat2 quu = m.luu + lin.B.transpose() * vxx * lin.B;
    const Mat24 qux = lin.B.transpose() * vxx * lin.A;
    quu.diagonal().array() += reg;
    Eigen::LLT<Mat2> llt(quu);
    if (llt.info() != Eigen::Success) return false;

    Vec2 kff;
    Mat24 K = Mat24::Zero();
    if (bounds) {
      const Vec2 u = traj.controls[ts].vec();
      const Vec2 lo(bounds->a_min - u[0], bounds->omega_min - u[1]);
      const Vec2 hi(bounds->a_max - u[0], bounds->omega_max - u[1]);
      const BoxStep step = solve_box_qp(quu, qu, lo, hi);
      kff = step.du;
      if (step.free[0] && step.free[1]) {
        K = -llt.solve(qux);
      } else if (step.free[0]) {
        K.row(0) = -qux.row(0) / quu(0, 0);
      } else if (step.free[1]) {
        K.row(1) = -qux.row(1) / quu(1, 1);
      }
    } else {
      kff = -llt.solve(qu);
      K = -llt.solve(qux);
    }
    if (!kff.allFinite() || !K.allFinite()) return false;

    out.k[ts] = kff;
    out.K[ts] = K;
    vx = qx + K.transpose() * quu * kff + K.transpose() * qu + qux.transpose() * kff;
    vxx = qxx + K.transpose() * quu * K + K.transpose() * qux + qux.transpose() * K;
    vxx = 0.5 * (vxx + vxx.transpose()).eval();
  }

  // Roll the full step through the linearized dynamics and price it with the
  // unregularized local model, so the prediction is exact for every alpha.
  Vec4 dx = Vec4::Zero();
  for (int t = 0; t < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const StageModel& m = models[ts];
    const Vec2 du = out.k[ts] + out.K[ts] * dx;
    out.dv1 += m.lx.dot(dx) + m.lu.dot(du);
    out.dv2 += 0.5 * (dx.dot(m.lxx * dx) + du.dot(m.luu * du));
    dx = lins[ts].A * dx + lins[ts].B * du;
  }
  out.dv1 += terminal.lx.dot(dx);
  out.dv2 += 0.5 * dx.dot(terminal.lxx * dx);
  return true;
}

inline Trajectory forward_pass(const IlqrProblem& pb, const Trajectory& nominal, const BackwardPass& bp,
                               double alpha) {
  const int T = nominal.horizon();
  Trajectory out;
  out.states.reserve(static_cast<std::size_t>(T) + 1);
  out.controls.reserve(static_cast<std::size_t>(T));
  out.states.push_back(pb.x0);
  for (int t = 0; t < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const Vec4 dx = out.states[ts].vec() - nominal.states[ts].vec();
    Vec2 u = nominal.controls[ts].vec() + alpha * bp.k[ts] + bp.K[ts] * dx;
    AgentControl uc = AgentControl::from_vec(u);
    if (pb.model.bounds) uc = pb.model.bounds->clamp(uc);
    out.controls.push_back(uc);
    out.states.push_back(step(out.states[ts], uc, pb.model.dt));
  }
  return out;
}

struct IlqrRun {
  Trajectory trajectory;
  std::vector<FeedbackGain> gains;
  double cost{kInf};
};

// True when some stage lies within `band` of the hinge kink.
inline bool near_kink(const IlqrProblem& pb, const Trajectory& traj, double band) {
  for (const Trajectory* o : pb.obstacles)
    for (std::size_t k = 0; k < traj.states.size(); ++k)
      if (std::abs((traj.states[k].position() - o->states[k].position()).norm() - pb.w.d) < band) return true;
  return false;
}

inline IlqrRun run_ilqr(IlqrProblem pb, const Trajectory& init, const IlqrOptions& opts, int round,
                        std::vector<IlqrIteration>* trace) {
  IlqrRun run;
  run.trajectory = init;
  run.cost = trajectory_cost(pb, init);
  if (!std::isfinite(run.cost)) throw NonFiniteError("initial trajectory cost is not finite");

  double reg = opts.reg_init;
  BackwardPass bp;
  int accepted = 0;
  for (std::size_t level = 0; level < opts.hinge_bands.size(); ++level) {
    pb.band = opts.hinge_bands[level];
    if (level > 0) {
      if (pb.obstacles.empty() || !near_kink(pb, run.trajectory, opts.hinge_bands[level - 1])) break;
      reg = opts.reg_init;
    }
    for (int iter = 0; iter < opts.max_iters; ++iter) {
      if (!backward_pass(pb, run.trajectory, reg, bp)) {
        if (reg >= opts.reg_max) break;
        reg = std::min(reg * 10.0, opts.reg_max);
        continue;
      }
      if (-bp.dv1 <= 1e-12 * (1.0 + std::abs(run.cost))) break;  // stationary
      bool step_taken = false;
      for (double alpha : opts.line_search_alphas) {
        Trajectory cand = forward_pass(pb, run.trajectory, bp, alpha);
        const double c = trajectory_cost(pb, cand);
        if (!std::isfinite(c)) continue;
        if (c < run.cost) {
          const double rel = (run.cost - c) / std::max(std::abs(run.cost), 1e-12);
          run.trajectory = std::move(cand);
          run.cost = c;
          ++accepted;
          if (trace) trace->push_back({round, accepted, c, reg, alpha});
          reg = std::max(reg * 0.5, opts.reg_min);
          step_taken = true;
          if (rel < opts.cost_tolerance) iter = opts.max_iters;  // converged
          break;
        }
      }
      if (!step_taken) {
        if (reg >= opts.reg_max) break;
        reg = std::min(reg * 10.0, opts.reg_max);
      }
    }
  }
  for (const auto& s : run.trajectory.states)
    if (!s.finite()) throw NonFiniteError("iLQR produced a non-finite state");

  if (backward_pass(pb, run.trajectory, reg, bp))
    run.gains = bp.K;
  else
    run.gains.assign(static_cast<std::size_t>(run.trajectory.horizon()), FeedbackGain::Zero());
  return run;
}

}  // namespace detail

/// Optimizes one agent's controls for its surrogate cost: individual cost plus
/// hinge terms against `predecessors`.
///
/// Predecessors enter the cost lazily. Each round solves with the current active
/// set from the better of the initial guess and the previous round's plan; any
/// predecessor the plan comes within `w.d` of joins the set and the loop repeats.
/// The result is therefore a deterministic function of the initial guess and of
/// the predecessors that were ever touched: adding a predecessor that stays
/// farther than `w.d` from every recorded probe leaves the output bit-identical.
///
/// Throws NonFiniteError if the cost or states diverge.
inline SingleAgentResult solve_single_agent(const AgentState& x0, const AgentState& target,
                                            std::span<const Trajectory> predecessors, const CostWeights& w,
                                            const PlanningModel& model, const IlqrOptions& opts,
                                            std::span<const AgentControl> init = {}) {
  opts.validate();
  if (!x0.finite()) throw NonFiniteError("initial state is not finite");
  for (const auto& p : predecessors)
    if (p.horizon() != model.T) throw InvalidArgument("predecessor horizon differs from the planning horizon");

  std::vector<AgentControl> init_controls(static_cast<std::size_t>(model.T));
  if (!init.empty()) {
    for (std::size_t k = 0; k < init_controls.size() && k < init.size(); ++k) init_controls[k] = init[k];
  }
  const Trajectory init_traj = rollout(x0, init_controls, model.dt, model.bounds);

  detail::IlqrProblem pb{x0, target, w, model, {}};
  SingleAgentResult result;
  std::vector<bool> is_active(predecessors.size(), false);
  int round = 0;
  detail::IlqrRun run;
  for (;;) {
    Trajectory start = init_traj;
    if (round > 0 && detail::trajectory_cost(pb, run.trajectory) <= detail::trajectory_cost(pb, init_traj))
      start = run.trajectory;
    run = detail::run_ilqr(pb, start, opts, round, &result.trace);
    result.probes.push_back(positions(run.trajectory));

    bool added = false;
    for (std::size_t q = 0; q < predecessors.size(); ++q) {
      if (is_active[q]) continue;
      if (min_separation(run.trajectory, predecessors[q]) <= w.d) {
        is_active[q] = true;
        added = true;
      }
    }
    if (!added) break;
    pb.obstacles.clear();
    for (std::size_t q = 0; q < predecessors.size(); ++q)
      if (is_active[q]) pb.obstacles.push_back(&predecessors[q]);
    ++round;
  }

  for (std::size_t q = 0; q < predecessors.size(); ++q)
    if (is_active[q]) result.active.push_back(static_cast<int>(q));
  result.trajectory = run.trajectory;
  result.policy = Policy{run.trajectory, run.gains};
  result.cost = surrogate_total_cost(result.trajectory, predecessors, target, w);
  if (!std::isfinite(result.cost)) throw NonFiniteError("surrogate cost is not finite");
  return result;
}

}  // namespace bnp
