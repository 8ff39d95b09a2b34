#include "bnp/dynamics.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace bnp;

TEST(Step, StraightLine) {
  const AgentState s = step({0, 0, 1, 0}, {0, 0}, 0.1);
  EXPECT_DOUBLE_EQ(s.px, 0.1);
  EXPECT_DOUBLE_EQ(s.py, 0.0);
  EXPECT_DOUBLE_EQ(s.v, 1.0);
  EXPECT_DOUBLE_EQ(s.theta, 0.0);
}

TEST(Step, HeadingPlusY) {
  const AgentState s = step({0, 0, 1, std::numbers::pi / 2}, {0, 0}, 0.1);
  EXPECT_NEAR(s.px, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(s.py, 0.1);
  EXPECT_DOUBLE_EQ(s.v, 1.0);
  EXPECT_DOUBLE_EQ(s.theta, std::numbers::pi / 2);
}

TEST(Step, DirectEuler) {
  const AgentState s = step({0, 0, 2, 0}, {1, 0.5}, 0.1);
  EXPECT_DOUBLE_EQ(s.px, 0.2);
  EXPECT_DOUBLE_EQ(s.py, 0.0);
  EXPECT_DOUBLE_EQ(s.v, 2.1);
  EXPECT_DOUBLE_EQ(s.theta, 0.05);
}

TEST(Step, ClampsBeforeIntegration) {
  const AgentState s = step({0, 0, 0, 0}, {10, -10}, 0.1, ControlBounds{});
  EXPECT_DOUBLE_EQ(s.v, 0.2);
  EXPECT_DOUBLE_EQ(s.theta, -0.15);
}

TEST(Linearize, SpeedColumnAtZeroHeading) {
  const auto lin = linearize({0.5, -1, 1, 0}, {0, 0}, 0.1);
  EXPECT_DOUBLE_EQ(lin.A(0, 2), 0.1);
  EXPECT_DOUBLE_EQ(lin.A(0, 3), 0.0);
}

TEST(Linearize, HeadingColumnAtQuarterTurn) {
  const auto lin = linearize({0, 0, 1, std::numbers::pi / 2}, {0, 0}, 0.1);
  EXPECT_DOUBLE_EQ(lin.A(0, 3), -0.1);
}

TEST(Linearize, ControlStructure) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int k = 0; k < 20; ++k) {
    const auto lin = linearize({u(rng), u(rng), u(rng), u(rng)}, {u(rng), u(rng)}, 0.1);
    EXPECT_DOUBLE_EQ(lin.B(2, 0), 0.1);
    EXPECT_DOUBLE_EQ(lin.B(3, 1), 0.1);
    EXPECT_DOUBLE_EQ(lin.B(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(lin.B(1, 1), 0.0);
  }
}

TEST(Linearize, MatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3, 3);
  const double dt = 0.1;
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const AgentState s{u(rng), u(rng), u(rng), u(rng)};
    const AgentControl c{u(rng), u(rng)};
    const auto lin = linearize(s, c, dt);
    for (int col = 0; col < 4; ++col) {
      Eigen::Vector4d e = Eigen::Vector4d::Zero();
      e[col] = h;
      const Eigen::Vector4d fd = (step(AgentState::from_vec(s.vec() + e), c, dt).vec() -
                                  step(AgentState::from_vec(s.vec() - e), c, dt).vec()) /
                                 (2 * h);
      for (int row = 0; row < 4; ++row)
        EXPECT_LE(std::abs(fd[row] - lin.A(row, col)), 1e-5 * std::max(1.0, std::abs(lin.A(row, col))));
    }
    for (int col = 0; col < 2; ++col) {
      Eigen::Vector2d e = Eigen::Vector2d::Zero();
      e[col] = h;
      const Eigen::Vector4d fd = (step(s, AgentControl::from_vec(c.vec() + e), dt).vec() -
                                  step(s, AgentControl::from_vec(c.vec() - e), dt).vec()) /
                                 (2 * h);
      for (int row = 0; row < 4; ++row)
        EXPECT_LE(std::abs(fd[row] - lin.B(row, col)), 1e-5 * std::max(1.0, std::abs(lin.B(row, col))));
    }
  }
}

TEST(Rollout, ZeroControlsFromRestIsFixedPoint) {
  const std::vector<AgentControl> zeros(8);
  const Trajectory t = rollout({0, 0, 0, 0}, zeros, 0.1);
  for (const auto& s : t.states) EXPECT_EQ(s, (AgentState{0, 0, 0, 0}));
  EXPECT_EQ(t.horizon(), 8);
}

TEST(Rollout, ConstantSpeed) {
  const std::vector<AgentControl> zeros(10);
  const Trajectory t = rollout({0, 0, 1, 0}, zeros, 0.1);
  EXPECT_NEAR(t.states.back().px, 1.0, 1e-12);
}

TEST(Rollout, EmptyControlsThrow) {
  EXPECT_THROW(rollout({0, 0, 0, 0}, std::vector<AgentControl>{}, 0.1), InvalidArgument);
}

TEST(Rollout, MatchesIteratedStep) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<AgentControl> controls;
  for (int k = 0; k < 25; ++k) controls.push_back({u(rng), u(rng)});
  const Trajectory t = rollout({1, 2, 0.5, 0.3}, controls, 0.1);
  AgentState s{1, 2, 0.5, 0.3};
  for (std::size_t k = 0; k < controls.size(); ++k) {
    s = step(s, controls[k], 0.1);
    EXPECT_EQ(s, t.states[k + 1]);
  }
}

TEST(Rollout, RotationalEquivariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  const std::vector<AgentControl> zeros(15);
  for (int trial = 0; trial < 20; ++trial) {
    const AgentState s{u(rng), u(rng), u(rng), u(rng)};
    const double phi = u(rng);
    const Eigen::Rotation2Dd R(phi);
    const Eigen::Vector2d p = R * s.position();
    const Trajectory a = rollout(s, zeros, 0.1);
    const Trajectory b = rollout({p.x(), p.y(), s.v, s.theta + phi}, zeros, 0.1);
    for (int k = 0; k <= a.horizon(); ++k) EXPECT_LE((R * a.position(k) - b.position(k)).norm(), 1e-9);
  }
}

TEST(Step, HeadingIsTwoPiPeriodic) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const AgentState s{u(rng), u(rng), u(rng), u(rng)};
    AgentState s2 = s;
    s2.theta += 2 * std::numbers::pi;
    const AgentControl c{u(rng), u(rng)};
    EXPECT_LE((step(s, c, 0.1).position() - step(s2, c, 0.1).position()).norm(), 1e-9);
  }
}
