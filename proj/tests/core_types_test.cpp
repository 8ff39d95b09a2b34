#include "bnp/core_types.hpp"
#include "bnp/dynamics.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace bnp;

namespace {

IncompletePermutation prefix(std::vector<int> assigned, int n) {
  return IncompletePermutation(std::move(assigned), n, UnassignedMode::AvoidAssigned);
}

}  // namespace

TEST(Descendants, AppendsEachUnassignedPlayer) {
  // ids 0-based: (1|{0,2})
  const auto kids = descendants(prefix({1}, 3));
  ASSERT_EQ(kids.size(), 2u);
  EXPECT_EQ(kids[0].assigned(), (std::vector<int>{1, 0}));
  EXPECT_EQ(kids[0].unassigned(), (std::vector<int>{2}));
  EXPECT_EQ(kids[1].assigned(), (std::vector<int>{1, 2}));
  EXPECT_EQ(kids[1].unassigned(), (std::vector<int>{0}));
}

TEST(Descendants, SinglePlayerRootHasOneChild) {
  const auto kids = descendants(prefix({}, 1));
  ASSERT_EQ(kids.size(), 1u);
  EXPECT_EQ(kids[0].assigned(), (std::vector<int>{0}));
  EXPECT_TRUE(kids[0].unassigned().empty());
}

TEST(Descendants, CountIsNumberOfUnassigned) { EXPECT_EQ(descendants(prefix({0}, 4)).size(), 3u); }

TEST(Descendants, CompleteInputThrows) { EXPECT_THROW(descendants(prefix({0, 1, 2}, 3)), InvalidArgument); }

TEST(Descendants, ChildrenKeepMode) {
  const auto root = IncompletePermutation::root(3, UnassignedMode::Unaware);
  for (const auto& k : descendants(root)) EXPECT_EQ(k.mode(), UnassignedMode::Unaware);
}

TEST(IsComplete, Examples) {
  EXPECT_TRUE(is_complete(prefix({0, 1, 2}, 3)));
  EXPECT_FALSE(is_complete(prefix({0}, 3)));
  EXPECT_FALSE(is_complete(prefix({}, 1)));
}

TEST(Descendants, RepeatedExpansionEnumeratesAllCompletions) {
  for (int n = 1; n <= 5; ++n) {
    for (int rho = 0; rho < n; ++rho) {
      std::vector<int> pre(static_cast<std::size_t>(rho));
      std::iota(pre.begin(), pre.end(), 0);
      std::vector<IncompletePermutation> layer{prefix(pre, n)};
      for (int step = rho; step < n; ++step) {
        std::vector<IncompletePermutation> next;
        for (const auto& p : layer)
          for (auto& c : descendants(p)) next.push_back(std::move(c));
        layer = std::move(next);
      }
      std::set<std::vector<int>> distinct;
      for (const auto& p : layer) {
        ASSERT_TRUE(p.is_complete());
        const Permutation perm = p.completion();  // validates the bijection
        distinct.insert(perm.order());
      }
      std::int64_t fact = 1;
      for (int k = 2; k <= n - rho; ++k) fact *= k;
      EXPECT_EQ(static_cast<std::int64_t>(layer.size()), fact);
      EXPECT_EQ(distinct.size(), layer.size());
    }
  }
}

TEST(Permutation, RejectsNonBijections) {
  EXPECT_THROW(Permutation({0, 0, 1}), InvalidArgument);
  EXPECT_THROW(Permutation({1, 2, 3}), InvalidArgument);
  EXPECT_NO_THROW(Permutation({2, 0, 1}));
}

TEST(IncompletePermutation, RejectsDuplicatePrefix) {
  EXPECT_THROW(prefix({1, 1}, 3), InvalidArgument);
  EXPECT_THROW(prefix({3}, 3), InvalidArgument);
  EXPECT_THROW(prefix({0}, 3).extended(0, UnassignedMode::AvoidAssigned), InvalidArgument);
}

TEST(IncompletePermutation, CompletionAppendsAscending) {
  EXPECT_EQ(prefix({2}, 4).completion().order(), (std::vector<int>{2, 0, 1, 3}));
  EXPECT_EQ(prefix({2, 0}, 4).str(), "(2,0|1,3)");
}

TEST(Trajectory, RerolledControlsReproduceStates) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<AgentControl> controls;
  for (int k = 0; k < 30; ++k) controls.push_back({u(rng), u(rng)});
  const Trajectory t = rollout({0.3, -0.2, 1.0, 0.4}, controls, 0.1, ControlBounds{});
  for (std::size_t k = 0; k < controls.size(); ++k) {
    const AgentState next = step(t.states[k], t.controls[k], 0.1);
    EXPECT_NEAR(next.px, t.states[k + 1].px, 1e-9);
    EXPECT_NEAR(next.py, t.states[k + 1].py, 1e-9);
    EXPECT_NEAR(next.v, t.states[k + 1].v, 1e-9);
    EXPECT_NEAR(next.theta, t.states[k + 1].theta, 1e-9);
  }
}

TEST(Scenario, ValidateChecksMargins) {
  Scenario sc;
  sc.N = 1;
  sc.starts = {{0, 0, 0, 0}};
  sc.targets = {{1, 0, 0, 0}};
  EXPECT_NO_THROW(sc.validate());
  sc.d_plan = 0.1;
  EXPECT_THROW(sc.validate(), InvalidArgument);
  sc.d_plan = 0.4;
  sc.T = 0;
  EXPECT_THROW(sc.validate(), InvalidArgument);
}
