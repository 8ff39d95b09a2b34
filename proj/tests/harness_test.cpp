#include "bnp/harness.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace bnp;

namespace {

Scenario base() { return Scenario{}; }

}  // namespace

TEST(SampleScenario, SameSeedSameScenario) {
  EXPECT_EQ(sample_scenario(7, 4, base()), sample_scenario(7, 4, base()));
  EXPECT_NE(sample_scenario(7, 4, base()).starts, sample_scenario(8, 4, base()).starts);
}

TEST(SampleScenario, TwoAgentsWithoutJitterMeetHeadOn) {
  Scenario tmpl;
  tmpl.jitter = 0.0;
  const Scenario sc = sample_scenario(1, 2, tmpl);
  const Eigen::Vector2d a = sc.starts[0].position();
  const Eigen::Vector2d b = sc.starts[1].position();
  EXPECT_NEAR((a + b).norm(), 0.0, 1e-12);
  EXPECT_NEAR(a.norm(), sc.zone_radius, 1e-12);
  for (int i = 0; i < 2; ++i) {
    const auto& s = sc.starts[static_cast<std::size_t>(i)];
    // Heading points at the center, target is the antipode.
    const Eigen::Vector2d dir(std::cos(s.theta), std::sin(s.theta));
    EXPECT_NEAR(dir.dot(-s.position().normalized()), 1.0, 1e-12);
    EXPECT_NEAR((sc.targets[static_cast<std::size_t>(i)].position() + s.position()).norm(), 0.0, 1e-12);
    EXPECT_EQ(sc.targets[static_cast<std::size_t>(i)].v, 0.0);
  }
}

TEST(SampleScenario, StartsClearThePlanningMargin) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scenario sc = sample_scenario(seed, 6, base());
    EXPECT_NO_THROW(sc.validate());
    for (int i = 0; i < 6; ++i)
      for (int j = i + 1; j < 6; ++j)
        EXPECT_GT((sc.starts[static_cast<std::size_t>(i)].position() - sc.starts[static_cast<std::size_t>(j)].position()).norm(),
                  sc.d_plan);
  }
}

TEST(SampleScenario, ImpossiblePackingFails) {
  Scenario tmpl;
  tmpl.zone_radius = 0.3;
  EXPECT_THROW(sample_scenario(0, 12, tmpl), SamplingFailed);
  EXPECT_THROW(sample_scenario(0, 1, tmpl), InvalidArgument);
}

TEST(FcfsOrder, RecordedEntryTimes) {
  Scenario sc = sample_scenario(0, 3, base());
  const std::vector<double> entry{3, 1, 2};
  EXPECT_EQ(fcfs_order(sc.initial_state(), sc, entry).order(), (std::vector<int>{1, 2, 0}));
}

TEST(FcfsOrder, TiesBreakById) {
  Scenario sc = sample_scenario(0, 3, base());
  const std::vector<double> entry{0, 0, 0};
  EXPECT_EQ(fcfs_order(sc.initial_state(), sc, entry).order(), (std::vector<int>{0, 1, 2}));
}

TEST(FcfsOrder, OutsideAgentsByPredictedEntry) {
  Scenario sc;
  sc.N = 3;
  sc.starts = {{-5, 0, 1, 0}, {-4, 0, 1, 0}, {-10, 0, 1, 0}};
  sc.targets = sc.starts;
  const std::vector<double> entry{kInf, kInf, kInf};
  EXPECT_EQ(fcfs_order(sc.initial_state(), sc, entry).order(), (std::vector<int>{1, 0, 2}));
  EXPECT_NEAR(predicted_entry_time(sc.starts[1], sc), 1.5, 1e-12);
}

TEST(FcfsOrder, InsideBeforeOutside) {
  Scenario sc;
  sc.N = 2;
  sc.starts = {{-3, 0, 1, 0}, {0, 0, 0, 0}};
  sc.targets = sc.starts;
  const std::vector<double> entry{kInf, kInf};
  EXPECT_EQ(fcfs_order(sc.initial_state(), sc, entry).order(), (std::vector<int>{1, 0}));
}

TEST(PredictedEntryTime, NeverEnters) {
  Scenario sc;
  EXPECT_EQ(predicted_entry_time({-5, 0, 1, std::numbers::pi}, sc), kInf);
  EXPECT_EQ(predicted_entry_time({-5, 0, 0, 0}, sc), kInf);
  EXPECT_EQ(predicted_entry_time({0, 0, 1, 0}, sc), 0.0);
}

TEST(RunTrial, AgentAtTargetFinishesImmediately) {
  Scenario sc;
  sc.N = 1;
  sc.starts = {{1, 1, 0, 0}};
  sc.targets = sc.starts;
  TrialConfig cfg;
  cfg.N = 1;
  const auto r = run_trial(cfg, sc);
  EXPECT_EQ(r.metrics.closed_loop_cost, 0.0);
  EXPECT_EQ(r.metrics.group_time, 0.0);
  EXPECT_FALSE(r.metrics.timed_out);
  EXPECT_TRUE(r.steps.empty());
}

TEST(RunTrial, HeadOnPairArrivesWithoutCollision) {
  Scenario tmpl;
  tmpl.jitter = 0.0;
  const Scenario sc = sample_scenario(1, 2, tmpl);
  for (Planner p : {Planner::Bnp, Planner::Fcfs, Planner::Randomized}) {
    TrialConfig cfg;
    cfg.N = 2;
    cfg.planner = p;
    const auto r = run_trial(cfg, sc);
    EXPECT_FALSE(r.metrics.timed_out) << to_string(p);
    EXPECT_FALSE(r.metrics.collided) << to_string(p);
    EXPECT_GT(r.metrics.min_separation, sc.d_col);
    EXPECT_GT(r.metrics.group_time, 0.0);
    EXPECT_GT(r.metrics.closed_loop_cost, 0.0);
  }
}

TEST(RunTrial, Deterministic) {
  const Scenario sc = sample_scenario(5, 3, base());
  TrialConfig cfg;
  cfg.N = 3;
  cfg.seed = 5;
  for (Planner p : {Planner::Bnp, Planner::Randomized}) {
    cfg.planner = p;
    const auto a = run_trial(cfg, sc);
    const auto b = run_trial(cfg, sc);
    EXPECT_EQ(a.metrics.closed_loop_cost, b.metrics.closed_loop_cost);
    EXPECT_EQ(a.metrics.group_time, b.metrics.group_time);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (std::size_t k = 0; k < a.steps.size(); ++k) EXPECT_EQ(a.steps[k].controls, b.steps[k].controls);
  }
}

TEST(RunTrial, TimeoutIsReported) {
  const Scenario sc = sample_scenario(2, 2, base());
  TrialConfig cfg;
  cfg.N = 2;
  cfg.max_sim_time = 0.5;
  const auto r = run_trial(cfg, sc);
  EXPECT_TRUE(r.metrics.timed_out);
  EXPECT_EQ(r.metrics.group_time, 0.5);
  EXPECT_EQ(r.metrics.steps, 5);
}

TEST(RunTrial, BruteForcePlannerMatchesBnpOrders) {
  const Scenario sc = sample_scenario(4, 3, base());
  TrialConfig cfg;
  cfg.N = 3;
  cfg.planner = Planner::Bnp;
  cfg.verify_oracle = true;
  const auto r = run_trial(cfg, sc);
  ASSERT_TRUE(r.metrics.oracle_equal.has_value());
  EXPECT_TRUE(*r.metrics.oracle_equal);
}

TEST(MeanStd, Examples) {
  const std::vector<double> v{1, 3};
  const auto m = mean_std(v);
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  EXPECT_NEAR(m.std, std::sqrt(2.0), 1e-12);
  EXPECT_EQ(mean_std(std::vector<double>{4}).std, 0.0);
  EXPECT_THROW(mean_std(std::vector<double>{}), InvalidArgument);
}

TEST(Aggregate, NormalizesAndCountsRates) {
  std::vector<Metrics> t(2);
  t[0].closed_loop_cost = 10;
  t[0].group_time = 1;
  t[0].timed_out = true;
  t[1].closed_loop_cost = 30;
  t[1].group_time = 3;
  t[1].collided = true;
  t[1].nodes_explored_mean = 4;
  const auto row = aggregate("bnp", 4, t, 20.0);
  EXPECT_DOUBLE_EQ(row.cost_mean, 1.0);
  EXPECT_NEAR(row.cost_std, std::sqrt(2.0) / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(row.group_mean, 2.0);
  EXPECT_DOUBLE_EQ(row.timeout_rate, 50.0);
  EXPECT_DOUBLE_EQ(row.collision_rate, 50.0);
  EXPECT_DOUBLE_EQ(row.nodes_mean, 2.0);
  EXPECT_THROW(aggregate("bnp", 4, t, 0.0), InvalidArgument);
}

TEST(SignTest, Examples) {
  EXPECT_DOUBLE_EQ(sign_test_p(0, 10), 1.0);
  EXPECT_NEAR(sign_test_p(10, 10), std::pow(0.5, 10), 1e-15);
  EXPECT_NEAR(sign_test_p(15, 20), 0.020694732666015625, 1e-12);
  EXPECT_EQ(sign_test_p(0, 0), 1.0);
}

TEST(PlannerNames, RoundTrip) {
  for (Planner p : {Planner::Bnp, Planner::Fcfs, Planner::Randomized, Planner::BruteForce})
    EXPECT_EQ(parse_planner(to_string(p)), p);
  EXPECT_FALSE(parse_planner("nash").has_value());
}

TEST(BruteForceOrder, CountsAndSeparatedLanes) {
  Scenario sc;
  sc.N = 4;
  for (int i = 0; i < 4; ++i) {
    sc.starts.push_back({-1, 3.0 * i, 0.5, 0});
    sc.targets.push_back({1, 3.0 * i, 0, 0});
  }
  const auto bf = brute_force_order(sc, sc.initial_state());
  EXPECT_EQ(bf.permutations_evaluated, 24);
  // With no interactions every order has the same value.
  StpOracle oracle(sc, sc.initial_state(), StpOptions{});
  std::vector<int> order{0, 1, 2, 3};
  do {
    EXPECT_EQ(oracle(IncompletePermutation::complete(Permutation(order))).social_cost, bf.value);
  } while (std::next_permutation(order.begin(), order.end()));
}
