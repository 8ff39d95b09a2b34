// Command-line driver: closed-loop trials, open-loop solves and sweeps.
#include "bnp/branch_and_play.hpp"
#include "bnp/harness.hpp"
#include "bnp/scenario_io.hpp"
#include "bnp/trace.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string scenario_path;
  std::optional<int> n;
  std::optional<double> dt;
  std::optional<int> horizon;
  std::optional<int> replan_every;
  std::optional<double> timeout;
  std::string out = "runs";
  std::string exploration = "best";
  bool no_pairwise = false;
  bool no_bound = false;
  bool no_admissibility = false;
  bool verify_oracle = false;
  int threads = 1;
};

void add_common(CLI::App* app, CommonArgs& a) {
  app->add_option("--scenario", a.scenario_path, "scenario config file");
  app->add_option("--n", a.n, "number of agents (resamples the scenario)")->check(CLI::PositiveNumber);
  app->add_option("--dt", a.dt, "time step");
  app->add_option("--horizon", a.horizon, "planning horizon in steps");
  app->add_option("--replan-every", a.replan_every, "steps between order recomputations");
  app->add_option("--timeout", a.timeout, "simulated time limit");
  app->add_option("--out", a.out, "output directory");
  app->add_option("--exploration", a.exploration, "best | depth")->check(CLI::IsMember({"best", "depth"}));
  app->add_flag("--no-pairwise-prune", a.no_pairwise, "disable pairwise-collision pruning");
  app->add_flag("--no-bound-prune", a.no_bound, "disable bound pruning");
  app->add_flag("--no-admissibility", a.no_admissibility, "do not enforce monotone bounds");
  app->add_flag("--verify-oracle", a.verify_oracle, "compare every B&P replan with brute force");
  app->add_option("--threads", a.threads, "parallel trials")->check(CLI::PositiveNumber);
}

bnp::Scenario load_template(const CommonArgs& a) {
  bnp::Scenario sc;
  if (!a.scenario_path.empty()) {
    if (!fs::exists(a.scenario_path)) throw ConfigError("scenario file not found: " + a.scenario_path);
    sc = bnp::parse_scenario(a.scenario_path);
  }
  if (a.dt) sc.dt = *a.dt;
  if (a.horizon) sc.T = *a.horizon;
  if (a.timeout) sc.timeout = *a.timeout;
  return sc;
}

bnp::TrialConfig trial_config(const CommonArgs& a, const bnp::Scenario& sc, bnp::Planner planner, std::uint64_t seed) {
  bnp::TrialConfig cfg;
  cfg.seed = seed;
  cfg.N = sc.N;
  cfg.planner = planner;
  cfg.replan_every = a.replan_every.value_or(5);
  cfg.sim_dt = sc.dt;
  cfg.max_sim_time = sc.timeout;
  cfg.bnp.exploration = a.exploration == "depth" ? bnp::Exploration::DepthFirst : bnp::Exploration::BestFirst;
  cfg.bnp.pairwise_pruning = !a.no_pairwise;
  cfg.bnp.bound_pruning = !a.no_bound;
  cfg.bnp.enforce_admissibility = !a.no_admissibility;
  cfg.verify_oracle = a.verify_oracle;
  cfg.validate();
  return cfg;
}

bnp::Planner planner_of(const std::string& s) {
  auto p = bnp::parse_planner(s);
  if (!p) throw ConfigError("unknown planner '" + s + "' (bnp|fcfs|random|brute)");
  return *p;
}

void check_cap(bnp::Planner p, int n) {
  if ((p == bnp::Planner::BruteForce) && n > bnp::kBruteForceCap)
    throw bnp::CapExceeded("CapExceeded: brute force supports N <= " + std::to_string(bnp::kBruteForceCap) +
                           ", got N = " + std::to_string(n));
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw ConfigError("cannot write " + p.string());
  f.precision(10);
  return f;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  CommonArgs common;
  std::string planner = "bnp";
  std::optional<std::uint64_t> seed;
  bool open_loop = false;
};

int cmd_run(const RunArgs& r) {
  const bnp::Planner planner = planner_of(r.planner);
  bnp::Scenario sc = load_template(r.common);
  const int n = r.common.n.value_or(sc.N);
  check_cap(planner, n);
  if (r.seed || r.common.n || r.common.scenario_path.empty()) sc = bnp::sample_scenario(r.seed.value_or(sc.seed), n, sc);
  sc.validate();
  const bnp::TrialConfig cfg = trial_config(r.common, sc, planner, sc.seed);
  fs::create_directories(r.common.out);

  if (r.open_loop) {
    const bnp::JointState x0 = sc.initial_state();
    bnp::Permutation perm;
    double value = bnp::kInf;
    bool infeasible = false;
    if (planner == bnp::Planner::Bnp) {
      const bnp::SearchResult res = bnp::branch_and_play(sc, x0, cfg.bnp);
      infeasible = res.status == bnp::SearchStatus::Infeasible;
      perm = res.permutation;
      value = res.value;
      std::cout << "status: " << bnp::to_string(res.status) << "  nodes_explored: " << res.stats.nodes_explored
                << "\n";
      auto f = open_out(fs::path(r.common.out) / "nodes.csv");
      f << "seq,prefix,rho,raw_value,bound,event\n";
      for (const auto& t : res.trace)
        f << t.seq << ",\"" << t.prefix << "\"," << t.rho << ',' << t.raw_value << ',' << t.bound << ',' << t.event
          << "\n";
    } else if (planner == bnp::Planner::BruteForce) {
      const bnp::BruteForceResult res = bnp::brute_force_order(sc, x0, cfg.bnp);
      infeasible = !std::isfinite(res.value);
      perm = res.permutation;
      value = res.value;
    } else {
      if (planner == bnp::Planner::Fcfs) {
        std::vector<double> entry(static_cast<std::size_t>(sc.N), bnp::kInf);
        perm = bnp::fcfs_order(x0, sc, entry);
      } else {
        std::vector<int> order(static_cast<std::size_t>(sc.N));
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(sc.seed);
        std::shuffle(order.begin(), order.end(), rng);
        perm = bnp::Permutation(order);
      }
      const bnp::SubgameSolution sol = bnp::solve_stp(perm, x0, sc);
      value = sol.social_cost;
      infeasible = !sol.feasible;
    }
    if (infeasible) {
      std::cout << "Infeasible: no collision-free order of play found\n";
      return kExitInfeasible;
    }
    std::cout << "permutation: " << perm.str() << "\nsocial_cost: " << value << "\n";
    return kExitOk;
  }

  const bnp::TrialResult res = bnp::run_trial(cfg, sc);
  {
    auto f = open_out(fs::path(r.common.out) / "trace.jsonl");
    bnp::write_trial_trace(f, cfg, res);
  }
  {
    auto f = open_out(fs::path(r.common.out) / "summary.csv");
    f << bnp::kSummaryHeader << "\n";
    bnp::write_summary_row(f, bnp::aggregate(r.planner, sc.N, std::span(&res.metrics, 1)));
  }
  const auto& m = res.metrics;
  if (!res.steps.empty()) {
    std::string p = "(";
    for (std::size_t i = 0; i < res.steps.front().permutation.size(); ++i)
      p += (i ? "," : "") + std::to_string(res.steps.front().permutation[i]);
    std::cout << "permutation: " << p << ")\n";
  }
  std::cout << "social_cost: " << m.closed_loop_cost << "\ngroup_time: " << m.group_time
            << "\ntimed_out: " << (m.timed_out ? "yes" : "no") << "\nmin_separation: " << m.min_separation
            << "\nfilter_failed_steps: " << m.filter_failed_steps << "\n";
  if (m.oracle_equal) std::cout << "oracle_equal: " << (*m.oracle_equal ? "true" : "false") << "\n";
  if (m.infeasible_replans > 0) {
    std::cout << "Infeasible: " << m.infeasible_replans << " replanning steps found no feasible order\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  CommonArgs common;
  std::string planners = "bnp,fcfs,random";
  std::vector<int> ns{4};
  int seeds = 20;
  std::uint64_t seed_start = 0;
};

int cmd_sweep(const SweepArgs& s) {
  std::vector<std::string> names;
  std::stringstream list(s.planners);
  for (std::string p; std::getline(list, p, ',');)
    if (!p.empty()) names.push_back(p);
  if (names.empty()) throw ConfigError("planner list is empty");
  if (s.ns.empty()) throw ConfigError("N list is empty");
  if (s.seeds < 1) throw ConfigError("--seeds must be >= 1");
  std::vector<bnp::Planner> planners;
  for (const auto& p : names) planners.push_back(planner_of(p));
  for (auto p : planners)
    for (int n : s.ns) check_cap(p, n);
  const bnp::Scenario tmpl = load_template(s.common);
  fs::create_directories(s.common.out);

  struct Job {
    std::size_t planner;
    int n;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < planners.size(); ++p)
    for (int n : s.ns)
      for (int k = 0; k < s.seeds; ++k) jobs.push_back({p, n, s.seed_start + static_cast<std::uint64_t>(k)});

  std::vector<bnp::Metrics> metrics(jobs.size());
  std::vector<std::vector<std::int64_t>> node_counts(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      const Job& job = jobs[j];
      try {
        const bnp::Scenario sc = bnp::sample_scenario(job.seed, job.n, tmpl);
        const bnp::TrialConfig cfg = trial_config(s.common, sc, planners[job.planner], job.seed);
        const bnp::TrialResult r = bnp::run_trial(cfg, sc);
        metrics[j] = r.metrics;
        for (const auto& st : r.steps)
          if (st.replanned) node_counts[j].push_back(st.nodes_explored);
      } catch (const std::exception& e) {
        errors[j] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < s.common.threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  auto trials = open_out(fs::path(s.common.out) / "trials.csv");
  auto nodes = open_out(fs::path(s.common.out) / "nodes.csv");
  auto summary = open_out(fs::path(s.common.out) / "summary.csv");
  auto summary_safe = open_out(fs::path(s.common.out) / "summary_safe.csv");
  trials << bnp::trials_header(s.common.verify_oracle) << ",error\n";
  nodes << "planner,N,seed,replan,nodes_explored\n";
  summary << bnp::kSummaryHeader << "\n";
  summary_safe << bnp::kSummaryHeader << "\n";

  for (int n : s.ns) {
    // Normalizer: mean raw FCFS cost over the same seeds when FCFS was run.
    double normalizer = 1.0;
    for (std::size_t p = 0; p < planners.size(); ++p) {
      if (planners[p] != bnp::Planner::Fcfs) continue;
      std::vector<double> raw;
      for (std::size_t j = 0; j < jobs.size(); ++j)
        if (jobs[j].planner == p && jobs[j].n == n && errors[j].empty()) raw.push_back(metrics[j].closed_loop_cost);
      if (!raw.empty()) normalizer = bnp::mean_std(raw).mean;
    }
    for (std::size_t p = 0; p < planners.size(); ++p) {
      std::vector<bnp::Metrics> all;
      std::vector<bnp::Metrics> safe;
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (jobs[j].planner != p || jobs[j].n != n) continue;
        bnp::write_trial_row(trials, names[p], n, jobs[j].seed, metrics[j], s.common.verify_oracle);
        trials << ",\"" << errors[j] << "\"\n";
        for (std::size_t r = 0; r < node_counts[j].size(); ++r)
          nodes << names[p] << ',' << n << ',' << jobs[j].seed << ',' << r << ',' << node_counts[j][r] << "\n";
        if (!errors[j].empty()) continue;
        all.push_back(metrics[j]);
        if (!metrics[j].filter_failed) safe.push_back(metrics[j]);
      }
      if (!all.empty()) bnp::write_summary_row(summary, bnp::aggregate(names[p], n, all, normalizer));
      if (!safe.empty()) bnp::write_summary_row(summary_safe, bnp::aggregate(names[p], n, safe, normalizer));
      if (!all.empty()) {
        const auto row = bnp::aggregate(names[p], n, all, normalizer);
        std::cout << row.planner << " N=" << n << " cost " << row.cost_mean << " +- " << row.cost_std << "  group "
                  << row.group_mean << " +- " << row.group_std << "  timeout " << row.timeout_rate << "%  collision "
                  << row.collision_rate << "%  nodes " << row.nodes_mean << "\n";
      }
    }
  }
  for (std::size_t j = 0; j < jobs.size(); ++j)
    if (!errors[j].empty()) std::cerr << "trial " << jobs[j].seed << " failed: " << errors[j] << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Order-of-play search for multi-agent trajectory games"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "run one closed-loop trial (or one open-loop solve)");
  add_common(run_cmd, run.common);
  run_cmd->add_option("--planner", run.planner, "bnp | fcfs | random | brute");
  run_cmd->add_option("--seed", run.seed, "scenario and trial seed");
  run_cmd->add_flag("--open-loop", run.open_loop, "solve once from the initial state and exit");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "run every (planner, N, seed) combination");
  add_common(sweep_cmd, sweep.common);
  sweep_cmd->add_option("--planners", sweep.planners, "comma-separated planners");
  sweep_cmd->add_option("--ns", sweep.ns, "comma-separated agent counts")->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep.seeds, "number of seeds");
  sweep_cmd->add_option("--seed-start", sweep.seed_start, "first seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    return cmd_sweep(sweep);
  } catch (const bnp::CapExceeded& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bnp::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bnp::SamplingFailed& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}
