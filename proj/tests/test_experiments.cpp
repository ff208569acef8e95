#include <atomic>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "regmcts/experiments.hpp"

using namespace regmcts;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return RunConfig::from_ini_stream(in);
}

double cell(const CsvTable& t, std::size_t row, std::string_view col) {
  return std::stod(t.rows().at(row).at(t.column(col)));
}

}  // namespace

TEST(RunConfig, DefaultsAndOverrides) {
  const RunConfig d = parse("");
  EXPECT_EQ(d.seeds.size(), 20u);
  EXPECT_EQ(d.n_sim, 1000);
  EXPECT_EQ(d.variants.size(), 5u);
  const RunConfig c = parse(
      "; comment\nseeds = 3-5, 9\nn_sims = 2, 5\ndivergence = hellinger\nvariants = baseline, all\n"
      "normalize_for_solver = false\n");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 4, 5, 9}));
  EXPECT_EQ(c.n_sims, (std::vector<int>{2, 5}));
  EXPECT_EQ(c.divergence, DivergenceKind::kHellinger);
  EXPECT_EQ(c.variants, (std::vector<VariantFlags>{VariantFlags::baseline(), VariantFlags::all()}));
  EXPECT_FALSE(c.normalize_for_solver);
  EXPECT_TRUE(parse("n_sims =\n").n_sims.empty());
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(parse("colour = blue\n"), ConfigError);
  EXPECT_THROW(parse("n_sim = ten\n"), ConfigError);
  EXPECT_THROW(parse("n_sim = 0\n"), ConfigError);
  EXPECT_THROW(parse("seeds = 5-2\n"), ConfigError);
  EXPECT_THROW(parse("[track]\nn_sim = 5\n"), ConfigError);
  EXPECT_THROW(parse("divergence = tsallis\n"), ConfigError);
  EXPECT_THROW(parse("env = atari\n"), ConfigError);
  EXPECT_THROW(RunConfig::from_file("/nonexistent/config.ini"), ConfigError);
}

TEST(CsvTable, FormatsExactly) {
  CsvTable t({"a", "b", "c"});
  t.add(1, 0.1, std::string("x"));
  t.add(-2, 1e-300, true);
  EXPECT_EQ(t.str(), "a,b,c\n1,0.1,x\n-2,1e-300,1\n");
  EXPECT_THROW(t.add(1, 2), std::logic_error);
  EXPECT_THROW(t.write("/nonexistent/dir/out.csv"), std::runtime_error);
}

TEST(ParallelMap, OrderIndependentOfWorkers) {
  auto square = [](std::size_t i) { return i * i; };
  const auto one = parallel_map(100, 1, square);
  const auto many = parallel_map(100, 7, square);
  EXPECT_EQ(one, many);
  EXPECT_EQ(many[9], 81u);
  EXPECT_TRUE(parallel_map(0, 4, square).empty());
}

TEST(ParallelMap, RethrowsLowestFailingIndex) {
  try {
    parallel_map(50, 4, [](std::size_t i) -> int {
      if (i == 13 || i == 40) throw std::runtime_error(std::to_string(i));
      return 0;
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "13");
  }
}

TEST(ParallelMap, EnvironmentFallback) {
  ::setenv("REGMCTS_WORKERS", "3", 1);
  EXPECT_EQ(default_workers(), 3u);
  ::setenv("REGMCTS_WORKERS", "zero", 1);
  EXPECT_THROW(default_workers(), std::invalid_argument);
  ::unsetenv("REGMCTS_WORKERS");
  EXPECT_GE(default_workers(), 1u);
}

TEST(Track, SingleArmHasNoDistance) {
  RunConfig cfg;
  cfg.n_sim = 50;
  const std::vector<double> q{0.4};
  const CsvTable t = track_instance(q, ActionDistribution::uniform(1), cfg, 0);
  ASSERT_EQ(t.rows().size(), 50u);
  for (std::size_t r = 0; r < 50; ++r) {
    EXPECT_EQ(cell(t, r, "l1_pibar"), 0.0);
    EXPECT_EQ(cell(t, r, "linf_greedy"), 0.0);
  }
}

TEST(Track, ConstantQStaysWithinBoundOfUniform) {
  RunConfig cfg;
  cfg.n_sim = 500;
  const std::vector<double> q(6, 0.5);
  const CsvTable t = track_instance(q, ActionDistribution::uniform(6), cfg, 0);
  for (std::size_t r = 0; r < t.rows().size(); ++r) {
    const double step = cell(t, r, "t");
    EXPECT_LE(cell(t, r, "linf_pibar"), tracking_bound(6, static_cast<std::int64_t>(step)) + 1e-12);
    EXPECT_GE(cell(t, r, "l1_pibar"), 0.0);
    EXPECT_LE(cell(t, r, "l1_greedy"), 2.0);
  }
}

TEST(Track, StepsIncreasePerSeed) {
  RunConfig cfg;
  cfg.seeds = {0, 1};
  cfg.n_sim = 20;
  const auto out = cmd_track(cfg, 5, 2);
  ASSERT_EQ(out.table.rows().size(), 40u);
  for (std::size_t r = 1; r < 20; ++r) EXPECT_EQ(cell(out.table, r, "t"), cell(out.table, r - 1, "t") + 1);
}

TEST(Bound, SingleActionIsExact) {
  const BoundRun r = bound_run(ActionDistribution::uniform(1), 1000, "greedy");
  EXPECT_EQ(r.bound_violations, 0);
  EXPECT_EQ(r.max_ratio, 0.0);
}

TEST(Bound, UniformTargetGreedyHolds) {
  const BoundRun r = bound_run(ActionDistribution::uniform(4), 10000, "greedy");
  EXPECT_EQ(r.bound_violations, 0);
  EXPECT_EQ(r.assumption_violations, 0);
  EXPECT_LE(r.max_ratio, 1.0);
}

TEST(Bound, ViolatingSelectorIsReported) {
  const BoundRun r = bound_run(ActionDistribution::from_weights({0.7, 0.2, 0.1}), 500, "violating");
  EXPECT_GT(r.assumption_violations, 0);
  EXPECT_GT(r.bound_violations, 0);
  RunConfig cfg;
  cfg.selector = "violating";
  cfg.seeds = {0};
  cfg.actions = {3};
  cfg.rounds = 200;
  // Violations under a broken assumption are reported, not failed.
  const auto out = cmd_bound(cfg, 0, 1);
  EXPECT_TRUE(out.ok);
  EXPECT_GT(cell(out.table, 0, "bound_violations"), 0.0);
}

TEST(Bound, HalfIntegerTargetsAreTight) {
  // pi(a) = (1/2 + k_a) / (|A| + t) cannot be matched by (1 + n_a) / (|A| + t).
  const std::size_t actions = 4;
  for (std::int64_t t = 2; t < 200; t += 2) {
    const double denom = static_cast<double>(actions) + static_cast<double>(t);
    std::vector<double> w(actions);
    const std::int64_t total_k = static_cast<std::int64_t>(actions) / 2 + t;  // sum of k_a
    std::int64_t left = total_k;
    for (std::size_t a = 0; a < actions; ++a) {
      const std::int64_t k = a + 1 < actions ? total_k / static_cast<std::int64_t>(actions) : left;
      left -= k;
      w[a] = (0.5 + static_cast<double>(k)) / denom;
    }
    const auto pi = ActionDistribution::from_weights(w);
    // Every integer count vector summing to t misses each coordinate by >= 1/2.
    Rng rng(static_cast<std::uint64_t>(t));
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::int64_t> n(actions, 0);
      for (std::int64_t i = 0; i < t; ++i) n[rng.index(actions)] += 1;
      double err = 0.0;
      for (std::size_t a = 0; a < actions; ++a) {
        err = std::max(err, std::abs(pi[a] - (1.0 + static_cast<double>(n[a])) / denom));
      }
      EXPECT_GE(err, 0.5 / denom - 1e-15);
    }
    const BoundRun run = bound_run(pi, static_cast<int>(t), "greedy");
    EXPECT_EQ(run.bound_violations, 0);
  }
}

TEST(Props, SeededRunIsReproducibleAndClean) {
  RunConfig cfg;
  cfg.instances = 300;
  const auto a = cmd_props(cfg, 42, 1);
  const auto b = cmd_props(cfg, 42, 3);
  EXPECT_EQ(a.table.str(), b.table.str());
  EXPECT_TRUE(a.ok);
  for (std::size_t r = 0; r < a.table.rows().size(); ++r) {
    EXPECT_EQ(cell(a.table, r, "failed"), 0.0) << a.table.rows()[r][0];
    EXPECT_EQ(cell(a.table, r, "instances"), 300.0);
  }
}

TEST(Props, CountGradientMatchesSelectionOnKnownInstance) {
  SelectionInstance inst;
  inst.q = {0.9, 0.2, 0.5};
  inst.prior = ActionDistribution::prior({0.2, 0.5, 0.3});
  inst.n = {6, 1, 2};
  for (DivergenceKind k : kAllDivergenceKinds) {
    EXPECT_EQ(check_property({"count_gradient_fd", k}, inst, 1.25), Verdict::kPass) << to_string(k);
    EXPECT_EQ(check_property({"f_argmax_identity", k}, inst, 1.25), Verdict::kPass) << to_string(k);
  }
}

TEST(Sweep, EmptyBudgetListIsHeaderOnly) {
  RunConfig cfg;
  cfg.n_sims.clear();
  EXPECT_EQ(cmd_sweep(cfg, 0, 2).table.str(), "variant,n_sim,seed,episode,return,steps,mean_kl\n");
}

TEST(Sweep, WorkerCountDoesNotChangeOutput) {
  RunConfig cfg;
  cfg.seeds = {0, 1};
  cfg.n_sims = {3};
  cfg.episodes = 10;
  for (const char* env : {"chain", "bandit", "factorized"}) {
    cfg.env = env;
    EXPECT_EQ(cmd_sweep(cfg, 9, 1).table.str(), cmd_sweep(cfg, 9, 4).table.str()) << env;
  }
}

TEST(Sweep, SummaryUsesFinalEpisodes) {
  CsvTable t(kSweepHeader);
  for (int seed = 0; seed < 2; ++seed) {
    for (int e = 0; e < 10; ++e) t.add("all", 5, seed, e, e >= 8 ? 1.0 + seed : 0.0, 1, 0.0);
  }
  const auto s = summarize_sweep(t, 2);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s[0].mean, 1.5);
  EXPECT_DOUBLE_EQ(s[0].stderr_, 0.5);
}

TEST(Solve, ReportIsFullPrecision) {
  const std::vector<double> q{1.0, 0.0};
  const auto r = solve_one_shot(q, ActionDistribution::uniform(2), 1.0, DivergenceKind::kReverseKL,
                                SolverConfig{});
  const std::string text = format_solve_report(r);
  EXPECT_NE(text.find("pi_bar=0.7071067811"), std::string::npos) << text;
  EXPECT_NE(text.find("kkt_residual="), std::string::npos);
  EXPECT_LE(r.kkt, 1e-6);
}
