// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "oracle.hpp"
#include "regmcts/regmcts.hpp"

using namespace regmcts;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::uint64_t kBase = 20240611;
constexpr double kC = 1.25;

PropertyTally tally_property(const PropertySpec& spec, int instances, unsigned workers) {
  constexpr int kChunks = 16;
  const auto parts = parallel_map(kChunks, workers, [&](std::size_t i) {
    const int count = instances / kChunks + (static_cast<int>(i) < instances % kChunks ? 1 : 0);
    return run_property(spec, count, kC,
                        derive_seed(kBase, {seed_tag::kProps, std::hash<std::string>{}(spec.name),
                                            static_cast<std::uint64_t>(spec.kind), i}));
  });
  PropertyTally total;
  for (const auto& t : parts) {
    total.instances += t.instances;
    total.passed += t.passed;
    total.failed += t.failed;
    total.ties += t.ties;
  }
  return total;
}

Outcome solver_vs_oracle() {
  Rng rng(derive_seed(kBase, {1}));
  struct Case {
    std::vector<double> q;
    ActionDistribution prior;
    double lambda;
  };
  std::vector<Case> cases;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.index(49);
    std::vector<double> q(n);
    for (double& x : q) x = rng.uniform();
    const double lambda = std::exp(rng.uniform(std::log(1e-3), std::log(10.0)));
    cases.push_back({std::move(q), random_prior(n, rng), lambda});
  }
  const auto start = Clock::now();
  std::vector<ActionDistribution> solved;
  solved.reserve(cases.size());
  for (const Case& c : cases) {
    solved.push_back(solve_pibar(c.q, c.prior, Multiplier{c.lambda, 0, c.q.size()}));
  }
  const double elapsed = seconds_since(start);
  double worst_linf = 0.0, worst_kkt = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Case& c = cases[i];
    const auto ref = oracle::maximize(oracle::Kind::kReverseKL, c.q, c.prior.probs(), c.lambda);
    for (std::size_t a = 0; a < c.q.size(); ++a) {
      worst_linf = std::max(worst_linf, std::abs(solved[i][a] - ref[a]));
    }
    worst_kkt = std::max(worst_kkt, kkt_residual(c.q, c.prior, Multiplier{c.lambda, 0, c.q.size()},
                                                 solved[i], DivergenceKind::kReverseKL));
  }
  return {worst_linf <= 1e-4 && worst_kkt <= 1e-6 && elapsed < 10.0,
          fmt::format("max linf {:.3g}, max kkt {:.3g}, solver time {:.3f}s", worst_linf, worst_kkt,
                      elapsed)};
}

Outcome analytic_instance() {
  const std::vector<double> q{1.0, 0.0};
  const auto sol = solve_pibar_bisection(q, ActionDistribution::uniform(2), Multiplier{1.0, 0, 2},
                                         DivergenceKind::kReverseKL);
  const double alpha = 1.0 + std::numbers::sqrt2 / 2.0;
  const double e0 = std::abs(sol.policy[0] - 0.70711), e1 = std::abs(sol.policy[1] - 0.29289);
  const double ea = std::abs(sol.search.alpha - alpha);
  return {e0 <= 1e-5 && e1 <= 1e-5 && ea <= 1e-5,
          fmt::format("pi_bar ({:.8f}, {:.8f}), alpha {:.8f}", sol.policy[0], sol.policy[1],
                      sol.search.alpha)};
}

Outcome pihat_below_pibar(unsigned workers) {
  const PropertyTally t = tally_property({"pihat_le_pibar", DivergenceKind::kReverseKL}, 10000, workers);
  // Same inequality at every selection of real searches.
  int selections = 0, bad = 0;
  const ChainMDP env(8, 0.9);
  Rng rng(derive_seed(kBase, {3}));
  for (int run = 0; run < 50; ++run) {
    SearchConfig cfg;
    cfg.n_sim = 200;
    cfg.rng_seed = rng.next_u64();
    const auto prior = random_prior(2, rng, 0.05);
    auto eval = [&](const int& s) { return Evaluation{prior, env.value_estimate(s)}; };
    run_search(env, 0, cfg, eval, [&](const SelectionEvent& e) {
      ++selections;
      const auto pi_hat = empirical_visits(e.node.n);
      const auto pi_bar = solve_pibar(e.q_norm, e.node.prior, compute_lambda(kC, e.node.n));
      if (pi_hat[e.action] > pi_bar[e.action] + kInequalitySlack) ++bad;
    });
  }
  return {t.failed == 0 && t.passed + t.ties == 10000 && bad == 0,
          fmt::format("{} instances, {} failed; {} in-search selections, {} failed", t.instances,
                      t.failed, selections, bad)};
}

Outcome count_gradient(unsigned workers) {
  bool ok = true;
  std::string detail;
  for (DivergenceKind k : kAllDivergenceKinds) {
    const PropertyTally t = tally_property({"count_gradient_fd", k}, 10000, workers);
    const int decided = t.passed + t.failed;
    const double rate = decided ? static_cast<double>(t.passed) / decided : 1.0;
    ok = ok && rate >= 0.999;
    detail += fmt::format("{}{} {:.4f} of {} non-ties", detail.empty() ? "" : "; ", to_string(k),
                          rate, decided);
  }
  return {ok, detail};
}

Outcome uct_identity(unsigned workers) {
  const PropertyTally t =
      tally_property({"uct_uniform_identity", DivergenceKind::kHellinger, true}, 10000, workers);
  return {t.failed == 0 && t.ties == 0 && t.passed == 10000,
          fmt::format("{} passed, {} failed, {} ties", t.passed, t.failed, t.ties)};
}

Outcome f_lemmas(unsigned workers) {
  bool ok = true;
  std::string detail;
  for (const char* name : {"f_argmax_identity", "f_pihat_le_pibar"}) {
    for (DivergenceKind k : kAllDivergenceKinds) {
      const PropertyTally t = tally_property({name, k}, 10000, workers);
      ok = ok && t.failed == 0;
      detail += fmt::format("{}{}/{} {}/{}", detail.empty() ? "" : "; ", name, to_string(k),
                            t.passed, t.passed + t.failed);
    }
  }
  return {ok, detail};
}

Outcome tracking_bound_check(unsigned workers) {
  RunConfig cfg;
  cfg.actions = {1, 2, 4, 10};
  cfg.rounds = 10000;
  cfg.selector = "greedy";
  const auto out = cmd_bound(cfg, kBase, workers);
  const std::size_t col = out.table.column("bound_violations");
  long violations = 0;
  for (const auto& row : out.table.rows()) violations += std::stol(row[col]);
  return {out.ok && violations == 0,
          fmt::format("{} runs, {} violations", out.table.rows().size(), violations)};
}

Outcome tracking_experiment(unsigned workers) {
  RunConfig cfg;
  cfg.seeds.clear();
  for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
  cfg.actions = {10};
  cfg.n_sim = 1000;
  const auto out = cmd_track(cfg, kBase, workers);
  const std::size_t ct = out.table.column("t"), cb = out.table.column("linf_pibar"),
                    cg = out.table.column("linf_greedy");
  std::map<int, std::pair<double, double>> sums;
  std::map<int, int> counts;
  for (const auto& row : out.table.rows()) {
    const int t = std::stoi(row[ct]);
    if (t != 100 && t != 1000) continue;
    sums[t].first += std::stod(row[cb]);
    sums[t].second += std::stod(row[cg]);
    ++counts[t];
  }
  if (counts[100] != 20 || counts[1000] != 20) return {false, "missing rows at t=100 or t=1000"};
  const double b100 = sums[100].first / 20, g100 = sums[100].second / 20;
  const double b1000 = sums[1000].first / 20, g1000 = sums[1000].second / 20;
  return {b100 < g100 && b1000 < g1000 && b1000 < 0.05,
          fmt::format("t=100 pibar {:.4f} vs greedy {:.4f}; t=1000 pibar {:.4f} vs greedy {:.4f}",
                      b100, g100, b1000, g1000)};
}

Outcome factorized_marginals() {
  const FactorizedActionSpace space(2, 3);
  Rng rng(derive_seed(kBase, {9}));
  const auto env = FactorizedBanditEnv::random(space, rng, 0.3);
  FactorizedNodeStats stats(space);
  const std::vector<ActionDistribution> priors{random_prior(3, rng), random_prior(3, rng)};
  std::vector<double> sum(space.joint_count(), 0.0);
  std::vector<std::int64_t> n(space.joint_count(), 0);
  for (int sim = 0; sim < 1000; ++sim) {
    const auto joint = factorized_select(stats, priors, SelectionRule::kAlphaZeroPUCT, rng);
    const double r = env.reward(joint);
    factorized_backup(stats, joint, r, 0.0, 1.0);
    sum[space.encode(joint)] += r;
    n[space.encode(joint)] += 1;
  }
  double worst = 0.0;
  bool counts_ok = true;
  for (std::size_t i = 0; i < space.dims(); ++i) {
    for (std::size_t k = 0; k < space.bins(); ++k) {
      double s = 0.0;
      std::int64_t m = 0;
      for (std::size_t j = 0; j < space.joint_count(); ++j) {
        if (space.decode(j)[i] != k) continue;
        s += sum[j];
        m += n[j];
      }
      counts_ok = counts_ok && m == stats.counts(i)[k];
      if (m > 0) worst = std::max(worst, std::abs(stats.q(i)[k] - s / static_cast<double>(m)));
    }
  }
  return {counts_ok && worst <= 1e-9, fmt::format("max marginal error {:.3g}", worst)};
}

Outcome chain_sweep(unsigned workers) {
  RunConfig cfg;
  cfg.env = "chain";
  cfg.chain_length = 10;
  cfg.discount = 0.95;
  cfg.seeds = {0, 1, 2, 3, 4};
  cfg.n_sims = {5, 50};
  cfg.variants = {VariantFlags::baseline(), VariantFlags::all()};
  cfg.episodes = 500;
  const auto start = Clock::now();
  const auto out = cmd_sweep(cfg, kBase, workers);
  const double elapsed = seconds_since(start);
  std::map<std::pair<int, std::string>, SweepSummary> by;
  for (const auto& s : summarize_sweep(out.table, 100)) by[{s.n_sim, s.variant}] = s;
  const SweepSummary &b5 = by[{5, "baseline"}], &a5 = by[{5, "all"}];
  const SweepSummary &b50 = by[{50, "baseline"}], &a50 = by[{50, "all"}];
  const double pooled = std::sqrt(b50.stderr_ * b50.stderr_ + a50.stderr_ * a50.stderr_);
  const double gap = std::abs(a50.mean - b50.mean);
  return {a5.mean >= b5.mean && gap <= 2.0 * pooled + 1e-12 && elapsed < 300.0,
          fmt::format("n_sim=5 all {:.4f} vs baseline {:.4f}; n_sim=50 |diff| {:.4f} vs 2SE {:.4f}; "
                      "{:.1f}s",
                      a5.mean, b5.mean, gap, 2.0 * pooled, elapsed)};
}

std::string sorted_rows(const std::string& csv) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const std::size_t end = csv.find('\n', pos);
    lines.push_back(csv.substr(pos, end - pos));
    pos = end == std::string::npos ? csv.size() : end + 1;
  }
  std::sort(lines.begin(), lines.end());
  std::string joined;
  for (const auto& l : lines) joined += l + '\n';
  return joined;
}

Outcome determinism(unsigned workers) {
  RunConfig track;
  track.seeds = {0, 1, 2};
  track.n_sim = 200;
  RunConfig bound;
  bound.seeds = {0, 1};
  bound.actions = {2, 4, 10};
  bound.rounds = 2000;
  RunConfig props;
  props.instances = 400;
  RunConfig sweep;
  sweep.seeds = {0, 1};
  sweep.n_sims = {2, 5};
  sweep.episodes = 20;
  const std::uint64_t seed = 7;
  const unsigned k = std::max(4u, workers);
  const std::vector<std::pair<std::string, std::function<std::string(unsigned)>>> commands = {
      {"track", [&](unsigned w) { return cmd_track(track, seed, w).table.str(); }},
      {"bound", [&](unsigned w) { return cmd_bound(bound, seed, w).table.str(); }},
      {"props", [&](unsigned w) { return cmd_props(props, seed, w).table.str(); }},
      {"sweep", [&](unsigned w) { return cmd_sweep(sweep, seed, w).table.str(); }},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, run] : commands) {
    const std::string a = run(1), b = run(1), c = run(k);
    const bool same = a == b, same_sorted = sorted_rows(a) == sorted_rows(c);
    ok = ok && same && same_sorted;
    detail += fmt::format("{}{} {}/{}", detail.empty() ? "" : "; ", name, same ? "identical" : "DIFFER",
                          same_sorted ? "identical" : "DIFFER");
  }
  return {ok, fmt::format("workers 1 vs 1 / 1 vs {}: {}", k, detail)};
}

Outcome softmax_gradient() {
  Rng rng(derive_seed(kBase, {12}));
  auto kl_of = [](const std::vector<double>& z, const ActionDistribution& target) {
    const auto p = softmax(z);
    double s = 0.0;
    for (std::size_t a = 0; a < z.size(); ++a) {
      if (target[a] > 0.0) s += target[a] * std::log(target[a] / p[a]);
    }
    return s;
  };
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 2 + rng.index(9);
    std::vector<double> z(k), w(k);
    for (std::size_t a = 0; a < k; ++a) {
      z[a] = rng.uniform(-3.0, 3.0);
      w[a] = rng.uniform(0.01, 1.0);
    }
    const auto target = ActionDistribution::normalized(w);
    const auto g = softmax_kl_gradient(z, target);
    for (std::size_t a = 0; a < k; ++a) {
      const double h = 1e-5;
      auto up = z, down = z;
      up[a] += h;
      down[a] -= h;
      const double fd = (kl_of(up, target) - kl_of(down, target)) / (2 * h);
      worst = std::max(worst, std::abs(g[a] - fd) / std::max(std::abs(fd), 1e-3));
    }
  }
  return {worst <= 1e-5, fmt::format("max relative error {:.3g}", worst)};
}

}  // namespace

int main() {
  const unsigned workers = default_workers();
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, solver_vs_oracle},
      {2, analytic_instance},
      {3, [&] { return pihat_below_pibar(workers); }},
      {4, [&] { return count_gradient(workers); }},
      {5, [&] { return uct_identity(workers); }},
      {6, [&] { return f_lemmas(workers); }},
      {7, [&] { return tracking_bound_check(workers); }},
      {8, [&] { return tracking_experiment(workers); }},
      {9, factorized_marginals},
      {10, [&] { return chain_sweep(workers); }},
      {11, [&] { return determinism(workers); }},
      {12, softmax_gradient},
  };
  int failures = 0;
  for (const auto& [id, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failures;
    fmt::print("{} criterion {:>2}: {}\n", o.pass ? "PASS" : "FAIL", id, o.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
