#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "regmcts/agent.hpp"
#include "regmcts/config.hpp"
#include "regmcts/csv.hpp"
#include "regmcts/envs.hpp"
#include "regmcts/parallel.hpp"
#include "regmcts/rng.hpp"
#include "regmcts/simplex.hpp"
#include "regmcts/solver.hpp"
#include "regmcts/tree.hpp"

namespace regmcts {

/// Result of one subcommand: the CSV plus whether its checks passed.
struct CommandOutput {
  CsvTable table;
  bool ok = true;
  std::vector<std::string> notes;  ///< human-readable diagnostics (stderr)
};

// Stream tags keep the seeds of different commands apart.
namespace seed_tag {
inline constexpr std::uint64_t kTrack = 0x7472;
inline constexpr std::uint64_t kBound = 0x626f;
inline constexpr std::uint64_t kProps = 0x7072;
inline constexpr std::uint64_t kSweep = 0x7377;
inline constexpr std::uint64_t kEnv = 0x656e;
}  // namespace seed_tag

/// Strictly positive distribution with weights drawn from U[floor, 1].
inline ActionDistribution random_prior(std::size_t n, Rng& rng, double floor = 0.02) {
  std::vector<double> w(n);
  for (double& x : w) x = rng.uniform(floor, 1.0);
  return ActionDistribution::normalized(w, ActionDistribution::Positivity::kStrict);
}

// ---------------------------------------------------------------------------
// track
// ---------------------------------------------------------------------------

inline const std::vector<std::string> kTrackHeader = {
    "seed", "actions", "t", "l1_pibar", "l1_greedy", "linf_pibar", "linf_greedy"};

/**
 * Tracking on a single one-step root whose Q-values are known exactly: n_sim
 * selections with the rule matching the divergence (PUCT for reverse KL,
 * prior UCT for Hellinger, the generic f-rule otherwise). After each
 * selection pi_hat is compared with pi_bar and with the greedy one-hot.
 */
inline CsvTable track_instance(std::span<const double> q, const ActionDistribution& prior,
                               const RunConfig& cfg, std::uint64_t seed) {
  CsvTable out(kTrackHeader);
  const std::size_t n_arms = q.size();
  const auto best = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
  const ActionDistribution greedy = ActionDistribution::one_hot(n_arms, best);
  SolverConfig solver;
  solver.c = cfg.c;
  solver.kind = cfg.divergence;

  NodeStats node(prior, 0.0, 0.0);
  node.q.assign(q.begin(), q.end());
  for (int t = 1; t <= cfg.n_sim; ++t) {
    std::size_t a = 0;
    switch (cfg.divergence) {
      case DivergenceKind::kReverseKL: a = select_action_alphazero(node, cfg.c, q); break;
      case DivergenceKind::kHellinger: a = select_action_uct(node, cfg.c, q); break;
      case DivergenceKind::kForwardKL:
        a = select_action_f(q, prior, node.n, multiplier_for(cfg.divergence, cfg.c, node.n),
                            cfg.divergence);
        break;
    }
    node.n[a] += 1;
    const ActionDistribution pi_hat = empirical_visits(node.n);
    const ActionDistribution pi_bar =
        solve_pibar_f(q, prior, multiplier_for(cfg.divergence, cfg.c, node.n), cfg.divergence,
                      solver);
    out.add(seed, n_arms, t, l1_distance(pi_hat, pi_bar), l1_distance(pi_hat, greedy),
            linf_distance(pi_hat, pi_bar), linf_distance(pi_hat, greedy));
  }
  return out;
}

/// Tracking on a random bandit (Q ~ U[0, 1]) drawn from the seed.
inline CsvTable track_run(const RunConfig& cfg, std::uint64_t base_seed, std::uint64_t seed,
                          int arms) {
  Rng rng(derive_seed(base_seed, {seed_tag::kTrack, seed, static_cast<std::uint64_t>(arms)}));
  const auto n_arms = static_cast<std::size_t>(arms);
  const BanditEnv env = BanditEnv::random(n_arms, rng);
  const ActionDistribution prior = cfg.prior == "uniform" ? ActionDistribution::uniform(n_arms)
                                                          : random_prior(n_arms, rng);
  return track_instance(env.true_values(), prior, cfg, seed);
}

inline CommandOutput cmd_track(const RunConfig& cfg, std::uint64_t base_seed, unsigned workers) {
  cfg.validate();
  std::vector<std::pair<std::uint64_t, int>> items;
  for (int arms : cfg.actions) {
    for (std::uint64_t s : cfg.seeds) items.emplace_back(s, arms);
  }
  const auto parts = parallel_map(items.size(), workers, [&](std::size_t i) {
    return track_run(cfg, base_seed, items[i].first, items[i].second);
  });
  CommandOutput result{CsvTable(kTrackHeader), true, {}};
  for (const auto& p : parts) result.table.append(p);
  return result;
}

// ---------------------------------------------------------------------------
// bound
// ---------------------------------------------------------------------------

inline const std::vector<std::string> kBoundHeader = {
    "actions", "seed", "selector", "rounds", "max_ratio", "bound_violations",
    "assumption_violations"};

struct BoundRun {
  int actions = 0;
  std::uint64_t seed = 0;
  std::string selector;
  int rounds = 0;
  double max_ratio = 0.0;  ///< max_t ||pi - p_t||_inf * (|A| + t) / (|A| - 1); 0 when |A| = 1
  int bound_violations = 0;
  int assumption_violations = 0;  ///< rounds where p_t(a_t) > pi(a_t)
};

/// (|A| - 1) / (|A| + t).
inline double tracking_bound(std::size_t actions, std::int64_t t) {
  return (static_cast<double>(actions) - 1.0) / (static_cast<double>(actions) + static_cast<double>(t));
}

/**
 * Round process p_t = (1 + n_t) / (|A| + t) against a fixed target pi.
 * "greedy" picks the largest deficit pi(a) - p_t(a), which always satisfies
 * p_t(a) <= pi(a); "violating" picks the largest surplus instead.
 */
inline BoundRun bound_run(const ActionDistribution& pi, int rounds, const std::string& selector) {
  const std::size_t n_actions = pi.size();
  BoundRun run;
  run.actions = static_cast<int>(n_actions);
  run.selector = selector;
  run.rounds = rounds;
  const bool greedy = selector == "greedy";
  std::vector<std::int64_t> n(n_actions, 0);
  std::vector<double> p(n_actions);
  for (std::int64_t t = 0; t <= rounds; ++t) {
    const double denom = static_cast<double>(n_actions) + static_cast<double>(t);
    double err = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) {
      p[a] = (1.0 + static_cast<double>(n[a])) / denom;
      err = std::max(err, std::abs(pi[a] - p[a]));
    }
    const double bound = tracking_bound(n_actions, t);
    if (err > bound + 1e-12) ++run.bound_violations;
    if (n_actions > 1) run.max_ratio = std::max(run.max_ratio, err / bound);
    if (t == rounds) break;

    std::size_t pick = 0;
    for (std::size_t a = 1; a < n_actions; ++a) {
      const double gap = pi[a] - p[a], best = pi[pick] - p[pick];
      if (greedy ? gap > best : gap < best) pick = a;
    }
    if (p[pick] > pi[pick] + 1e-15) ++run.assumption_violations;
    n[pick] += 1;
  }
  return run;
}

inline CommandOutput cmd_bound(const RunConfig& cfg, std::uint64_t base_seed, unsigned workers) {
  cfg.validate();
  std::vector<std::pair<int, std::uint64_t>> items;
  for (int arms : cfg.actions) {
    for (std::uint64_t s : cfg.seeds) items.emplace_back(arms, s);
  }
  const auto runs = parallel_map(items.size(), workers, [&](std::size_t i) {
    const auto [arms, seed] = items[i];
    Rng rng(derive_seed(base_seed, {seed_tag::kBound, seed, static_cast<std::uint64_t>(arms)}));
    const auto n = static_cast<std::size_t>(arms);
    const ActionDistribution pi =
        cfg.target == "uniform" ? ActionDistribution::uniform(n) : random_prior(n, rng, 0.0);
    BoundRun run = bound_run(pi, cfg.rounds, cfg.selector);
    run.seed = seed;
    return run;
  });
  CommandOutput result{CsvTable(kBoundHeader), true, {}};
  for (const BoundRun& r : runs) {
    result.table.add(r.actions, r.seed, r.selector, r.rounds, r.max_ratio, r.bound_violations,
                     r.assumption_violations);
    // The bound is only promised while the selection assumption holds.
    if (r.assumption_violations == 0 && r.bound_violations > 0) {
      result.ok = false;
      result.notes.push_back(fmt::format("bound violated: actions={} seed={} ({} rounds)",
                                         r.actions, r.seed, r.bound_violations));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// props
// ---------------------------------------------------------------------------

inline const std::vector<std::string> kPropsHeader = {"property", "kind",   "instances",
                                                      "passed",   "failed", "ties"};

/// A random selection state: Q in [0, 1], prior, visit counts (N >= 2).
struct SelectionInstance {
  std::vector<double> q;
  ActionDistribution prior;
  std::vector<std::int64_t> n;

  [[nodiscard]] NodeStats node() const {
    NodeStats s(prior, 0.0, 0.0);
    s.q = q;
    s.n = n;
    return s;
  }

  [[nodiscard]] std::string describe() const {
    return fmt::format("q=[{:.17g}] prior=[{:.17g}] n=[{}]", fmt::join(q, ","),
                       fmt::join(prior.probs(), ","), fmt::join(n, ","));
  }
};

inline SelectionInstance random_selection_instance(Rng& rng, bool uniform_prior = false,
                                                   std::size_t min_actions = 2,
                                                   std::size_t max_actions = 20) {
  const std::size_t arms = min_actions + rng.index(max_actions - min_actions + 1);
  SelectionInstance inst;
  inst.q.resize(arms);
  for (double& x : inst.q) x = rng.uniform();
  inst.prior = uniform_prior ? ActionDistribution::uniform(arms) : random_prior(arms, rng);
  inst.n.resize(arms);
  const std::size_t scale = 1 + rng.index(60);
  for (auto& c : inst.n) c = rng.uniform() < 0.2 ? 0 : static_cast<std::int64_t>(rng.index(scale));
  std::int64_t total = std::accumulate(inst.n.begin(), inst.n.end(), std::int64_t{0});
  while (total < 2) {
    inst.n[rng.index(arms)] += 1;
    ++total;
  }
  return inst;
}

struct ArgmaxCheck {
  bool tie = false;
  bool agree = false;
};

namespace detail {
inline double top_two_gap(std::span<const double> v) {
  if (v.size() < 2) return std::numeric_limits<double>::infinity();
  double first = -std::numeric_limits<double>::infinity(), second = first;
  for (double x : v) {
    if (x > first) {
      second = first;
      first = x;
    } else if (x > second) {
      second = x;
    }
  }
  return first - second;
}
}  // namespace detail

/// Compares two argmaxes; a tie is declared when either criterion's top-2
/// gap is below `tie_gap`.
inline ArgmaxCheck compare_argmax(std::span<const double> lhs, std::span<const double> rhs,
                                  double tie_gap) {
  ArgmaxCheck r;
  r.tie = detail::top_two_gap(lhs) < tie_gap || detail::top_two_gap(rhs) < tie_gap;
  r.agree = detail::argmax_first(lhs) == detail::argmax_first(rhs);
  return r;
}

inline constexpr double kPropsTieGap = 1e-9;
inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kFiniteDifferenceTieGap = 1e-6;
inline constexpr double kInequalitySlack = 1e-9;

/// Tight solver settings for the identity checks, where 1/pi_bar amplifies
/// any residual of the normalization.
inline SolverConfig props_solver(double c, DivergenceKind kind) {
  SolverConfig s;
  s.c = c;
  s.kind = kind;
  s.bisection_tol = 1e-12;
  s.max_bisection_iters = 400;
  return s;
}

/// q.pi_hat(n) - lambda * D_f(pi_hat(n), prior) with pi_hat extended to real counts.
inline double count_objective(std::span<const double> q, const ActionDistribution& prior,
                              std::span<const double> counts, double lambda, DivergenceKind kind) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double denom = static_cast<double>(counts.size()) + total;
  double value = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    const double p = (1.0 + counts[a]) / denom;
    value += q[a] * p - lambda * prior[a] * generator(kind, p / prior[a]);
  }
  return value;
}

/// Central differences of count_objective in each count (lambda held fixed).
inline std::vector<double> count_objective_gradient_fd(const SelectionInstance& inst, double lambda,
                                                       DivergenceKind kind, double h) {
  std::vector<double> counts(inst.n.begin(), inst.n.end());
  std::vector<double> g(counts.size());
  for (std::size_t a = 0; a < counts.size(); ++a) {
    const double saved = counts[a];
    counts[a] = saved + h;
    const double up = count_objective(inst.q, inst.prior, counts, lambda, kind);
    counts[a] = saved - h;
    const double down = count_objective(inst.q, inst.prior, counts, lambda, kind);
    counts[a] = saved;
    g[a] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Outcome of one property on one instance.
enum class Verdict { kPass, kFail, kTie };

struct PropertySpec {
  std::string name;
  DivergenceKind kind;
  bool uniform_prior = false;
};

inline std::vector<PropertySpec> property_catalog() {
  std::vector<PropertySpec> props;
  for (DivergenceKind k : kAllDivergenceKinds) props.push_back({"count_gradient_fd", k});
  props.push_back({"pihat_le_pibar", DivergenceKind::kReverseKL});
  props.push_back({"deficit_argmax", DivergenceKind::kReverseKL});
  props.push_back({"uct_deficit_argmax", DivergenceKind::kHellinger});
  props.push_back({"uct_uniform_identity", DivergenceKind::kHellinger, true});
  for (DivergenceKind k : kAllDivergenceKinds) props.push_back({"f_argmax_identity", k});
  for (DivergenceKind k : kAllDivergenceKinds) props.push_back({"f_pihat_le_pibar", k});
  return props;
}

/// Evaluates property `spec` on `inst`.
inline Verdict check_property(const PropertySpec& spec, const SelectionInstance& inst, double c) {
  const DivergenceKind kind = spec.kind;
  const SolverConfig solver = props_solver(c, kind);
  const NodeStats node = inst.node();
  const std::size_t arms = inst.q.size();
  const Multiplier lambda = multiplier_for(kind, c, inst.n);
  const ActionDistribution pi_hat = empirical_visits(inst.n);
  auto verdict = [](const ArgmaxCheck& r) {
    return r.tie ? Verdict::kTie : (r.agree ? Verdict::kPass : Verdict::kFail);
  };
  // AlphaZero uses the PUCT score itself; the generic f-rule otherwise.
  auto selection_scores = [&] {
    if (kind == DivergenceKind::kReverseKL) return puct_scores(node, c, inst.q);
    if (kind == DivergenceKind::kHellinger) return uct_scores(node, c, inst.q);
    return f_selection_scores(inst.q, inst.prior, inst.n, lambda, kind);
  };

  if (spec.name == "count_gradient_fd") {
    const auto fd = count_objective_gradient_fd(inst, lambda.value, kind, kFiniteDifferenceStep);
    const auto sel = selection_scores();
    ArgmaxCheck r = compare_argmax(sel, fd, kPropsTieGap);
    r.tie = r.tie || detail::top_two_gap(fd) < kFiniteDifferenceTieGap;
    return verdict(r);
  }
  if (spec.name == "pihat_le_pibar" || spec.name == "f_pihat_le_pibar") {
    const std::size_t a = spec.name == "pihat_le_pibar"
                              ? select_action_alphazero(node, c, inst.q)
                              : select_action_f(inst.q, inst.prior, inst.n, lambda, kind);
    const ActionDistribution pi_bar = solve_pibar_f(inst.q, inst.prior, lambda, kind, solver);
    return pi_hat[a] <= pi_bar[a] + kInequalitySlack ? Verdict::kPass : Verdict::kFail;
  }
  if (spec.name == "deficit_argmax") {
    const ActionDistribution pi_bar = solve_pibar(inst.q, inst.prior, lambda, solver);
    std::vector<double> deficit(arms);
    for (std::size_t a = 0; a < arms; ++a) {
      deficit[a] = inst.prior[a] * (1.0 / pi_hat[a] - 1.0 / pi_bar[a]);
    }
    return verdict(compare_argmax(puct_scores(node, c, inst.q), deficit, kPropsTieGap));
  }
  if (spec.name == "uct_deficit_argmax") {
    const ActionDistribution pi_bar = solve_pibar_f(inst.q, inst.prior, lambda, kind, solver);
    std::vector<double> deficit(arms);
    for (std::size_t a = 0; a < arms; ++a) {
      deficit[a] = std::sqrt(inst.prior[a]) *
                   (1.0 / std::sqrt(pi_hat[a]) - 1.0 / std::sqrt(pi_bar[a]));
    }
    return verdict(compare_argmax(uct_scores(node, c, inst.q), deficit, kPropsTieGap));
  }
  if (spec.name == "uct_uniform_identity") {
    // Original UCT with its constant rescaled by 1/sqrt(|A|).
    const double log_n = std::log(static_cast<double>(node.total_visits()));
    const double c_uct = c / std::sqrt(static_cast<double>(arms));
    std::vector<double> original(arms);
    for (std::size_t a = 0; a < arms; ++a) {
      original[a] = inst.q[a] + c_uct * std::sqrt(log_n / (1.0 + static_cast<double>(inst.n[a])));
    }
    return verdict(compare_argmax(uct_scores(node, c, inst.q), original, kPropsTieGap));
  }
  if (spec.name == "f_argmax_identity") {
    const ActionDistribution pi_bar = solve_pibar_f(inst.q, inst.prior, lambda, kind, solver);
    std::vector<double> gap(arms);
    for (std::size_t a = 0; a < arms; ++a) {
      gap[a] = generator_derivative(kind, pi_bar[a] / inst.prior[a]) -
               generator_derivative(kind, pi_hat[a] / inst.prior[a]);
    }
    return verdict(compare_argmax(f_selection_scores(inst.q, inst.prior, inst.n, lambda, kind),
                                  gap, kPropsTieGap));
  }
  throw std::logic_error(fmt::format("unknown property '{}'", spec.name));
}

struct PropertyTally {
  int instances = 0;
  int passed = 0;
  int failed = 0;
  int ties = 0;
  std::vector<std::string> failures;  ///< serialized failing instances (capped)
};

inline PropertyTally run_property(const PropertySpec& spec, int instances, double c,
                                  std::uint64_t seed) {
  Rng rng(seed);
  PropertyTally tally;
  for (int i = 0; i < instances; ++i) {
    const SelectionInstance inst = random_selection_instance(rng, spec.uniform_prior);
    ++tally.instances;
    switch (check_property(spec, inst, c)) {
      case Verdict::kPass: ++tally.passed; break;
      case Verdict::kTie: ++tally.ties; break;
      case Verdict::kFail:
        ++tally.failed;
        if (tally.failures.size() < 5) tally.failures.push_back(inst.describe());
        break;
    }
  }
  return tally;
}

inline CommandOutput cmd_props(const RunConfig& cfg, std::uint64_t base_seed, unsigned workers) {
  cfg.validate();
  constexpr int kChunks = 8;
  const std::vector<PropertySpec> catalog = property_catalog();
  const std::size_t items = catalog.size() * kChunks;
  const auto tallies = parallel_map(items, workers, [&](std::size_t i) {
    const std::size_t prop = i / kChunks;
    const int chunk = static_cast<int>(i % kChunks);
    const int count = cfg.instances / kChunks + (chunk < cfg.instances % kChunks ? 1 : 0);
    return run_property(catalog[prop], count, cfg.c,
                        derive_seed(base_seed, {seed_tag::kProps, prop,
                                                static_cast<std::uint64_t>(chunk)}));
  });
  CommandOutput result{CsvTable(kPropsHeader), true, {}};
  for (std::size_t prop = 0; prop < catalog.size(); ++prop) {
    PropertyTally total;
    for (int chunk = 0; chunk < kChunks; ++chunk) {
      const PropertyTally& t = tallies[prop * kChunks + static_cast<std::size_t>(chunk)];
      total.instances += t.instances;
      total.passed += t.passed;
      total.failed += t.failed;
      total.ties += t.ties;
      for (const auto& f : t.failures) {
        result.notes.push_back(fmt::format("FAIL {} [{}]: {}", catalog[prop].name,
                                           to_string(catalog[prop].kind), f));
      }
    }
    result.table.add(catalog[prop].name, to_string(catalog[prop].kind), total.instances,
                     total.passed, total.failed, total.ties);
    if (total.failed > 0) result.ok = false;
  }
  return result;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

inline const std::vector<std::string> kSweepHeader = {
    "variant", "n_sim", "seed", "episode", "return", "steps", "mean_kl"};

inline std::uint64_t variant_code(const VariantFlags& f) {
  return (f.act_with_pibar ? 1u : 0u) | (f.search_with_pibar ? 2u : 0u) |
         (f.learn_with_pibar ? 4u : 0u);
}

inline TrainingTrace sweep_run(const RunConfig& cfg, std::uint64_t base_seed,
                               const VariantFlags& flags, int n_sim, std::uint64_t seed) {
  const AgentConfig agent = cfg.agent(flags, n_sim);
  const std::uint64_t run_seed = derive_seed(
      base_seed, {seed_tag::kSweep, seed, static_cast<std::uint64_t>(n_sim), variant_code(flags)});
  // The environment depends on the seed only, so every variant and budget
  // faces the same instance.
  Rng env_rng(derive_seed(base_seed, {seed_tag::kEnv, seed}));
  if (cfg.env == "chain") {
    return run_episode_loop(ChainMDP(cfg.chain_length, cfg.discount, cfg.horizon), agent,
                            cfg.episodes, run_seed);
  }
  if (cfg.env == "bandit") {
    const auto arms = static_cast<std::size_t>(cfg.actions.empty() ? 10 : cfg.actions.front());
    return run_episode_loop(BanditEnv::random(arms, env_rng), agent, cfg.episodes, run_seed);
  }
  const FactorizedActionSpace space(static_cast<std::size_t>(cfg.dims),
                                    static_cast<std::size_t>(cfg.bins));
  return run_factorized_bandit_loop(FactorizedBanditEnv::random(space, env_rng, cfg.coupling),
                                    agent, cfg.episodes, run_seed);
}

inline CommandOutput cmd_sweep(const RunConfig& cfg, std::uint64_t base_seed, unsigned workers) {
  cfg.validate();
  struct Item {
    int n_sim;
    VariantFlags flags;
    std::uint64_t seed;
  };
  std::vector<Item> items;
  for (int n_sim : cfg.n_sims) {
    for (const VariantFlags& flags : cfg.variants) {
      for (std::uint64_t s : cfg.seeds) items.push_back({n_sim, flags, s});
    }
  }
  const auto traces = parallel_map(items.size(), workers, [&](std::size_t i) {
    return sweep_run(cfg, base_seed, items[i].flags, items[i].n_sim, items[i].seed);
  });
  CommandOutput result{CsvTable(kSweepHeader), true, {}};
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string name = variant_name(items[i].flags);
    for (const EpisodeRecord& e : traces[i].episodes) {
      result.table.add(name, items[i].n_sim, items[i].seed, e.episode, e.episode_return, e.steps,
                       e.mean_kl);
    }
  }
  return result;
}

/// Mean over seeds of each seed's mean return in its final `last` episodes,
/// with the standard error across seeds.
struct SweepSummary {
  std::string variant;
  int n_sim = 0;
  int seeds = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline std::vector<SweepSummary> summarize_sweep(const CsvTable& table, int last) {
  const std::size_t c_var = table.column("variant"), c_n = table.column("n_sim"),
                    c_seed = table.column("seed"), c_ep = table.column("episode"),
                    c_ret = table.column("return");
  // (n_sim, variant) -> seed -> (episode, return)
  std::map<std::pair<int, std::string>, std::map<std::string, std::vector<std::pair<int, double>>>>
      groups;
  for (const auto& row : table.rows()) {
    groups[{std::stoi(row[c_n]), row[c_var]}][row[c_seed]].emplace_back(std::stoi(row[c_ep]),
                                                                        std::stod(row[c_ret]));
  }
  std::vector<SweepSummary> out;
  for (auto& [key, by_seed] : groups) {
    std::vector<double> seed_means;
    for (auto& [seed, eps] : by_seed) {
      std::sort(eps.begin(), eps.end());
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(last), eps.size());
      double sum = 0.0;
      for (std::size_t i = eps.size() - k; i < eps.size(); ++i) sum += eps[i].second;
      seed_means.push_back(k ? sum / static_cast<double>(k) : 0.0);
    }
    const double n = static_cast<double>(seed_means.size());
    const double mean = std::accumulate(seed_means.begin(), seed_means.end(), 0.0) / n;
    double var = 0.0;
    for (double m : seed_means) var += (m - mean) * (m - mean);
    var = seed_means.size() > 1 ? var / (n - 1.0) : 0.0;
    out.push_back({key.second, key.first, static_cast<int>(seed_means.size()), mean,
                   std::sqrt(var / n)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveReport {
  PibarSolution solution;
  double kkt = 0.0;
};

inline SolveReport solve_one_shot(std::span<const double> q, const ActionDistribution& prior,
                                  double lambda, DivergenceKind kind, const SolverConfig& solver) {
  const Multiplier m{lambda, 0, prior.size()};
  SolveReport r{solve_pibar_f_detailed(q, prior, m, kind, solver), 0.0};
  r.kkt = r.solution.policy.is_strictly_positive()
              ? kkt_residual(q, prior, m, r.solution.policy, kind)
              : 0.0;
  return r;
}

/// Full-precision text form: one key=value per line.
inline std::string format_solve_report(const SolveReport& r) {
  std::string out;
  out += fmt::format("pi_bar={:.17g}\n", fmt::join(r.solution.policy.probs(), ","));
  out += fmt::format("alpha={:.17g}\n", r.solution.search.alpha);
  out += fmt::format("iterations={}\n", r.solution.search.iterations);
  out += fmt::format("kkt_residual={:.17g}\n", r.kkt);
  return out;
}

}  // namespace regmcts
