#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "regmcts/envs.hpp"
#include "regmcts/rng.hpp"
#include "regmcts/simplex.hpp"
#include "regmcts/solver.hpp"
#include "regmcts/tree.hpp"

namespace regmcts {

/// Which of acting / in-tree selection / distillation use pi_bar instead of pi_hat.
struct VariantFlags {
  bool act_with_pibar = false;
  bool search_with_pibar = false;
  bool learn_with_pibar = false;

  static constexpr VariantFlags baseline() { return {}; }
  static constexpr VariantFlags act() { return {true, false, false}; }
  static constexpr VariantFlags search() { return {false, true, false}; }
  static constexpr VariantFlags learn() { return {false, false, true}; }
  static constexpr VariantFlags all() { return {true, true, true}; }

  friend constexpr bool operator==(const VariantFlags&, const VariantFlags&) = default;
};

inline std::string variant_name(const VariantFlags& f) {
  if (f == VariantFlags::baseline()) return "baseline";
  if (f == VariantFlags::all()) return "all";
  if (f == VariantFlags::act()) return "act";
  if (f == VariantFlags::search()) return "search";
  if (f == VariantFlags::learn()) return "learn";
  std::string name;
  if (f.act_with_pibar) name += "act+";
  if (f.search_with_pibar) name += "search+";
  if (f.learn_with_pibar) name += "learn+";
  name.pop_back();
  return name;
}

inline VariantFlags parse_variant(std::string_view name) {
  if (name == "baseline") return VariantFlags::baseline();
  if (name == "act") return VariantFlags::act();
  if (name == "search") return VariantFlags::search();
  if (name == "learn") return VariantFlags::learn();
  if (name == "all") return VariantFlags::all();
  throw std::invalid_argument(fmt::format("unknown variant '{}'", name));
}

/// softmax(logits) - target: gradient of KL[target, softmax(logits)] w.r.t. the logits.
inline std::vector<double> softmax_kl_gradient(std::span<const double> logits,
                                               const ActionDistribution& target);

inline std::vector<double> softmax(std::span<const double> logits) {
  double hi = logits.empty() ? 0.0 : logits[0];
  for (double z : logits) hi = std::max(hi, z);
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    p[a] = std::exp(logits[a] - hi);
    total += p[a];
  }
  for (double& x : p) x /= total;
  return p;
}

inline std::vector<double> softmax_kl_gradient(std::span<const double> logits,
                                               const ActionDistribution& target) {
  if (logits.size() != target.size()) throw std::domain_error("softmax_kl_gradient: size mismatch");
  std::vector<double> g = softmax(logits);
  for (std::size_t a = 0; a < g.size(); ++a) g[a] -= target[a];
  return g;
}

/**
 * Tabular policy prior: one logit vector per state key, pi = softmax(logits).
 * Unknown keys start at zero logits (uniform). Finite logits keep every
 * probability strictly positive.
 */
class TabularSoftmaxPrior {
public:
  TabularSoftmaxPrior(std::size_t num_actions, double learning_rate)
      : num_actions_(num_actions), learning_rate_(learning_rate) {
    if (num_actions == 0) throw std::domain_error("TabularSoftmaxPrior: empty action set");
    if (!(learning_rate > 0.0)) throw std::domain_error("TabularSoftmaxPrior: learning rate <= 0");
  }

  [[nodiscard]] std::size_t num_actions() const noexcept { return num_actions_; }
  [[nodiscard]] double learning_rate() const noexcept { return learning_rate_; }

  [[nodiscard]] std::vector<double> logits(std::int64_t key) const {
    auto it = logits_.find(key);
    if (it == logits_.end()) return std::vector<double>(num_actions_, 0.0);
    return it->second;
  }

  void set_logits(std::int64_t key, std::vector<double> z) {
    if (z.size() != num_actions_) throw std::domain_error("set_logits: size mismatch");
    logits_[key] = std::move(z);
  }

  [[nodiscard]] ActionDistribution prior(std::int64_t key) const {
    std::vector<double> p = softmax(logits(key));
    // Guard against underflow for extreme logits.
    for (double& x : p) x = std::max(x, 1e-300);
    return ActionDistribution::normalized(p, ActionDistribution::Positivity::kStrict);
  }

  [[nodiscard]] double kl_from(std::int64_t key, const ActionDistribution& target) const {
    return kl(target, prior(key));
  }

  /// One gradient step on KL[target, pi(. | key)].
  void learn_step(std::int64_t key, const ActionDistribution& target) {
    if (target.size() != num_actions_) throw std::domain_error("learn_step: size mismatch");
    auto [it, inserted] = logits_.try_emplace(key, std::vector<double>(num_actions_, 0.0));
    const std::vector<double> grad = softmax_kl_gradient(it->second, target);
    for (std::size_t a = 0; a < num_actions_; ++a) it->second[a] -= learning_rate_ * grad[a];
  }

private:
  std::size_t num_actions_;
  double learning_rate_;
  std::map<std::int64_t, std::vector<double>> logits_;
};

/// Value-returning form of TabularSoftmaxPrior::learn_step.
inline TabularSoftmaxPrior learn_step(TabularSoftmaxPrior prior, std::int64_t key,
                                      const ActionDistribution& target) {
  prior.learn_step(key, target);
  return prior;
}

struct AgentConfig {
  VariantFlags flags;
  int n_sim = 50;
  SolverConfig solver;
  double learning_rate = 0.1;
  bool normalize_for_solver = true;
};

template <class E>
concept EpisodicEnv = SearchModel<E> && requires(const E& e, const typename E::State& s) {
  { e.initial_state() } -> std::convertible_to<typename E::State>;
  { e.state_key(s) } -> std::convertible_to<std::int64_t>;
  { e.value_estimate(s) } -> std::convertible_to<double>;
  { e.horizon() } -> std::convertible_to<int>;
  { e.discount() } -> std::convertible_to<double>;
};

struct StepOutcome {
  std::size_t action = 0;
  SearchResult search;
  ActionDistribution target;  ///< distillation target for this root
};

inline SearchConfig search_config_for(const AgentConfig& config, double discount,
                                      std::uint64_t seed) {
  SearchConfig sc;
  sc.n_sim = config.n_sim;
  sc.selection = config.flags.search_with_pibar ? SelectionRule::kPibarSampling
                                                : SelectionRule::kAlphaZeroPUCT;
  sc.solver = config.solver;
  sc.rng_seed = seed;
  sc.discount = discount;
  sc.normalize_for_solver = config.normalize_for_solver;
  return sc;
}

/// Searches from `state`, then samples the action from pi_bar (ACT) or pi_hat.
template <EpisodicEnv Env>
StepOutcome act(const Env& env, const TabularSoftmaxPrior& prior, const AgentConfig& config,
                const typename Env::State& state, Rng& rng) {
  const SearchConfig sc = search_config_for(config, env.discount(), rng.next_u64());
  auto evaluator = [&](const typename Env::State& s) {
    return Evaluation{prior.prior(env.state_key(s)), env.value_estimate(s)};
  };
  StepOutcome out;
  out.search = run_search(env, state, sc, evaluator);
  out.action = rng.sample(config.flags.act_with_pibar ? out.search.pi_bar : out.search.pi_hat);
  out.target = config.flags.learn_with_pibar ? out.search.pi_bar : out.search.pi_hat;
  return out;
}

struct EpisodeRecord {
  int episode = 0;
  double episode_return = 0.0;
  int steps = 0;
  double mean_kl = 0.0;  ///< mean over steps of KL[target, prior] before the update
};

struct StepRecord {
  int episode = 0;
  int step = 0;
  double kl = 0.0;
};

struct TrainingTrace {
  std::vector<EpisodeRecord> episodes;
  std::vector<StepRecord> steps;
};

/**
 * Act, record the (state, target) pair and take one distillation step, for
 * `episodes` episodes of at most env.horizon() steps. Deterministic in `seed`.
 */
template <EpisodicEnv Env>
TrainingTrace run_episode_loop(const Env& env, const AgentConfig& config, int episodes,
                               std::uint64_t seed) {
  if (episodes < 0) throw std::domain_error("run_episode_loop: negative episode count");
  TrainingTrace trace;
  TabularSoftmaxPrior prior(env.num_actions(), config.learning_rate);
  Rng rng(seed);
  for (int ep = 0; ep < episodes; ++ep) {
    auto state = env.initial_state();
    EpisodeRecord rec{ep, 0.0, 0, 0.0};
    for (int t = 0; t < env.horizon() && !env.is_terminal(state); ++t) {
      const StepOutcome out = act(env, prior, config, state, rng);
      const std::int64_t key = env.state_key(state);
      const double divergence = prior.kl_from(key, out.target);
      prior.learn_step(key, out.target);
      trace.steps.push_back({ep, t, divergence});
      rec.mean_kl += divergence;
      const auto transition = env.step(state, out.action);
      rec.episode_return += transition.reward;
      rec.steps += 1;
      state = transition.next;
    }
    if (rec.steps > 0) rec.mean_kl /= rec.steps;
    trace.episodes.push_back(rec);
  }
  return trace;
}

/**
 * Episode loop for the factorized one-step bandit: a single root with
 * FactorizedNodeStats, n_sim - 1 selections (the first simulation is the
 * root evaluation), per-dimension acting and per-dimension distillation.
 */
inline TrainingTrace run_factorized_bandit_loop(const FactorizedBanditEnv& env,
                                                const AgentConfig& config, int episodes,
                                                std::uint64_t seed) {
  if (episodes < 0) throw std::domain_error("run_factorized_bandit_loop: negative episodes");
  const FactorizedActionSpace& space = env.space();
  TabularSoftmaxPrior prior(space.bins(), config.learning_rate);  // key = dimension
  Rng rng(seed);
  TrainingTrace trace;
  const SelectionRule rule = config.flags.search_with_pibar ? SelectionRule::kPibarSampling
                                                            : SelectionRule::kAlphaZeroPUCT;
  for (int ep = 0; ep < episodes; ++ep) {
    std::vector<ActionDistribution> priors;
    for (std::size_t i = 0; i < space.dims(); ++i) {
      priors.push_back(prior.prior(static_cast<std::int64_t>(i)));
    }
    FactorizedNodeStats stats(space);
    for (int sim = 1; sim < config.n_sim; ++sim) {
      const std::vector<std::size_t> joint = factorized_select(stats, priors, rule, rng, config.solver);
      factorized_backup(stats, joint, env.reward(joint), 0.0, 1.0);
    }
    const auto pi_bar = factorized_learn_target(stats, priors, true, config.solver);
    const auto pi_hat = factorized_learn_target(stats, priors, false, config.solver);
    std::vector<std::size_t> joint(space.dims());
    for (std::size_t i = 0; i < space.dims(); ++i) {
      joint[i] = rng.sample(config.flags.act_with_pibar ? pi_bar[i] : pi_hat[i]);
    }
    EpisodeRecord rec{ep, env.reward(joint), 1, 0.0};
    for (std::size_t i = 0; i < space.dims(); ++i) {
      const auto key = static_cast<std::int64_t>(i);
      const ActionDistribution& target = config.flags.learn_with_pibar ? pi_bar[i] : pi_hat[i];
      rec.mean_kl += prior.kl_from(key, target);  // factorized KL sums over dimensions
      prior.learn_step(key, target);
    }
    trace.steps.push_back({ep, 0, rec.mean_kl});
    trace.episodes.push_back(rec);
  }
  return trace;
}

}  // namespace regmcts
