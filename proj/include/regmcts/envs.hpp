#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "regmcts/rng.hpp"
#include "regmcts/simplex.hpp"
#include "regmcts/solver.hpp"
#include "regmcts/tree.hpp"

namespace regmcts {

// ---------------------------------------------------------------------------
// Bandit
// ---------------------------------------------------------------------------

/// One-step bandit: pulling arm a pays true_values[a] and ends the episode.
class BanditEnv {
public:
  using State = int;  // 0 = start, 1 = done
  static constexpr State kStart = 0;
  static constexpr State kDone = 1;

  explicit BanditEnv(std::vector<double> true_values) : values_(std::move(true_values)) {
    if (values_.empty()) throw std::domain_error("BanditEnv: needs at least one arm");
    for (double v : values_) {
      if (!std::isfinite(v)) throw std::domain_error("BanditEnv: non-finite arm value");
    }
  }

  /// Arm values drawn i.i.d. from U[0, 1].
  static BanditEnv random(std::size_t arms, Rng& rng) {
    std::vector<double> v(arms);
    for (double& x : v) x = rng.uniform();
    return BanditEnv(std::move(v));
  }

  [[nodiscard]] std::size_t num_actions() const noexcept { return values_.size(); }
  [[nodiscard]] std::span<const double> true_values() const noexcept { return values_; }
  [[nodiscard]] State initial_state() const noexcept { return kStart; }
  [[nodiscard]] bool is_terminal(State s) const noexcept { return s == kDone; }
  [[nodiscard]] int horizon() const noexcept { return 1; }
  [[nodiscard]] double discount() const noexcept { return 1.0; }
  [[nodiscard]] std::int64_t state_key(State s) const noexcept { return s; }

  [[nodiscard]] Transition<State> step(State s, std::size_t action) const {
    if (s != kStart) throw std::logic_error("BanditEnv: episode already finished");
    return {kDone, values_.at(action), true};
  }

  /// Optimal value at the start state.
  [[nodiscard]] double value_estimate(State s) const noexcept {
    return s == kStart ? *std::max_element(values_.begin(), values_.end()) : 0.0;
  }

  [[nodiscard]] std::size_t best_arm() const noexcept {
    return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) -
                                    values_.begin());
  }

private:
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Chain
// ---------------------------------------------------------------------------

/**
 * Positions 0..length, start at 0, terminal at `length`. Action 1 moves
 * right, action 0 moves left (staying put at 0). Entering the terminal pays
 * 1, every other transition pays 0. Episodes are cut after `horizon` steps;
 * the reported return is the undiscounted reward sum, while `discount`
 * applies to values used by search.
 */
class ChainMDP {
public:
  using State = int;
  static constexpr std::size_t kLeft = 0;
  static constexpr std::size_t kRight = 1;

  explicit ChainMDP(int length = 10, double discount = 0.95, int horizon = 0)
      : length_(length), discount_(discount), horizon_(horizon > 0 ? horizon : 2 * length) {
    if (length < 1) throw std::domain_error("ChainMDP: length must be >= 1");
    if (!(discount > 0.0 && discount <= 1.0)) {
      throw std::domain_error("ChainMDP: discount must lie in (0, 1]");
    }
    values_ = solve_optimal_values();
  }

  [[nodiscard]] std::size_t num_actions() const noexcept { return 2; }
  [[nodiscard]] int length() const noexcept { return length_; }
  [[nodiscard]] State initial_state() const noexcept { return 0; }
  [[nodiscard]] bool is_terminal(State s) const noexcept { return s >= length_; }
  [[nodiscard]] int horizon() const noexcept { return horizon_; }
  [[nodiscard]] double discount() const noexcept { return discount_; }
  [[nodiscard]] std::int64_t state_key(State s) const noexcept { return s; }

  [[nodiscard]] Transition<State> step(State s, std::size_t action) const {
    if (s < 0 || s >= length_) throw std::logic_error("ChainMDP: step from invalid state");
    if (action == kRight) {
      const State next = s + 1;
      return {next, next == length_ ? 1.0 : 0.0, next == length_};
    }
    if (action == kLeft) return {std::max(s - 1, 0), 0.0, false};
    throw std::out_of_range("ChainMDP: bad action");
  }

  /// Optimal discounted value (no horizon cut), from dynamic programming.
  [[nodiscard]] double value_estimate(State s) const { return values_.at(static_cast<std::size_t>(s)); }
  [[nodiscard]] std::span<const double> optimal_values() const noexcept { return values_; }

  /// Best achievable undiscounted return within the horizon.
  [[nodiscard]] double optimal_return() const noexcept { return horizon_ >= length_ ? 1.0 : 0.0; }

private:
  std::vector<double> solve_optimal_values() const {
    std::vector<double> v(static_cast<std::size_t>(length_) + 1, 0.0);
    for (int sweep = 0; sweep < 100000; ++sweep) {
      double change = 0.0;
      for (State s = 0; s < length_; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < 2; ++a) {
          const Transition<State> t = step(s, a);
          const double cont = t.terminal ? 0.0 : v[static_cast<std::size_t>(t.next)];
          best = std::max(best, t.reward + discount_ * cont);
        }
        change = std::max(change, std::abs(best - v[static_cast<std::size_t>(s)]));
        v[static_cast<std::size_t>(s)] = best;
      }
      if (change < 1e-14) break;
    }
    return v;
  }

  int length_;
  double discount_;
  int horizon_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Factorized (discretized continuous) actions
// ---------------------------------------------------------------------------

/// m dimensions, each discretized into K atoms evenly spaced on [-1, 1].
class FactorizedActionSpace {
public:
  FactorizedActionSpace(std::size_t dims, std::size_t bins) : dims_(dims), bins_(bins) {
    if (dims == 0 || bins == 0) throw std::domain_error("FactorizedActionSpace: m, K must be >= 1");
    double count = 1.0;
    for (std::size_t i = 0; i < dims; ++i) count *= static_cast<double>(bins);
    if (count > 1e9) throw std::domain_error("FactorizedActionSpace: joint space too large");
  }

  [[nodiscard]] std::size_t dims() const noexcept { return dims_; }
  [[nodiscard]] std::size_t bins() const noexcept { return bins_; }
  [[nodiscard]] std::size_t effective_branching() const noexcept { return dims_ * bins_; }

  [[nodiscard]] std::size_t joint_count() const noexcept {
    std::size_t c = 1;
    for (std::size_t i = 0; i < dims_; ++i) c *= bins_;
    return c;
  }

  [[nodiscard]] double atom(std::size_t k) const {
    if (k >= bins_) throw std::out_of_range("FactorizedActionSpace::atom");
    if (bins_ == 1) return 0.0;
    return -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(bins_ - 1);
  }

  /// Continuous action vector for a joint index tuple.
  [[nodiscard]] std::vector<double> continuous(std::span<const std::size_t> joint) const {
    check(joint);
    std::vector<double> x(dims_);
    for (std::size_t i = 0; i < dims_; ++i) x[i] = atom(joint[i]);
    return x;
  }

  /// Row-major flat index, dimension 0 most significant.
  [[nodiscard]] std::size_t encode(std::span<const std::size_t> joint) const {
    check(joint);
    std::size_t idx = 0;
    for (std::size_t k : joint) idx = idx * bins_ + k;
    return idx;
  }

  [[nodiscard]] std::vector<std::size_t> decode(std::size_t index) const {
    if (index >= joint_count()) throw std::out_of_range("FactorizedActionSpace::decode");
    std::vector<std::size_t> joint(dims_);
    for (std::size_t i = dims_; i-- > 0;) {
      joint[i] = index % bins_;
      index /= bins_;
    }
    return joint;
  }

private:
  void check(std::span<const std::size_t> joint) const {
    if (joint.size() != dims_) throw std::domain_error("FactorizedActionSpace: dimension mismatch");
    for (std::size_t k : joint) {
      if (k >= bins_) throw std::out_of_range("FactorizedActionSpace: bin out of range");
    }
  }

  std::size_t dims_;
  std::size_t bins_;
};

/**
 * m marginal Q-tables and count tables of K entries each, standing in for
 * a K^m joint table at one node.
 *
 * Each backup folds the same target into one entry per dimension as a
 * running mean, so Q_i(a_i) is the visit-weighted marginal of the joint
 * table and every dimension's counts sum to the number of backups.
 */
class FactorizedNodeStats {
public:
  explicit FactorizedNodeStats(FactorizedActionSpace space)
      : space_(space),
        q_(space.dims() * space.bins(), 0.0),
        n_(space.dims() * space.bins(), 0) {}

  [[nodiscard]] const FactorizedActionSpace& space() const noexcept { return space_; }
  [[nodiscard]] std::size_t dims() const noexcept { return space_.dims(); }
  [[nodiscard]] std::size_t bins() const noexcept { return space_.bins(); }

  [[nodiscard]] std::span<const double> q(std::size_t dim) const {
    return std::span<const double>(q_).subspan(offset(dim), bins());
  }
  [[nodiscard]] std::span<const std::int64_t> counts(std::size_t dim) const {
    return std::span<const std::int64_t>(n_).subspan(offset(dim), bins());
  }
  [[nodiscard]] std::int64_t total_visits(std::size_t dim) const {
    const auto c = counts(dim);
    return std::accumulate(c.begin(), c.end(), std::int64_t{0});
  }

  [[nodiscard]] bool has_bounds() const noexcept { return q_min_ <= q_max_; }

  /// Selection Q for one dimension: unvisited entries read the running
  /// minimum, then everything is min-max rescaled (0.5 when flat).
  [[nodiscard]] std::vector<double> normalized_q(std::size_t dim) const {
    const auto qs = q(dim);
    const auto ns = counts(dim);
    std::vector<double> out(bins(), 0.5);
    if (!has_bounds() || !(q_max_ > q_min_)) return out;
    for (std::size_t k = 0; k < bins(); ++k) {
      const double raw = ns[k] == 0 ? q_min_ : qs[k];
      out[k] = (raw - q_min_) / (q_max_ - q_min_);
    }
    return out;
  }

  void record(std::span<const std::size_t> joint, double target) {
    if (joint.size() != dims()) throw std::domain_error("factorized_backup: dimension mismatch");
    if (!std::isfinite(target)) throw std::domain_error("factorized_backup: non-finite target");
    for (std::size_t i = 0; i < dims(); ++i) {
      if (joint[i] >= bins()) throw std::out_of_range("factorized_backup: bin out of range");
    }
    for (std::size_t i = 0; i < dims(); ++i) {
      const std::size_t idx = offset(i) + joint[i];
      n_[idx] += 1;
      q_[idx] += (target - q_[idx]) / static_cast<double>(n_[idx]);
      q_min_ = std::min(q_min_, q_[idx]);
      q_max_ = std::max(q_max_, q_[idx]);
    }
  }

private:
  [[nodiscard]] std::size_t offset(std::size_t dim) const {
    if (dim >= dims()) throw std::out_of_range("FactorizedNodeStats: bad dimension");
    return dim * bins();
  }

  FactorizedActionSpace space_;
  std::vector<double> q_;
  std::vector<std::int64_t> n_;
  double q_min_ = std::numeric_limits<double>::infinity();
  double q_max_ = -std::numeric_limits<double>::infinity();
};

namespace detail {
inline void check_factorized_priors(const FactorizedNodeStats& stats,
                                    std::span<const ActionDistribution> priors) {
  if (priors.size() != stats.dims()) {
    throw std::domain_error(fmt::format("factorized: {} priors for {} dimensions", priors.size(),
                                        stats.dims()));
  }
  for (const ActionDistribution& p : priors) {
    if (p.size() != stats.bins()) throw std::domain_error("factorized: prior has wrong bin count");
    if (!p.is_strictly_positive()) throw std::domain_error("factorized: prior must be > 0");
  }
}

inline NodeStats dimension_view(const FactorizedNodeStats& stats, std::size_t dim,
                                const ActionDistribution& prior) {
  NodeStats view(prior, 0.0, 0.0);
  const auto q = stats.q(dim);
  const auto n = stats.counts(dim);
  view.q.assign(q.begin(), q.end());
  view.n.assign(n.begin(), n.end());
  return view;
}
}  // namespace detail

/// Joint action whose components are chosen independently by `rule`
/// applied to each dimension's tables.
inline std::vector<std::size_t> factorized_select(const FactorizedNodeStats& stats,
                                                  std::span<const ActionDistribution> priors,
                                                  SelectionRule rule, Rng& rng,
                                                  const SolverConfig& solver = {}) {
  detail::check_factorized_priors(stats, priors);
  std::vector<std::size_t> joint(stats.dims());
  for (std::size_t i = 0; i < stats.dims(); ++i) {
    const NodeStats view = detail::dimension_view(stats, i, priors[i]);
    const std::vector<double> q_norm = stats.normalized_q(i);
    switch (rule) {
      case SelectionRule::kAlphaZeroPUCT:
        joint[i] = select_action_alphazero(view, solver.c, q_norm);
        break;
      case SelectionRule::kPriorUCT:
        joint[i] = select_action_uct(view, solver.c, q_norm);
        break;
      case SelectionRule::kPibarSampling:
        joint[i] = select_action_pibar(view, multiplier_for(solver.kind, solver.c, view.n), q_norm,
                                       rng, solver);
        break;
    }
  }
  return joint;
}

/// Folds R(x, a) + gamma * V(child) into the entry a_i of every dimension.
inline void factorized_backup(FactorizedNodeStats& stats, std::span<const std::size_t> joint,
                              double reward, double child_value, double discount) {
  stats.record(joint, reward + discount * child_value);
}

/// Per-dimension learning targets: pi_bar_i when `learn_with_pibar`, else pi_hat_i.
inline std::vector<ActionDistribution> factorized_learn_target(
    const FactorizedNodeStats& stats, std::span<const ActionDistribution> priors,
    bool learn_with_pibar, const SolverConfig& solver = {}) {
  detail::check_factorized_priors(stats, priors);
  std::vector<ActionDistribution> targets;
  targets.reserve(stats.dims());
  for (std::size_t i = 0; i < stats.dims(); ++i) {
    const auto n = stats.counts(i);
    if (learn_with_pibar) {
      targets.push_back(solve_pibar_f(stats.normalized_q(i), priors[i],
                                      multiplier_for(solver.kind, solver.c, n), solver.kind,
                                      solver));
    } else {
      targets.push_back(empirical_visits(n));
    }
  }
  return targets;
}

/// Product of per-dimension marginals over the joint index of `space`.
inline ActionDistribution product_distribution(const FactorizedActionSpace& space,
                                               std::span<const ActionDistribution> marginals) {
  if (marginals.size() != space.dims()) throw std::domain_error("product_distribution: dims");
  std::vector<double> w(space.joint_count());
  for (std::size_t j = 0; j < w.size(); ++j) {
    const std::vector<std::size_t> joint = space.decode(j);
    double p = 1.0;
    for (std::size_t i = 0; i < joint.size(); ++i) p *= marginals[i][joint[i]];
    w[j] = p;
  }
  return ActionDistribution::normalized(w);
}

/// One-step bandit over a factorized action space. The reward is additive
/// across dimensions plus an optional coupling term per joint action.
class FactorizedBanditEnv {
public:
  FactorizedBanditEnv(FactorizedActionSpace space, std::vector<std::vector<double>> per_dim,
                      std::vector<double> coupling = {})
      : space_(space), per_dim_(std::move(per_dim)), coupling_(std::move(coupling)) {
    if (per_dim_.size() != space_.dims()) throw std::domain_error("FactorizedBanditEnv: dims");
    for (const auto& row : per_dim_) {
      if (row.size() != space_.bins()) throw std::domain_error("FactorizedBanditEnv: bins");
    }
    if (!coupling_.empty() && coupling_.size() != space_.joint_count()) {
      throw std::domain_error("FactorizedBanditEnv: coupling table size");
    }
  }

  /// Per-dimension terms from U[0, 1/m]; coupling from U[0, coupling_scale].
  static FactorizedBanditEnv random(FactorizedActionSpace space, Rng& rng,
                                    double coupling_scale = 0.0) {
    std::vector<std::vector<double>> per_dim(space.dims(), std::vector<double>(space.bins()));
    for (auto& row : per_dim) {
      for (double& x : row) x = rng.uniform() / static_cast<double>(space.dims());
    }
    std::vector<double> coupling;
    if (coupling_scale > 0.0) {
      coupling.resize(space.joint_count());
      for (double& x : coupling) x = coupling_scale * rng.uniform();
    }
    return FactorizedBanditEnv(space, std::move(per_dim), std::move(coupling));
  }

  [[nodiscard]] const FactorizedActionSpace& space() const noexcept { return space_; }

  [[nodiscard]] double reward(std::span<const std::size_t> joint) const {
    const std::size_t idx = space_.encode(joint);
    double r = coupling_.empty() ? 0.0 : coupling_[idx];
    for (std::size_t i = 0; i < joint.size(); ++i) r += per_dim_[i][joint[i]];
    return r;
  }

  /// Flattened joint table, usable as a plain BanditEnv.
  [[nodiscard]] BanditEnv as_joint_bandit() const {
    std::vector<double> v(space_.joint_count());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = reward(space_.decode(j));
    return BanditEnv(std::move(v));
  }

  [[nodiscard]] double optimal_return() const {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < space_.joint_count(); ++j) best = std::max(best, reward(space_.decode(j)));
    return best;
  }

private:
  FactorizedActionSpace space_;
  std::vector<std::vector<double>> per_dim_;
  std::vector<double> coupling_;
};

}  // namespace regmcts
