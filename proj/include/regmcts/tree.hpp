#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "regmcts/rng.hpp"
#include "regmcts/simplex.hpp"
#include "regmcts/solver.hpp"

namespace regmcts {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

enum class SelectionRule { kAlphaZeroPUCT, kPriorUCT, kPibarSampling };

inline std::string_view to_string(SelectionRule rule) {
  switch (rule) {
    case SelectionRule::kAlphaZeroPUCT: return "alphazero";
    case SelectionRule::kPriorUCT: return "uct";
    case SelectionRule::kPibarSampling: return "pibar";
  }
  return "unknown";
}

/// Per-node search statistics.
struct NodeStats {
  std::vector<double> q;        ///< Q(x, a); pessimistic init until first visit
  std::vector<std::int64_t> n;  ///< n(x, a)
  double v = 0.0;               ///< V(x)
  std::vector<double> r;        ///< R(x, a), set when the child is expanded
  ActionDistribution prior;     ///< pi_theta(. | x)
  std::vector<NodeId> children; ///< kNoNode where unexpanded

  NodeStats() = default;
  NodeStats(ActionDistribution p, double value, double q_init)
      : q(p.size(), q_init),
        n(p.size(), 0),
        v(value),
        r(p.size(), 0.0),
        prior(std::move(p)),
        children(prior.size(), kNoNode) {}

  [[nodiscard]] std::size_t num_actions() const noexcept { return prior.size(); }
  [[nodiscard]] std::int64_t total_visits() const noexcept {
    return std::accumulate(n.begin(), n.end(), std::int64_t{0});
  }
};

/// Empirical visit distribution (1 + n(a)) / (|A| + sum_b n(b)).
inline ActionDistribution empirical_visits(std::span<const std::int64_t> counts) {
  if (counts.empty()) throw std::domain_error("empirical_visits: empty action set");
  const double denom = static_cast<double>(counts.size()) +
                       static_cast<double>(std::accumulate(counts.begin(), counts.end(),
                                                           std::int64_t{0}));
  std::vector<double> w(counts.size());
  for (std::size_t a = 0; a < counts.size(); ++a) {
    w[a] = (1.0 + static_cast<double>(counts[a])) / denom;
  }
  return ActionDistribution::from_weights(std::move(w), ActionDistribution::Positivity::kStrict);
}

namespace detail {
inline std::size_t argmax_first(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < scores.size(); ++a) {
    if (scores[a] > scores[best]) best = a;
  }
  return best;
}

inline void check_selection_inputs(const NodeStats& node, std::span<const double> q_norm) {
  if (q_norm.size() != node.num_actions() || node.n.size() != node.num_actions()) {
    throw std::domain_error("selection: statistics size mismatch");
  }
}
}  // namespace detail

/// q_norm[a] + c * prior[a] * sqrt(sum_b n[b]) / (1 + n[a]).
inline std::vector<double> puct_scores(const NodeStats& node, double c,
                                       std::span<const double> q_norm) {
  detail::check_selection_inputs(node, q_norm);
  const double root_n = std::sqrt(static_cast<double>(node.total_visits()));
  std::vector<double> s(q_norm.size());
  for (std::size_t a = 0; a < s.size(); ++a) {
    s[a] = q_norm[a] + c * node.prior[a] * root_n / (1.0 + static_cast<double>(node.n[a]));
  }
  return s;
}

inline std::size_t select_action_alphazero(const NodeStats& node, double c,
                                           std::span<const double> q_norm) {
  return detail::argmax_first(puct_scores(node, c, q_norm));
}

/// q_norm[a] + c * sqrt(prior[a] * log(sum_b n[b]) / (1 + n[a])). Requires at
/// least one visit; callers fall back to argmax prior before that.
inline std::vector<double> uct_scores(const NodeStats& node, double c,
                                      std::span<const double> q_norm) {
  detail::check_selection_inputs(node, q_norm);
  const std::int64_t total = node.total_visits();
  if (total < 1) throw std::domain_error("uct_scores: needs at least one visit");
  const double log_n = std::log(static_cast<double>(total));
  std::vector<double> s(q_norm.size());
  for (std::size_t a = 0; a < s.size(); ++a) {
    s[a] = q_norm[a] +
           c * std::sqrt(node.prior[a] * log_n / (1.0 + static_cast<double>(node.n[a])));
  }
  return s;
}

inline std::size_t select_action_uct(const NodeStats& node, double c,
                                     std::span<const double> q_norm) {
  if (node.total_visits() == 0) return detail::argmax_first(node.prior.probs());
  return detail::argmax_first(uct_scores(node, c, q_norm));
}

/// q[a] - lambda * f'(pi_hat[a] / prior[a]). With ReverseKL and lambda_N this
/// is the PUCT score up to rounding; with Hellinger and lambda_N^UCT it is
/// the prior-weighted UCT score.
inline std::vector<double> f_selection_scores(std::span<const double> q,
                                              const ActionDistribution& prior,
                                              std::span<const std::int64_t> counts,
                                              const Multiplier& lambda, DivergenceKind kind) {
  if (q.size() != prior.size() || counts.size() != prior.size()) {
    throw std::domain_error("f_selection_scores: size mismatch");
  }
  const ActionDistribution pi_hat = empirical_visits(counts);
  std::vector<double> s(q.size());
  for (std::size_t a = 0; a < s.size(); ++a) {
    s[a] = q[a] - lambda.value * generator_derivative(kind, pi_hat[a] / prior[a]);
  }
  return s;
}

inline std::size_t select_action_f(std::span<const double> q, const ActionDistribution& prior,
                                   std::span<const std::int64_t> counts, const Multiplier& lambda,
                                   DivergenceKind kind) {
  return detail::argmax_first(f_selection_scores(q, prior, counts, lambda, kind));
}

/// Samples from the regularized policy at the node.
inline std::size_t select_action_pibar(const NodeStats& node, const Multiplier& lambda,
                                       std::span<const double> q_norm, Rng& rng,
                                       const SolverConfig& solver = {}) {
  detail::check_selection_inputs(node, q_norm);
  return rng.sample(solve_pibar_f(q_norm, node.prior, lambda, solver.kind, solver));
}

// ---------------------------------------------------------------------------
// Search tree
// ---------------------------------------------------------------------------

struct Evaluation {
  ActionDistribution prior;
  double value = 0.0;
};

template <class State>
struct Transition {
  State next;
  double reward = 0.0;
  bool terminal = false;
};

struct PathStep {
  NodeId node;
  std::size_t action;
};

/**
 * Arena-backed search tree over states of a deterministic model.
 *
 * Tracks the running extremes of every Q value written by a backup; those
 * drive the min-max normalization and the pessimistic value given to
 * unvisited actions. Owned by a single search.
 */
template <class State>
class SearchTree {
public:
  struct Node {
    NodeStats stats;
    State state;
    bool terminal = false;
  };

  explicit SearchTree(double discount = 1.0) : discount_(discount) {
    if (!(discount > 0.0 && discount <= 1.0)) {
      throw std::domain_error("SearchTree: discount must lie in (0, 1]");
    }
  }

  [[nodiscard]] double discount() const noexcept { return discount_; }
  [[nodiscard]] NodeId root() const noexcept { return root_; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  [[nodiscard]] const Node& node(NodeId id) const { return nodes_.at(id); }
  [[nodiscard]] const NodeStats& stats(NodeId id) const { return nodes_.at(id).stats; }

  [[nodiscard]] bool has_bounds() const noexcept { return q_min_ <= q_max_; }
  [[nodiscard]] double q_min() const noexcept { return q_min_; }
  [[nodiscard]] double q_max() const noexcept { return q_max_; }

  /// Tree-wide minimum Q; zero before the first backup.
  [[nodiscard]] double pessimistic_value() const noexcept { return has_bounds() ? q_min_ : 0.0; }

  /// Min-max rescaling into [0, 1]. A flat (or empty) tree maps everything to 0.5.
  [[nodiscard]] std::vector<double> normalize_q(std::span<const double> q_raw) const {
    std::vector<double> out(q_raw.size(), 0.5);
    if (!has_bounds() || !(q_max_ > q_min_)) return out;
    const double span = q_max_ - q_min_;
    for (std::size_t a = 0; a < q_raw.size(); ++a) {
      out[a] = std::clamp((q_raw[a] - q_min_) / span, 0.0, 1.0);
    }
    return out;
  }

  /// Q values used for selection: unvisited actions read the current
  /// pessimistic value, so they track the running minimum.
  [[nodiscard]] std::vector<double> search_q(NodeId id) const {
    const NodeStats& s = stats(id);
    std::vector<double> q = s.q;
    const double pessimistic = pessimistic_value();
    for (std::size_t a = 0; a < q.size(); ++a) {
      if (s.n[a] == 0) q[a] = pessimistic;
    }
    return q;
  }

  NodeId add_root(State state, Evaluation eval) {
    if (root_ != kNoNode) throw std::logic_error("SearchTree: root already present");
    root_ = push_node(std::move(state), std::move(eval), false);
    return root_;
  }

  /// Creates the child reached by `action` from `leaf`.
  NodeId expand(NodeId leaf, std::size_t action, Transition<State> transition, Evaluation eval) {
    Node& parent = nodes_.at(leaf);
    if (action >= parent.stats.num_actions()) throw std::out_of_range("expand: bad action");
    if (parent.stats.children[action] != kNoNode) {
      throw std::logic_error(fmt::format("expand: action {} already has a child", action));
    }
    if (!std::isfinite(transition.reward)) throw std::domain_error("expand: non-finite reward");
    const NodeId child = push_node(std::move(transition.next), std::move(eval), transition.terminal);
    // push_node may reallocate; re-fetch the parent.
    nodes_[leaf].stats.children[action] = child;
    nodes_[leaf].stats.r[action] = transition.reward;
    return child;
  }

  /**
   * Bottom-up update along `path` (root first). For each (x, a):
   *   target  = R(x, a) + gamma * V(child(x, a))
   *   V(x)    = (V(x) * sum_b n(x, b) + target) / (1 + sum_b n(x, b))
   *   Q(x, a) = target
   *   n(x, a) += 1
   * The deepest child's value is `leaf_value`. An empty path only sets V(root).
   */
  void backup(std::span<const PathStep> path, double leaf_value) {
    if (!std::isfinite(leaf_value)) throw std::domain_error("backup: non-finite leaf value");
    if (path.empty()) {
      nodes_.at(root_).stats.v = leaf_value;
      return;
    }
    double child_value = leaf_value;
    for (std::size_t i = path.size(); i-- > 0;) {
      NodeStats& s = nodes_.at(path[i].node).stats;
      const std::size_t a = path[i].action;
      if (i + 1 < path.size()) child_value = nodes_.at(s.children.at(a)).stats.v;
      const double target = s.r[a] + discount_ * child_value;
      const double visits = static_cast<double>(s.total_visits());
      s.v = (s.v * visits + target) / (1.0 + visits);
      s.q[a] = target;
      s.n[a] += 1;
      q_min_ = std::min(q_min_, target);
      q_max_ = std::max(q_max_, target);
    }
  }

private:
  NodeId push_node(State state, Evaluation eval, bool terminal) {
    if (!std::isfinite(eval.value)) throw std::domain_error("expand: evaluator value is not finite");
    if (!eval.prior.is_strictly_positive()) {
      throw std::domain_error("expand: evaluator prior must be strictly positive");
    }
    if (nodes_.size() >= kNoNode) throw std::length_error("SearchTree: node limit reached");
    nodes_.push_back({NodeStats(std::move(eval.prior), eval.value, pessimistic_value()),
                      std::move(state), terminal});
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  double discount_;
  NodeId root_ = kNoNode;
  std::vector<Node> nodes_;
  double q_min_ = std::numeric_limits<double>::infinity();
  double q_max_ = -std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// run_search
// ---------------------------------------------------------------------------

struct SearchConfig {
  int n_sim = 50;
  SelectionRule selection = SelectionRule::kAlphaZeroPUCT;
  SolverConfig solver;
  std::uint64_t rng_seed = 0;
  double discount = 1.0;
  /// Solve pi_bar on min-max normalized Q (default) or on raw search Q.
  bool normalize_for_solver = true;

  void validate() const {
    if (n_sim < 1) throw std::domain_error("SearchConfig: n_sim must be >= 1");
    solver.validate();
  }
};

struct SearchResult {
  std::vector<double> root_q;       ///< raw search Q at the root (pessimistic where unvisited)
  std::vector<double> root_q_norm;  ///< the Q vector handed to the solver
  std::vector<std::int64_t> root_n;
  ActionDistribution pi_hat;
  ActionDistribution pi_bar;
  Multiplier lambda;
  double value = 0.0;
  std::size_t num_nodes = 0;
};

/// Everything a selection saw, for invariant checks.
struct SelectionEvent {
  const NodeStats& node;
  std::span<const double> q_norm;    ///< normalized Q used by PUCT / UCT
  std::span<const double> q_solver;  ///< Q used for pi_bar
  std::size_t action;
};

using SelectionObserver = std::function<void(const SelectionEvent&)>;

class SearchError : public std::runtime_error {
public:
  SearchError(int simulation, const std::string& what)
      : std::runtime_error(fmt::format("simulation {}: {}", simulation, what)),
        simulation_(simulation) {}
  [[nodiscard]] int simulation() const noexcept { return simulation_; }

private:
  int simulation_;
};

template <class M>
concept SearchModel = requires(const M& m, const typename M::State& s, std::size_t a) {
  { m.num_actions() } -> std::convertible_to<std::size_t>;
  { m.step(s, a) } -> std::same_as<Transition<typename M::State>>;
  { m.is_terminal(s) } -> std::convertible_to<bool>;
};

/**
 * Runs `config.n_sim` simulations from `root_state`.
 *
 * The first simulation evaluates and creates the root; each later one
 * selects down the tree, expands one new child (or stops at a terminal
 * child, whose value is 0) and backs up. The root therefore ends with
 * n_sim - 1 visits, and with n_sim = 1 the visit distribution is uniform.
 */
template <SearchModel Model, class Evaluator>
  requires std::invocable<Evaluator&, const typename Model::State&>
SearchResult run_search(const Model& model, const typename Model::State& root_state,
                        const SearchConfig& config, Evaluator&& evaluator,
                        const SelectionObserver& observer = {}) {
  using State = typename Model::State;
  config.validate();
  if (model.is_terminal(root_state)) throw std::domain_error("run_search: root is terminal");
  const std::size_t num_actions = model.num_actions();
  Rng rng(config.rng_seed);
  SearchTree<State> tree(config.discount);

  auto solver_q = [&](const std::vector<double>& raw, const std::vector<double>& normed) {
    return config.normalize_for_solver ? normed : raw;
  };

  for (int sim = 0; sim < config.n_sim; ++sim) {
    try {
      if (sim == 0) {
        Evaluation eval = evaluator(root_state);
        if (eval.prior.size() != num_actions) throw std::domain_error("evaluator prior size");
        tree.add_root(root_state, std::move(eval));
        tree.backup({}, tree.stats(tree.root()).v);
        continue;
      }
      std::vector<PathStep> path;
      NodeId current = tree.root();
      double leaf_value = 0.0;
      for (;;) {
        const NodeStats& stats = tree.stats(current);
        const std::vector<double> q_raw = tree.search_q(current);
        const std::vector<double> q_norm = tree.normalize_q(q_raw);
        const std::vector<double> q_sol = solver_q(q_raw, q_norm);
        std::size_t action = 0;
        switch (config.selection) {
          case SelectionRule::kAlphaZeroPUCT:
            action = select_action_alphazero(stats, config.solver.c, q_norm);
            break;
          case SelectionRule::kPriorUCT:
            action = select_action_uct(stats, config.solver.c, q_norm);
            break;
          case SelectionRule::kPibarSampling:
            action = select_action_pibar(
                stats, multiplier_for(config.solver.kind, config.solver.c, stats.n), q_sol, rng,
                config.solver);
            break;
        }
        if (observer) observer(SelectionEvent{stats, q_norm, q_sol, action});
        path.push_back({current, action});
        const NodeId child = stats.children[action];
        if (child == kNoNode) {
          Transition<State> t = model.step(tree.node(current).state, action);
          Evaluation eval;
          if (t.terminal) {
            eval = {ActionDistribution::uniform(num_actions), 0.0};
          } else {
            eval = evaluator(t.next);
            if (eval.prior.size() != num_actions) throw std::domain_error("evaluator prior size");
          }
          leaf_value = eval.value;
          tree.expand(current, action, std::move(t), std::move(eval));
          break;
        }
        if (tree.node(child).terminal) {
          leaf_value = 0.0;
          break;
        }
        current = child;
      }
      tree.backup(path, leaf_value);
    } catch (const SearchError&) {
      throw;
    } catch (const std::exception& e) {
      throw SearchError(sim, e.what());
    }
  }

  const NodeStats& root = tree.stats(tree.root());
  SearchResult result;
  result.root_q = tree.search_q(tree.root());
  result.root_q_norm = solver_q(result.root_q, tree.normalize_q(result.root_q));
  result.root_n = root.n;
  result.pi_hat = empirical_visits(root.n);
  result.lambda = multiplier_for(config.solver.kind, config.solver.c, root.n);
  result.pi_bar =
      solve_pibar_f(result.root_q_norm, root.prior, result.lambda, config.solver.kind, config.solver);
  result.value = root.v;
  result.num_nodes = tree.size();
  return result;
}

}  // namespace regmcts
