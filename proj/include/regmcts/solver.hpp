#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <fmt/format.h>

#include "regmcts/simplex.hpp"

namespace regmcts {

struct SolverConfig {
  double c = 1.25;  ///< exploration constant
  DivergenceKind kind = DivergenceKind::kReverseKL;
  double bisection_tol = 1e-10;  ///< absolute tolerance on sum(pi_alpha) - 1
  int max_bisection_iters = 128;

  void validate() const {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::domain_error("SolverConfig: c must be > 0");
    if (!(bisection_tol > 0.0)) throw std::domain_error("SolverConfig: bisection_tol must be > 0");
    if (max_bisection_iters < 1) {
      throw std::domain_error("SolverConfig: max_bisection_iters must be >= 1");
    }
  }
};

/// Regularization weight attached to a count vector.
struct Multiplier {
  double value = 0.0;
  std::int64_t total_visits = 0;
  std::size_t num_actions = 0;
};

namespace detail {
inline std::int64_t total_count(std::span<const std::int64_t> counts, const char* who) {
  if (counts.empty()) throw std::domain_error(fmt::format("{}: empty action set", who));
  std::int64_t total = 0;
  for (std::int64_t n : counts) {
    if (n < 0) throw std::domain_error(fmt::format("{}: negative visit count", who));
    total += n;
  }
  return total;
}
}  // namespace detail

/// lambda_N = c * sqrt(N) / (|A| + N) with N the total visit count.
inline Multiplier compute_lambda(double c, std::span<const std::int64_t> visit_counts) {
  if (!(c > 0.0)) throw std::domain_error("compute_lambda: c must be > 0");
  const std::int64_t n = detail::total_count(visit_counts, "compute_lambda");
  const double big_n = static_cast<double>(n);
  const double actions = static_cast<double>(visit_counts.size());
  return {c * std::sqrt(big_n) / (actions + big_n), n, visit_counts.size()};
}

/// lambda_N^UCT = c * sqrt(log N / (|A| + N)). Undefined for N = 0.
inline Multiplier compute_lambda_uct(double c, std::span<const std::int64_t> visit_counts) {
  if (!(c > 0.0)) throw std::domain_error("compute_lambda_uct: c must be > 0");
  const std::int64_t n = detail::total_count(visit_counts, "compute_lambda_uct");
  if (n == 0) throw std::domain_error("compute_lambda_uct: log of zero total visits");
  const double big_n = static_cast<double>(n);
  const double actions = static_cast<double>(visit_counts.size());
  return {c * std::sqrt(std::log(big_n) / (actions + big_n)), n, visit_counts.size()};
}

/// Multiplier matching a divergence: lambda_N^UCT for Hellinger (zero before
/// the first visit), lambda_N otherwise.
inline Multiplier multiplier_for(DivergenceKind kind, double c,
                                 std::span<const std::int64_t> visit_counts) {
  if (kind == DivergenceKind::kHellinger) {
    const std::int64_t n = detail::total_count(visit_counts, "multiplier_for");
    if (n == 0) return {0.0, 0, visit_counts.size()};
    return compute_lambda_uct(c, visit_counts);
  }
  return compute_lambda(c, visit_counts);
}

/// Bisection bookkeeping. alpha values are absolute (not offset by max q).
struct DichotomySearchState {
  double alpha_lo = 0.0;
  double alpha_hi = 0.0;
  double alpha = 0.0;
  double residual = 0.0;  ///< sum(pi_alpha) - 1 at `alpha`
  int iterations = 0;
};

struct PibarSolution {
  ActionDistribution policy;
  DichotomySearchState search;
};

/// Raised when bisection stops without meeting the tolerance.
class SolverConvergenceError : public std::runtime_error {
public:
  SolverConvergenceError(double residual, int iterations)
      : std::runtime_error(fmt::format(
            "regularized policy bisection did not converge after {} iterations (residual {:.3e})",
            iterations, residual)),
        residual_(residual) {}
  [[nodiscard]] double residual() const noexcept { return residual_; }

private:
  double residual_;
};

namespace detail {

inline void validate_problem(std::span<const double> q, const ActionDistribution& prior,
                             const Multiplier& lambda) {
  if (q.empty()) throw std::domain_error("solve_pibar: empty action set");
  if (q.size() != prior.size()) throw std::domain_error("solve_pibar: q and prior size mismatch");
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!std::isfinite(q[a])) {
      throw std::domain_error(fmt::format("solve_pibar: q[{}] is not finite", a));
    }
  }
  if (!prior.is_strictly_positive()) {
    throw std::domain_error("solve_pibar: prior must be strictly positive");
  }
  if (!(lambda.value >= 0.0) || !std::isfinite(lambda.value)) {
    throw std::domain_error("solve_pibar: multiplier must be finite and >= 0");
  }
}

inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < v.size(); ++a) {
    if (v[a] > v[best]) best = a;
  }
  return best;
}

/// pi_alpha with alpha = q_max + delta. Working with the offset keeps full
/// relative precision when lambda (and hence delta) is tiny.
inline void pi_at_offset(std::span<const double> q, const ActionDistribution& prior,
                         double lambda, DivergenceKind kind, double q_max, double delta,
                         std::vector<double>& out) {
  out.resize(q.size());
  for (std::size_t a = 0; a < q.size(); ++a) {
    const double s = ((q[a] - q_max) - delta) / lambda;
    out[a] = prior[a] * generator_derivative_inverse(kind, s);
  }
}

}  // namespace detail

/// Closed form of argmax_y q.y - lambda KL[y, prior]: y proportional to prior * exp(q / lambda).
inline PibarSolution forward_kl_closed_form(std::span<const double> q,
                                            const ActionDistribution& prior,
                                            const Multiplier& lambda) {
  detail::validate_problem(q, prior, lambda);
  if (lambda.value == 0.0) {
    const std::size_t best = detail::argmax_lowest(q);
    return {ActionDistribution::one_hot(q.size(), best), {q[best], q[best], q[best], 0.0, 0}};
  }
  const double q_max = *std::max_element(q.begin(), q.end());
  std::vector<double> w(q.size());
  double total = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    w[a] = prior[a] * std::exp((q[a] - q_max) / lambda.value);
    total += w[a];
  }
  for (double& x : w) x /= total;
  // alpha from q - lambda (log(y / prior) + 1) = alpha.
  const double alpha = q_max + lambda.value * (std::log(total) - 1.0);
  return {ActionDistribution::from_weights(std::move(w)), {alpha, alpha, alpha, 0.0, 0}};
}

/**
 * Regularized policy by dichotomic search on the normalization constant.
 *
 * Solves argmax_y q.y - lambda * D_f(y, prior) over the simplex. Stationarity
 * gives y[a] = prior[a] * (f')^{-1}((q[a] - alpha) / lambda); the total mass
 * is strictly decreasing in alpha and is >= 1 at
 *   alpha_min = max_b q[b] - lambda f'(1 / prior[b])
 * and <= 1 at
 *   alpha_max = max_b q[b] - lambda f'(1).
 * For ReverseKL these are max_b(q[b] + lambda prior[b]) and max_b q[b] + lambda.
 *
 * lambda = 0 yields the greedy one-hot on argmax q (lowest index wins).
 */
inline PibarSolution solve_pibar_bisection(std::span<const double> q,
                                           const ActionDistribution& prior,
                                           const Multiplier& lambda, DivergenceKind kind,
                                           const SolverConfig& config = {}) {
  config.validate();
  detail::validate_problem(q, prior, lambda);
  if (lambda.value == 0.0) {
    const std::size_t best = detail::argmax_lowest(q);
    return {ActionDistribution::one_hot(q.size(), best), {q[best], q[best], q[best], 0.0, 0}};
  }
  const double lam = lambda.value;
  const double q_max = *std::max_element(q.begin(), q.end());

  double lo = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < q.size(); ++b) {
    lo = std::max(lo, (q[b] - q_max) - lam * generator_derivative(kind, 1.0 / prior[b]));
  }
  double hi = -lam * generator_derivative(kind, 1.0);

  std::vector<double> pi;
  auto residual_at = [&](double delta) {
    detail::pi_at_offset(q, prior, lam, kind, q_max, delta, pi);
    return std::accumulate(pi.begin(), pi.end(), 0.0) - 1.0;
  };

  DichotomySearchState state;
  state.alpha_lo = q_max + lo;
  state.alpha_hi = q_max + hi;

  double delta = lo;
  double residual = residual_at(lo);
  if (std::abs(residual) > config.bisection_tol) {
    const double r_hi = residual_at(hi);
    if (std::abs(r_hi) <= config.bisection_tol) {
      delta = hi;
      residual = r_hi;
    } else {
      int it = 0;
      while (it < config.max_bisection_iters) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;  // bracket exhausted at machine precision
        ++it;
        const double r = residual_at(mid);
        delta = mid;
        residual = r;
        if (std::abs(r) <= config.bisection_tol) break;
        if (r > 0.0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      state.iterations = it;
      state.alpha_lo = q_max + lo;
      state.alpha_hi = q_max + hi;
    }
  }
  if (std::abs(residual) > config.bisection_tol) {
    throw SolverConvergenceError(residual, state.iterations);
  }
  residual_at(delta);  // refresh pi for the accepted offset
  state.alpha = q_max + delta;
  state.residual = residual;
  return {ActionDistribution::normalized(pi), state};
}

/// pi_bar_f for any supported divergence. ForwardKL uses its closed form.
inline PibarSolution solve_pibar_f_detailed(std::span<const double> q,
                                            const ActionDistribution& prior,
                                            const Multiplier& lambda, DivergenceKind kind,
                                            const SolverConfig& config = {}) {
  if (kind == DivergenceKind::kForwardKL) return forward_kl_closed_form(q, prior, lambda);
  return solve_pibar_bisection(q, prior, lambda, kind, config);
}

inline ActionDistribution solve_pibar_f(std::span<const double> q, const ActionDistribution& prior,
                                        const Multiplier& lambda, DivergenceKind kind,
                                        const SolverConfig& config = {}) {
  return solve_pibar_f_detailed(q, prior, lambda, kind, config).policy;
}

/// pi_bar = lambda * prior / (alpha - q), the maximizer of q.y - lambda KL[prior, y].
inline ActionDistribution solve_pibar(std::span<const double> q, const ActionDistribution& prior,
                                      const Multiplier& lambda, const SolverConfig& config = {}) {
  return solve_pibar_bisection(q, prior, lambda, DivergenceKind::kReverseKL, config).policy;
}

/// Spread of s[a] = q[a] - lambda f'(candidate[a] / prior[a]) around its mean.
/// Zero exactly at the regularized solution.
inline double kkt_residual(std::span<const double> q, const ActionDistribution& prior,
                           const Multiplier& lambda, const ActionDistribution& candidate,
                           DivergenceKind kind) {
  if (q.size() != prior.size() || candidate.size() != prior.size()) {
    throw std::domain_error("kkt_residual: size mismatch");
  }
  if (!candidate.is_strictly_positive()) {
    throw std::domain_error("kkt_residual: candidate must be strictly positive");
  }
  std::vector<double> s(q.size());
  for (std::size_t a = 0; a < q.size(); ++a) {
    s[a] = q[a] - lambda.value * generator_derivative(kind, candidate[a] / prior[a]);
  }
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  double worst = 0.0;
  for (double x : s) worst = std::max(worst, std::abs(x - mean));
  return worst;
}

}  // namespace regmcts
