#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

namespace regmcts {

/// Absolute tolerance on the total mass of a stored distribution.
inline constexpr double kSimplexTolerance = 1e-9;

/// Inputs whose mass is off by at most this much are renormalized on
/// construction; anything further off is rejected.
inline constexpr double kRenormalizeTolerance = 1e-6;

/**
 * Probability vector over a finite action set.
 *
 * Immutable once built. The factories validate the weights: they must be
 * finite, non-negative and sum to one up to kRenormalizeTolerance (small
 * drift is renormalized away). `prior()` additionally requires every weight
 * to be strictly positive, which the selection rules and the regularized
 * solver rely on.
 */
class ActionDistribution {
public:
  enum class Positivity { kNonNegative, kStrict };

  ActionDistribution() = default;

  static ActionDistribution from_weights(std::vector<double> weights,
                                         Positivity positivity = Positivity::kNonNegative) {
    if (weights.empty()) throw std::domain_error("ActionDistribution: empty action set");
    double total = 0.0;
    for (std::size_t a = 0; a < weights.size(); ++a) {
      const double w = weights[a];
      if (!std::isfinite(w)) {
        throw std::domain_error(fmt::format("ActionDistribution: weight {} is not finite", a));
      }
      if (w < 0.0) {
        throw std::domain_error(fmt::format("ActionDistribution: weight {} is negative ({})", a, w));
      }
      if (positivity == Positivity::kStrict && !(w > 0.0)) {
        throw std::domain_error(
            fmt::format("ActionDistribution: prior weight {} must be strictly positive", a));
      }
      total += w;
    }
    if (std::abs(total - 1.0) > kRenormalizeTolerance) {
      throw std::domain_error(
          fmt::format("ActionDistribution: weights sum to {} (off by more than {})", total,
                      kRenormalizeTolerance));
    }
    if (total != 1.0) {
      for (double& w : weights) w /= total;
    }
    ActionDistribution d;
    d.probs_ = std::move(weights);
    return d;
  }

  /// Strictly positive distribution, as required for a search prior.
  static ActionDistribution prior(std::vector<double> weights) {
    return from_weights(std::move(weights), Positivity::kStrict);
  }

  static ActionDistribution uniform(std::size_t num_actions) {
    if (num_actions == 0) throw std::domain_error("ActionDistribution: empty action set");
    return from_weights(std::vector<double>(num_actions, 1.0 / static_cast<double>(num_actions)));
  }

  static ActionDistribution one_hot(std::size_t num_actions, std::size_t action) {
    if (action >= num_actions) throw std::out_of_range("ActionDistribution::one_hot: bad action");
    std::vector<double> w(num_actions, 0.0);
    w[action] = 1.0;
    return from_weights(std::move(w));
  }

  /// Normalizes arbitrary non-negative weights with positive total mass.
  static ActionDistribution normalized(std::span<const double> weights,
                                       Positivity positivity = Positivity::kNonNegative) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0) || !std::isfinite(total)) {
      throw std::domain_error("ActionDistribution::normalized: total mass must be positive");
    }
    std::vector<double> w(weights.begin(), weights.end());
    for (double& x : w) x /= total;
    return from_weights(std::move(w), positivity);
  }

  [[nodiscard]] std::size_t size() const noexcept { return probs_.size(); }
  [[nodiscard]] double operator[](std::size_t a) const { return probs_[a]; }
  [[nodiscard]] std::span<const double> probs() const noexcept { return probs_; }
  [[nodiscard]] auto begin() const noexcept { return probs_.begin(); }
  [[nodiscard]] auto end() const noexcept { return probs_.end(); }

  [[nodiscard]] bool is_strictly_positive() const noexcept {
    return std::all_of(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; });
  }

  friend bool operator==(const ActionDistribution&, const ActionDistribution&) = default;

private:
  std::vector<double> probs_;
};

/// Convex combination t*p + (1-t)*q.
inline ActionDistribution mix(const ActionDistribution& p, const ActionDistribution& q, double t) {
  if (p.size() != q.size()) throw std::domain_error("mix: size mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("mix: weight outside [0, 1]");
  std::vector<double> w(p.size());
  for (std::size_t a = 0; a < w.size(); ++a) w[a] = t * p[a] + (1.0 - t) * q[a];
  return ActionDistribution::from_weights(std::move(w));
}

inline double l1_distance(const ActionDistribution& p, const ActionDistribution& q) {
  if (p.size() != q.size()) throw std::domain_error("l1_distance: size mismatch");
  double d = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) d += std::abs(p[a] - q[a]);
  return d;
}

inline double linf_distance(const ActionDistribution& p, const ActionDistribution& q) {
  if (p.size() != q.size()) throw std::domain_error("linf_distance: size mismatch");
  double d = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) d = std::max(d, std::abs(p[a] - q[a]));
  return d;
}

// ---------------------------------------------------------------------------
// f-divergences
// ---------------------------------------------------------------------------

/// The three generators used by the selection rules:
///   ReverseKL  f(x) = -log x        (AlphaZero / PUCT)
///   ForwardKL  f(x) = x log x       (softmax / MPO-style)
///   Hellinger  f(x) = 2 - 2 sqrt(x) (UCT)
enum class DivergenceKind { kReverseKL, kForwardKL, kHellinger };

inline constexpr DivergenceKind kAllDivergenceKinds[] = {
    DivergenceKind::kReverseKL, DivergenceKind::kForwardKL, DivergenceKind::kHellinger};

inline std::string_view to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::kReverseKL: return "reverse_kl";
    case DivergenceKind::kForwardKL: return "forward_kl";
    case DivergenceKind::kHellinger: return "hellinger";
  }
  return "unknown";
}

inline DivergenceKind parse_divergence_kind(std::string_view name) {
  for (DivergenceKind k : kAllDivergenceKinds) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument(fmt::format("unknown divergence kind '{}'", name));
}

/// Generator f evaluated at x >= 0. Limits at 0 are taken where finite.
inline double generator(DivergenceKind kind, double x) {
  switch (kind) {
    case DivergenceKind::kReverseKL: return -std::log(x);
    case DivergenceKind::kForwardKL: return x > 0.0 ? x * std::log(x) : 0.0;
    case DivergenceKind::kHellinger: return 2.0 - 2.0 * std::sqrt(x);
  }
  throw std::logic_error("generator: bad kind");
}

/// f'(x) for x > 0; strictly increasing since every f is strictly convex.
inline double generator_derivative(DivergenceKind kind, double x) {
  switch (kind) {
    case DivergenceKind::kReverseKL: return -1.0 / x;
    case DivergenceKind::kForwardKL: return std::log(x) + 1.0;
    case DivergenceKind::kHellinger: return -1.0 / std::sqrt(x);
  }
  throw std::logic_error("generator_derivative: bad kind");
}

/// Inverse of f' on its range: returns x with f'(x) = s. For ReverseKL and
/// Hellinger the range of f' is s < 0.
inline double generator_derivative_inverse(DivergenceKind kind, double s) {
  switch (kind) {
    case DivergenceKind::kReverseKL: return -1.0 / s;
    case DivergenceKind::kForwardKL: return std::exp(s - 1.0);
    case DivergenceKind::kHellinger: return 1.0 / (s * s);
  }
  throw std::logic_error("generator_derivative_inverse: bad kind");
}

namespace detail {
inline void require_positive_reference(const ActionDistribution& q, std::string_view who) {
  for (std::size_t b = 0; b < q.size(); ++b) {
    if (!(q[b] > 0.0)) {
      throw std::domain_error(
          fmt::format("{}: reference weight for action {} is zero", who, b));
    }
  }
}
}  // namespace detail

/// D_f(p, q) = sum_b q(b) f(p(b) / q(b)). Requires q > 0.
inline double f_divergence(DivergenceKind kind, const ActionDistribution& p,
                           const ActionDistribution& q) {
  if (p.size() != q.size()) throw std::domain_error("f_divergence: size mismatch");
  detail::require_positive_reference(q, "f_divergence");
  double total = 0.0;
  for (std::size_t b = 0; b < p.size(); ++b) total += q[b] * generator(kind, p[b] / q[b]);
  return total;
}

/// KL[p, q] = sum_a p(a) log(p(a) / q(a)) with 0 log 0 = 0.
inline double kl(const ActionDistribution& p, const ActionDistribution& q) {
  if (p.size() != q.size()) throw std::domain_error("kl: size mismatch");
  detail::require_positive_reference(q, "kl");
  double total = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] > 0.0) total += p[a] * std::log(p[a] / q[a]);
  }
  return total;
}

}  // namespace regmcts
