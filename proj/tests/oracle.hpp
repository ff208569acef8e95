#pragma once

// Reference implementations that share no code with the solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace oracle {

enum class Kind { kReverseKL, kForwardKL, kHellinger };

// f, f' and f'' written out independently of the library.
inline double f(Kind k, double x) {
  switch (k) {
    case Kind::kReverseKL: return -std::log(x);
    case Kind::kForwardKL: return x * std::log(x);
    case Kind::kHellinger: return 2.0 - 2.0 * std::sqrt(x);
  }
  return 0.0;
}
inline double df(Kind k, double x) {
  switch (k) {
    case Kind::kReverseKL: return -1.0 / x;
    case Kind::kForwardKL: return std::log(x) + 1.0;
    case Kind::kHellinger: return -1.0 / std::sqrt(x);
  }
  return 0.0;
}
inline double d2f(Kind k, double x) {
  switch (k) {
    case Kind::kReverseKL: return 1.0 / (x * x);
    case Kind::kForwardKL: return 1.0 / x;
    case Kind::kHellinger: return 0.5 / (x * std::sqrt(x));
  }
  return 0.0;
}

/// q.y - lambda * sum_a prior[a] f(y[a] / prior[a]).
inline double objective(Kind k, std::span<const double> q, std::span<const double> prior,
                        double lambda, std::span<const double> y) {
  double v = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) v += q[a] * y[a] - lambda * prior[a] * f(k, y[a] / prior[a]);
  return v;
}

/**
 * Maximizes the regularized objective over the simplex by Newton-scaled
 * projected ascent: the ascent direction is the gradient scaled by the
 * inverse curvature and projected onto sum(d) = 0; a backtracking line
 * search keeps the iterate strictly positive and the objective increasing.
 * The objective is separable and strictly concave, so this converges
 * quadratically from the prior.
 */
inline std::vector<double> maximize(Kind k, std::span<const double> q,
                                    std::span<const double> prior, double lambda,
                                    int max_iters = 500) {
  const std::size_t n = q.size();
  std::vector<double> y(prior.begin(), prior.end()), g(n), h(n), d(n), trial(n);
  for (int it = 0; it < max_iters; ++it) {
    for (std::size_t a = 0; a < n; ++a) {
      g[a] = q[a] - lambda * df(k, y[a] / prior[a]);
      h[a] = lambda * d2f(k, y[a] / prior[a]) / prior[a];  // negative Hessian diagonal
    }
    double num = 0.0, den = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      num += g[a] / h[a];
      den += 1.0 / h[a];
    }
    const double mu = num / den;
    double decrement = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      d[a] = (g[a] - mu) / h[a];
      decrement += d[a] * (g[a] - mu);
    }
    if (decrement < 1e-30) break;
    double step = 1.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (d[a] < 0.0) step = std::min(step, -0.99 * y[a] / d[a]);
    }
    const double base = objective(k, q, prior, lambda, y);
    for (int ls = 0; ls < 80; ++ls) {
      for (std::size_t a = 0; a < n; ++a) trial[a] = y[a] + step * d[a];
      if (objective(k, q, prior, lambda, trial) >= base - 1e-15 * std::abs(base)) break;
      step *= 0.5;
    }
    y = trial;
    const double total = std::accumulate(y.begin(), y.end(), 0.0);
    for (double& v : y) v /= total;
  }
  return y;
}

/// Positive root of prior0/(alpha - q0) + prior1/(alpha - q1) = 1/lambda for
/// two actions (reverse KL), i.e. the closed-form normalization constant.
inline double two_action_alpha(double q0, double q1, double p0, double p1, double lambda) {
  // (alpha - q0)(alpha - q1) = lambda * (p0 (alpha - q1) + p1 (alpha - q0))
  const double b = -(q0 + q1) - lambda * (p0 + p1);
  const double c = q0 * q1 + lambda * (p0 * q1 + p1 * q0);
  return (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;
}

}  // namespace oracle
