#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "regmcts/rng.hpp"
#include "regmcts/solver.hpp"

using namespace regmcts;

namespace {

oracle::Kind to_oracle(DivergenceKind k) {
  switch (k) {
    case DivergenceKind::kReverseKL: return oracle::Kind::kReverseKL;
    case DivergenceKind::kForwardKL: return oracle::Kind::kForwardKL;
    case DivergenceKind::kHellinger: return oracle::Kind::kHellinger;
  }
  return oracle::Kind::kReverseKL;
}

Multiplier lam(double v, std::size_t actions = 0) { return {v, 0, actions}; }

std::vector<double> uniform_q(std::size_t n, Rng& rng) {
  std::vector<double> q(n);
  for (double& x : q) x = rng.uniform();
  return q;
}

ActionDistribution random_prior(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (double& x : w) x = rng.uniform(0.05, 1.0);
  return ActionDistribution::normalized(w, ActionDistribution::Positivity::kStrict);
}

}  // namespace

TEST(ComputeLambda, Examples) {
  const std::vector<std::int64_t> zero{0, 0}, one{1, 0};
  EXPECT_EQ(compute_lambda(1.0, zero).value, 0.0);
  EXPECT_DOUBLE_EQ(compute_lambda(1.0, one).value, 1.0 / 3.0);
  std::vector<std::int64_t> hundred(10, 10);
  const Multiplier m = compute_lambda(1.25, hundred);
  EXPECT_NEAR(m.value, 0.11363636363636363, 1e-15);
  EXPECT_EQ(m.total_visits, 100);
  EXPECT_EQ(m.num_actions, 10u);
}

TEST(ComputeLambda, Errors) {
  const std::vector<std::int64_t> empty, negative{1, -1};
  EXPECT_THROW(compute_lambda(1.0, empty), std::domain_error);
  EXPECT_THROW(compute_lambda(1.0, negative), std::domain_error);
  EXPECT_THROW(compute_lambda(0.0, std::vector<std::int64_t>{1}), std::domain_error);
}

TEST(ComputeLambdaUct, Examples) {
  EXPECT_EQ(compute_lambda_uct(1.0, std::vector<std::int64_t>{1, 0}).value, 0.0);
  const std::vector<std::int64_t> three{1, 1, 1};
  EXPECT_NEAR(compute_lambda_uct(1.0, three).value, std::sqrt(std::log(3.0) / 6.0), 1e-15);
  EXPECT_DOUBLE_EQ(compute_lambda_uct(2.0, three).value, 2.0 * compute_lambda_uct(1.0, three).value);
  EXPECT_THROW(compute_lambda_uct(1.0, std::vector<std::int64_t>{0, 0}), std::domain_error);
}

TEST(SolvePibar, ConstantQUniformPriorIsUniform) {
  const std::vector<double> q(5, 0.3);
  const auto pi = solve_pibar(q, ActionDistribution::uniform(5), lam(0.7));
  for (double p : pi) EXPECT_NEAR(p, 0.2, 1e-10);
}

TEST(SolvePibar, AnalyticTwoActionInstance) {
  const std::vector<double> q{1.0, 0.0};
  const auto sol =
      solve_pibar_bisection(q, ActionDistribution::uniform(2), lam(1.0), DivergenceKind::kReverseKL);
  const double alpha = 1.0 + std::numbers::sqrt2 / 2.0;
  EXPECT_NEAR(oracle::two_action_alpha(1.0, 0.0, 0.5, 0.5, 1.0), alpha, 1e-15);
  EXPECT_NEAR(sol.search.alpha, alpha, 1e-9);
  EXPECT_NEAR(sol.policy[0], 0.70711, 1e-5);
  EXPECT_NEAR(sol.policy[1], 0.29289, 1e-5);
  EXPECT_NEAR(sol.policy[0], 0.5 / (alpha - 1.0), 1e-10);
}

TEST(SolvePibar, MatchesTwoActionClosedForm) {
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const double q0 = rng.uniform(), q1 = rng.uniform(), p0 = rng.uniform(0.05, 0.95);
    const double l = std::exp(rng.uniform(std::log(1e-3), std::log(10.0)));
    const auto prior = ActionDistribution::prior({p0, 1.0 - p0});
    const std::vector<double> q{q0, q1};
    const auto sol = solve_pibar_bisection(q, prior, lam(l), DivergenceKind::kReverseKL);
    const double alpha = oracle::two_action_alpha(q0, q1, p0, 1.0 - p0, l);
    EXPECT_NEAR(sol.policy[0], l * p0 / (alpha - q0), 1e-8);
  }
}

TEST(SolvePibar, MatchesNewtonOracleOnTenActions) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto q = uniform_q(10, rng);
    const auto prior = ActionDistribution::uniform(10);
    const Multiplier m = compute_lambda(1.25, std::vector<std::int64_t>(10, 10));
    const auto pi = solve_pibar(q, prior, m);
    const auto ref = oracle::maximize(oracle::Kind::kReverseKL, q, prior.probs(), m.value);
    for (std::size_t a = 0; a < 10; ++a) EXPECT_NEAR(pi[a], ref[a], 1e-4);
    EXPECT_LE(kkt_residual(q, prior, m, pi, DivergenceKind::kReverseKL), 1e-6);
  }
}

TEST(SolvePibar, ZeroLambdaIsGreedyLowestIndex) {
  const std::vector<double> q{0.2, 0.9, 0.9};
  const auto pi = solve_pibar(q, ActionDistribution::uniform(3), lam(0.0));
  EXPECT_EQ(pi, ActionDistribution::one_hot(3, 1));
}

TEST(SolvePibar, Errors) {
  const auto prior = ActionDistribution::uniform(2);
  const std::vector<double> bad{NAN, 0.0}, ok{0.0, 1.0}, wrong_size{0.0};
  EXPECT_THROW(solve_pibar(bad, prior, lam(1.0)), std::domain_error);
  EXPECT_THROW(solve_pibar(wrong_size, prior, lam(1.0)), std::domain_error);
  EXPECT_THROW(solve_pibar(ok, ActionDistribution::from_weights({1.0, 0.0}), lam(1.0)),
               std::domain_error);
  EXPECT_THROW(solve_pibar(ok, prior, lam(-1.0)), std::domain_error);
}

TEST(SolvePibar, NonConvergenceCarriesResidual) {
  SolverConfig cfg;
  cfg.max_bisection_iters = 2;
  const std::vector<double> q{0.1, 0.7, 0.4};
  try {
    (void)solve_pibar(q, ActionDistribution::uniform(3), lam(0.3), cfg);
    FAIL() << "expected SolverConvergenceError";
  } catch (const SolverConvergenceError& e) {
    EXPECT_GT(std::abs(e.residual()), cfg.bisection_tol);
  }
}

TEST(SolvePibar, BracketSigns) {
  // Mass is >= 1 at alpha_min and <= 1 at alpha_max.
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto q = uniform_q(7, rng);
    const auto prior = random_prior(7, rng);
    const double l = rng.uniform(0.01, 3.0);
    double alpha_min = -1e300, alpha_max = -1e300;
    for (std::size_t b = 0; b < 7; ++b) {
      alpha_min = std::max(alpha_min, q[b] + l * prior[b]);
      alpha_max = std::max(alpha_max, q[b] + l);
    }
    double mass_lo = 0.0, mass_hi = 0.0;
    for (std::size_t b = 0; b < 7; ++b) {
      mass_lo += l * prior[b] / (alpha_min - q[b]);
      mass_hi += l * prior[b] / (alpha_max - q[b]);
    }
    EXPECT_GE(mass_lo, 1.0 - 1e-12);
    EXPECT_LE(mass_hi, 1.0 + 1e-12);
    const auto sol = solve_pibar_bisection(q, prior, lam(l), DivergenceKind::kReverseKL);
    EXPECT_GE(sol.search.alpha, alpha_min - 1e-12);
    EXPECT_LE(sol.search.alpha, alpha_max + 1e-12);
    EXPECT_LE(sol.search.alpha_lo, sol.search.alpha);
    EXPECT_LE(sol.search.alpha, sol.search.alpha_hi);
  }
}

TEST(SolvePibar, RegularizationLimits) {
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    const auto q = uniform_q(6, rng);
    const auto prior = random_prior(6, rng);
    const auto wide = solve_pibar(q, prior, lam(1e6));
    EXPECT_LE(linf_distance(wide, prior), 1e-3);
    const auto sharp = solve_pibar(q, prior, lam(1e-6));
    const auto best = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    EXPECT_GE(sharp[best], 0.999);
  }
}

TEST(SolvePibar, ShiftInvariant) {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    auto q = uniform_q(8, rng);
    const auto prior = random_prior(8, rng);
    const double l = rng.uniform(0.05, 2.0);
    const auto base = solve_pibar(q, prior, lam(l));
    for (double& x : q) x += 3.5;
    EXPECT_LE(linf_distance(base, solve_pibar(q, prior, lam(l))), 1e-9);
  }
}

TEST(SolvePibarF, ReverseKLReproducesSolvePibar) {
  Rng rng(19);
  const auto q = uniform_q(9, rng);
  const auto prior = random_prior(9, rng);
  EXPECT_EQ(solve_pibar_f(q, prior, lam(0.2), DivergenceKind::kReverseKL),
            solve_pibar(q, prior, lam(0.2)));
}

TEST(SolvePibarF, HellingerSymmetricIsUniform) {
  const std::vector<double> q(4, 0.8);
  const auto pi = solve_pibar_f(q, ActionDistribution::uniform(4), lam(0.5), DivergenceKind::kHellinger);
  for (double p : pi) EXPECT_NEAR(p, 0.25, 1e-10);
}

TEST(SolvePibarF, ForwardKLClosedFormMatchesBisection) {
  Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    const auto q = uniform_q(1 + rng.index(12), rng);
    const auto prior = random_prior(q.size(), rng);
    const double l = rng.uniform(0.01, 5.0);
    const auto closed = forward_kl_closed_form(q, prior, lam(l));
    const auto bisect = solve_pibar_bisection(q, prior, lam(l), DivergenceKind::kForwardKL);
    EXPECT_LE(linf_distance(closed.policy, bisect.policy), 1e-8);
    EXPECT_NEAR(closed.search.alpha, bisect.search.alpha, 1e-7);
  }
}

class SolverByKind : public ::testing::TestWithParam<DivergenceKind> {};

TEST_P(SolverByKind, MatchesNewtonOracleAndKkt) {
  const DivergenceKind kind = GetParam();
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const auto q = uniform_q(2 + rng.index(9), rng);
    const auto prior = random_prior(q.size(), rng);
    const double l = std::exp(rng.uniform(std::log(1e-2), std::log(5.0)));
    const auto pi = solve_pibar_f(q, prior, lam(l), kind);
    const auto ref = oracle::maximize(to_oracle(kind), q, prior.probs(), l);
    for (std::size_t a = 0; a < q.size(); ++a) EXPECT_NEAR(pi[a], ref[a], 1e-4);
    EXPECT_LE(kkt_residual(q, prior, lam(l), pi, kind), 1e-6);
  }
}

TEST_P(SolverByKind, ResidualMonotoneInAlpha) {
  const DivergenceKind kind = GetParam();
  Rng rng(37);
  const auto q = uniform_q(6, rng);
  const auto prior = random_prior(6, rng);
  const double l = 0.4;
  const auto sol = solve_pibar_bisection(q, prior, lam(l), kind);
  const double q_max = *std::max_element(q.begin(), q.end());
  double lo = -1e300;
  for (std::size_t b = 0; b < q.size(); ++b) {
    lo = std::max(lo, q[b] - l * generator_derivative(kind, 1.0 / prior[b]));
  }
  const double hi = q_max - l * generator_derivative(kind, 1.0);
  auto mass = [&](double alpha) {
    double s = 0.0;
    for (std::size_t b = 0; b < q.size(); ++b) {
      s += prior[b] * generator_derivative_inverse(kind, (q[b] - alpha) / l);
    }
    return s;
  };
  EXPECT_GE(mass(lo), 1.0 - 1e-12);
  EXPECT_LE(mass(hi), 1.0 + 1e-12);
  double prev = mass(lo);
  for (int k = 1; k <= 100; ++k) {
    const double m = mass(lo + (hi - lo) * k / 100.0);
    EXPECT_LT(m, prev);
    prev = m;
  }
  EXPECT_GE(sol.search.alpha, lo - 1e-12);
  EXPECT_LE(sol.search.alpha, hi + 1e-12);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, SolverByKind, ::testing::ValuesIn(kAllDivergenceKinds),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(KktResidual, Examples) {
  const std::vector<double> q{0.9, 0.1, 0.5};
  const auto prior = ActionDistribution::uniform(3);
  EXPECT_GT(kkt_residual(q, prior, lam(0.3), prior, DivergenceKind::kReverseKL), 0.1);
  const std::vector<double> single{0.4};
  EXPECT_EQ(kkt_residual(single, ActionDistribution::uniform(1), lam(0.3),
                         ActionDistribution::uniform(1), DivergenceKind::kHellinger),
            0.0);
  EXPECT_THROW(kkt_residual(q, prior, lam(0.3), ActionDistribution::from_weights({1.0, 0.0, 0.0}),
                            DivergenceKind::kReverseKL),
               std::domain_error);
}

TEST(MultiplierFor, HellingerUsesUctAndZeroBeforeFirstVisit) {
  const std::vector<std::int64_t> none{0, 0, 0}, some{2, 1, 0};
  EXPECT_EQ(multiplier_for(DivergenceKind::kHellinger, 1.0, none).value, 0.0);
  EXPECT_DOUBLE_EQ(multiplier_for(DivergenceKind::kHellinger, 1.0, some).value,
                   compute_lambda_uct(1.0, some).value);
  EXPECT_DOUBLE_EQ(multiplier_for(DivergenceKind::kForwardKL, 1.0, some).value,
                   compute_lambda(1.0, some).value);
}
