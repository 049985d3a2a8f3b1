#include "traceguard/detectability.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"

namespace tg = traceguard;

namespace {

std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double half_width) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(LogSumExp, Examples) {
  EXPECT_NEAR(tg::log_sum_exp(std::vector<double>{0.0, 0.0}), std::log(2.0), 1e-15);
  EXPECT_NEAR(tg::log_sum_exp(std::vector<double>{1000.0, 1000.0}), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_EQ(tg::log_sum_exp(std::vector<double>{0.0}), 0.0);
  EXPECT_THROW(tg::log_sum_exp(std::vector<double>{}), std::invalid_argument);
}

TEST(LogSumExp, ShiftInvariance) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto z = uniform_vector(rng, 1 + i % 30, 50.0);
    const double c = std::uniform_real_distribution<double>(-100, 100)(rng);
    auto shifted = z;
    for (double& x : shifted) x += c;
    EXPECT_NEAR(tg::log_sum_exp(shifted), tg::log_sum_exp(z) + c, 1e-12);
  }
}

TEST(KlDivergence, Examples) {
  const std::vector<double> half{0.5, 0.5};
  EXPECT_EQ(tg::kl_divergence(half, half), 0.0);
  EXPECT_NEAR(tg::kl_divergence(std::vector<double>{1.0, 0.0}, half), std::log(2.0), 1e-15);
  const std::vector<double> p{0.75, 0.25};
  EXPECT_NEAR(tg::kl_divergence(p, half), oracle::direct_kl(p, half), 1e-15);
  EXPECT_NEAR(tg::kl_divergence(p, half), 0.130812, 1e-6);
}

TEST(KlDivergence, Errors) {
  EXPECT_THROW(tg::kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}), std::domain_error);
  EXPECT_THROW(tg::kl_divergence(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(tg::kl_divergence(std::vector<double>{0.5, 0.6}, std::vector<double>{0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(tg::kl_divergence(std::vector<double>{1.5, -0.5}, std::vector<double>{0.5, 0.5}),
               std::invalid_argument);
}

TEST(KlSoftmax, NonnegativeShiftInvariantAndMatchesProbabilityRoute) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const std::size_t n = 2 + i % 20;
    auto a = uniform_vector(rng, n, 8.0), b = uniform_vector(rng, n, 8.0);
    const double kl = tg::kl_softmax(a, b);
    EXPECT_GE(kl, 0.0);
    EXPECT_NEAR(kl, oracle::direct_kl(oracle::naive_softmax(a), oracle::naive_softmax(b)), 1e-10);
    auto a2 = a, b2 = b;
    for (double& x : a2) x += 3.7;
    for (double& x : b2) x -= 1.25;
    EXPECT_NEAR(tg::kl_softmax(a2, b2), kl, 1e-10);
  }
}

TEST(Bregman, Examples) {
  const std::vector<double> z{0.3, -1.2, 2.0, 0.0, 0.7};
  EXPECT_EQ(tg::bregman_identity_residual(z, std::vector<double>(5, 0.0)), 0.0);
  std::mt19937_64 rng(21);
  for (int i = 0; i < 50; ++i) {
    auto zz = uniform_vector(rng, 5, 20.0), eps = uniform_vector(rng, 5, 20.0);
    const double r = tg::bregman_identity_residual(zz, eps);
    EXPECT_LE(r, 1e-9);
    auto shifted = zz;
    for (double& x : shifted) x += 5.0;
    EXPECT_NEAR(tg::bregman_identity_residual(shifted, eps), r, 1e-9);
  }
}

TEST(VarianceForm, Examples) {
  const std::vector<double> z{0.1, 1.0, -0.5, 2.0};
  auto c = tg::variance_form_residual(z, std::vector<double>(4, 1.7));
  EXPECT_NEAR(c.quadratic_form, 0.0, 1e-14);
  EXPECT_NEAR(c.variance, 0.0, 1e-14);

  const auto p = oracle::naive_softmax(z);
  for (std::size_t v = 0; v < 4; ++v) {
    std::vector<double> e(4, 0.0);
    e[v] = 1.0;
    auto one_hot = tg::variance_form_residual(z, e);
    EXPECT_NEAR(one_hot.variance, p[v] * (1 - p[v]), 1e-14);
    EXPECT_LE(one_hot.quadratic_form, 1.0);
    EXPECT_TRUE(one_hot.bounded_by_norm());
  }

  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    auto r = tg::variance_form_residual(uniform_vector(rng, 8, 20.0), uniform_vector(rng, 8, 20.0));
    EXPECT_LE(r.residual, 1e-9);
    EXPECT_TRUE(r.bounded_by_norm());
  }
}

TEST(MonteCarlo, ZeroNoiseIsExactlyZero) {
  auto e = tg::monte_carlo_expected_kl(std::vector<double>{0.2, 1.0, -3.0}, 0.0, tg::NoiseConvention::total_norm, 1000,
                                       1);
  EXPECT_EQ(e.mean, 0.0);
  EXPECT_EQ(e.std_error, 0.0);
  EXPECT_EQ(e.bound, 0.0);
  EXPECT_TRUE(e.bound_satisfied);
  EXPECT_EQ(e.samples, 1000u);
}

TEST(MonteCarlo, TwoTokenSmallNoiseMatchesExpansion) {
  const std::vector<double> z{0.0, 0.0};
  const double sigma2 = 0.02;
  auto e = tg::monte_carlo_expected_kl(z, sigma2, tg::NoiseConvention::total_norm, 100000, 2025);
  const double expansion = oracle::small_noise_expected_kl(z, sigma2 / 2.0);
  EXPECT_DOUBLE_EQ(expansion, 0.0025);
  EXPECT_NEAR(e.mean, expansion, 0.02 * expansion);
  EXPECT_LE(e.mean + 3 * e.std_error, 0.01);
  EXPECT_DOUBLE_EQ(e.bound, 0.01);
  EXPECT_TRUE(e.bound_satisfied);
}

TEST(MonteCarlo, PerCoordinateConventionUsesScaledBound) {
  const std::vector<double> z{1.0, 0.0, -1.0, 0.5, 2.0};
  auto e = tg::monte_carlo_expected_kl(z, 0.1, tg::NoiseConvention::per_coordinate, 20000, 4);
  EXPECT_DOUBLE_EQ(e.bound, 5 * 0.1 / 2);
  EXPECT_TRUE(e.bound_satisfied);
  auto small = tg::monte_carlo_expected_kl(z, 0.01, tg::NoiseConvention::per_coordinate, 50000, 4);
  EXPECT_NEAR(small.mean, oracle::small_noise_expected_kl(z, 0.01), 0.05 * small.mean);
}

TEST(MonteCarlo, ThreadCountDoesNotChangeEstimate) {
  const std::vector<double> z{0.5, -0.5, 1.5, 0.0};
  auto a = tg::monte_carlo_expected_kl(z, 0.3, tg::NoiseConvention::total_norm, 30000, 9, 1);
  auto b = tg::monte_carlo_expected_kl(z, 0.3, tg::NoiseConvention::total_norm, 30000, 9, 5);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(RunningStats, MergeMatchesSinglePass) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(3.0, 2.0);
  tg::RunningStats all, left, right;
  for (int i = 0; i < 1000; ++i) {
    const double x = n(rng);
    all.add(x);
    (i < 370 ? left : right).add(x);
  }
  left.merge(right);
  EXPECT_EQ(left.count, all.count);
  EXPECT_NEAR(left.mean, all.mean, 1e-12);
  EXPECT_NEAR(left.sample_variance(), all.sample_variance(), 1e-10);
}

TEST(JointKl, Examples) {
  auto one = tg::joint_kl_k_tokens(std::vector<double>{0.01}, 1, 0.1);
  EXPECT_DOUBLE_EQ(one.bound, 0.05);
  EXPECT_TRUE(one.satisfied);
  auto three = tg::joint_kl_k_tokens(std::vector<double>{0.01, 0.02, 0.03}, 3, 0.1);
  EXPECT_DOUBLE_EQ(three.bound, 3 * 0.1 / 2);
  EXPECT_DOUBLE_EQ(three.sum, 0.06);
  EXPECT_THROW(tg::joint_kl_k_tokens(std::vector<double>{0.1}, 2, 0.1), std::invalid_argument);
}

TEST(JointKl, ProductDistributionFactorizes) {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> noise(0.0, std::sqrt(0.5 / 3));
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> p, q;
    std::vector<double> marginals;
    for (int i = 0; i < 3; ++i) {
      auto z = uniform_vector(rng, 3, 3.0);
      auto zp = z;
      for (double& x : zp) x += noise(rng);
      p.push_back(tg::softmax(zp));
      q.push_back(tg::softmax(z));
      marginals.push_back(tg::kl_divergence(p.back(), q.back()));
    }
    const auto joint = tg::joint_kl_k_tokens(marginals, 3, 0.5);
    EXPECT_NEAR(oracle::product_kl_enumerated(p, q), joint.sum, 1e-9);
  }
}

TEST(JointKl, MonteCarloRespectsKTimesBound) {
  const std::vector<std::vector<double>> rows{{0.0, 1.0, -1.0}, {2.0, 0.0, 0.0}, {0.5, 0.5, 0.5}};
  auto e = tg::monte_carlo_joint_kl(rows, 0.4, tg::NoiseConvention::total_norm, 20000, 6);
  EXPECT_DOUBLE_EQ(e.bound, 3 * 0.4 / 2);
  EXPECT_TRUE(e.bound_satisfied);
}
