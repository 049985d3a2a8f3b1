#pragma once

// Softmax/KL numerics and Monte Carlo checks of the expected-KL detectability
// bound for Gaussian logit noise: E[KL(softmax(z+eps) || softmax(z))] <= E||eps||^2 / 2.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "traceguard/noise.hpp"
#include "traceguard/parallel.hpp"
#include "traceguard/seeding.hpp"

namespace traceguard {

inline double log_sum_exp(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("log_sum_exp of an empty vector");
  const double shift = *std::max_element(z.begin(), z.end());
  if (!std::isfinite(shift)) throw std::invalid_argument("log_sum_exp requires finite entries");
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - shift);
  return shift + std::log(acc);
}

inline std::vector<double> log_softmax(std::span<const double> z) {
  const double lse = log_sum_exp(z);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out = log_softmax(z);
  for (double& v : out) v = std::exp(v);
  return out;
}

// KL(p || q) over probability vectors, with 0 log 0 = 0.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  if (p.empty()) throw std::invalid_argument("kl_divergence: empty distributions");
  auto check = [](std::span<const double> d, const char* name) {
    double sum = 0.0;
    for (double v : d) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string("kl_divergence: ") + name + " has a negative or non-finite entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw std::invalid_argument(std::string("kl_divergence: ") + name + " does not sum to 1");
    }
  };
  check(p, "p");
  check(q, "q");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw std::domain_error("kl_divergence: p has mass outside the support of q");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

// KL(softmax(a) || softmax(b)) computed in log space.
inline double kl_softmax(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("kl_softmax: length mismatch");
  const double lse_a = log_sum_exp(a);
  const double lse_b = log_sum_exp(b);
  double kl = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double la = a[i] - lse_a;
    kl += std::exp(la) * (la - (b[i] - lse_b));
  }
  return std::max(kl, 0.0);
}

// |KL(softmax(z+eps) || softmax(z)) - D_Phi(z, z+eps)| with Phi = log-sum-exp
// and D_Phi(z, z+eps) = Phi(z) - Phi(z+eps) + <softmax(z+eps), eps>.
// The KL side goes through explicit probability vectors.
inline double bregman_identity_residual(std::span<const double> z, std::span<const double> eps) {
  if (z.size() != eps.size()) throw std::invalid_argument("bregman_identity_residual: length mismatch");
  std::vector<double> shifted(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) shifted[i] = z[i] + eps[i];
  const std::vector<double> p_perturbed = softmax(shifted);
  const std::vector<double> p_teacher = softmax(z);
  const double kl = kl_divergence(p_perturbed, p_teacher);
  double inner = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) inner += p_perturbed[i] * eps[i];
  const double bregman = log_sum_exp(z) - log_sum_exp(shifted) + inner;
  return std::abs(kl - bregman);
}

struct VarianceFormCheck {
  double quadratic_form = 0.0;  // eps^T (diag(P) - P P^T) eps, P = softmax(z)
  double variance = 0.0;        // E_P[eps^2] - E_P[eps]^2
  double norm2 = 0.0;           // ||eps||^2
  double residual = 0.0;        // |quadratic_form - variance|

  bool bounded_by_norm() const noexcept { return quadratic_form <= norm2 + 1e-12; }
};

inline VarianceFormCheck variance_form_residual(std::span<const double> z, std::span<const double> eps) {
  if (z.size() != eps.size()) throw std::invalid_argument("variance_form_residual: length mismatch");
  const std::vector<double> p = softmax(z);
  const std::size_t n = z.size();
  VarianceFormCheck out;
  // Full Hessian quadratic form, entry by entry.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (i == j ? p[i] : 0.0) - p[i] * p[j];
      out.quadratic_form += eps[i] * h * eps[j];
    }
  }
  double first = 0.0, second = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    first += p[i] * eps[i];
    second += p[i] * eps[i] * eps[i];
    out.norm2 += eps[i] * eps[i];
  }
  out.variance = second - first * first;
  out.residual = std::abs(out.quadratic_form - out.variance);
  return out;
}

// ---- Monte Carlo -------------------------------------------------------

// Running mean/variance (Welford), mergeable in a fixed order (Chan et al.).
struct RunningStats {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }

  void merge(const RunningStats& o) noexcept {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(count + o.count);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.count) / total;
    m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / total;
    count += o.count;
  }

  double sample_variance() const noexcept { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
  double std_error() const noexcept {
    return count > 0 ? std::sqrt(sample_variance() / static_cast<double>(count)) : 0.0;
  }
};

struct KlEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t samples = 0;
  double bound = 0.0;
  bool bound_satisfied = false;
};

inline constexpr std::uint64_t kMonteCarloBatch = 4096;

namespace detail {

// Splits `samples` into fixed batches seeded by batch index and merges them in
// index order, so the estimate does not depend on the thread count.
template <typename SampleFn>
RunningStats batched_monte_carlo(std::uint64_t samples, std::uint64_t seed, unsigned threads, SampleFn&& make_sampler) {
  const std::uint64_t batches = (samples + kMonteCarloBatch - 1) / kMonteCarloBatch;
  std::vector<RunningStats> partial(batches);
  parallel_for_index(batches, threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b));
    auto draw = make_sampler();
    const std::uint64_t begin = b * kMonteCarloBatch;
    const std::uint64_t end = std::min(samples, begin + kMonteCarloBatch);
    for (std::uint64_t s = begin; s < end; ++s) partial[b].add(draw(rng));
  });
  RunningStats total;
  for (const auto& p : partial) total.merge(p);
  return total;
}

inline KlEstimate finish(const RunningStats& stats, double bound) {
  KlEstimate e;
  e.mean = stats.mean;
  e.std_error = stats.std_error();
  e.samples = stats.count;
  e.bound = bound;
  e.bound_satisfied = e.mean + 3.0 * e.std_error <= bound;
  return e;
}

}  // namespace detail

// E_eps[KL(softmax(z+eps) || softmax(z))]. The bound is E||eps||^2 / 2: sigma2/2
// under total_norm, V*sigma2/2 under per_coordinate. Satisfied means
// mean + 3 * std_error <= bound.
inline KlEstimate monte_carlo_expected_kl(std::span<const double> z, double sigma2, NoiseConvention convention,
                                          std::uint64_t samples, std::uint64_t seed, unsigned threads = 1) {
  if (z.empty()) throw std::invalid_argument("monte_carlo_expected_kl: empty logits");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("monte_carlo_expected_kl: sigma2 must be >= 0");
  if (samples == 0) throw std::invalid_argument("monte_carlo_expected_kl: samples must be >= 1");
  const std::vector<double> logits(z.begin(), z.end());
  const double bound = expected_noise_norm2(sigma2, z.size(), convention) / 2.0;
  auto stats = detail::batched_monte_carlo(samples, seed, threads, [&] {
    return [&, noise = std::vector<double>(logits.size()), shifted = std::vector<double>(logits.size())](
               Rng& rng) mutable {
      draw_noise(rng, sigma2, convention, noise);
      for (std::size_t i = 0; i < logits.size(); ++i) shifted[i] = logits[i] + noise[i];
      return kl_softmax(shifted, logits);
    };
  });
  return detail::finish(stats, bound);
}

struct JointKl {
  double sum = 0.0;
  double bound = 0.0;
  bool satisfied = false;
};

// Joint KL over k independently perturbed positions factorizes into the sum of
// per-position KLs; compare it with k * sigma2 / 2.
inline JointKl joint_kl_k_tokens(std::span<const double> per_token_kls, std::size_t k, double sigma2) {
  if (per_token_kls.size() != k) throw std::invalid_argument("joint_kl_k_tokens: expected k per-token values");
  JointKl out;
  for (double v : per_token_kls) out.sum += v;
  out.bound = static_cast<double>(k) * sigma2 / 2.0;
  out.satisfied = out.sum <= out.bound;
  return out;
}

// Monte Carlo estimate of the expected joint KL when each row of `positions`
// gets its own independent noise draw. Bound: k * E||eps||^2 / 2.
inline KlEstimate monte_carlo_joint_kl(const std::vector<std::vector<double>>& positions, double sigma2,
                                       NoiseConvention convention, std::uint64_t samples, std::uint64_t seed,
                                       unsigned threads = 1) {
  if (positions.empty()) throw std::invalid_argument("monte_carlo_joint_kl: no positions");
  if (samples == 0) throw std::invalid_argument("monte_carlo_joint_kl: samples must be >= 1");
  double bound = 0.0;
  for (const auto& z : positions) {
    if (z.empty()) throw std::invalid_argument("monte_carlo_joint_kl: empty logits");
    bound += expected_noise_norm2(sigma2, z.size(), convention) / 2.0;
  }
  auto stats = detail::batched_monte_carlo(samples, seed, threads, [&] {
    return [&, noise = std::vector<double>(), shifted = std::vector<double>()](Rng& rng) mutable {
      double total = 0.0;
      for (const auto& z : positions) {
        noise.resize(z.size());
        shifted.resize(z.size());
        draw_noise(rng, sigma2, convention, noise);
        for (std::size_t i = 0; i < z.size(); ++i) shifted[i] = z[i] + noise[i];
        total += kl_softmax(shifted, z);
      }
      return total;
    };
  });
  return detail::finish(stats, bound);
}

}  // namespace traceguard
