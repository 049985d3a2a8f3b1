#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "traceguard/seeding.hpp"

namespace traceguard {

// How sigma2 maps to per-coordinate variance of a V-dimensional noise vector.
//   total_norm:     coordinate variance sigma2 / V, so E||xi||^2 = sigma2
//   per_coordinate: coordinate variance sigma2,     so E||xi||^2 = V * sigma2
enum class NoiseConvention { total_norm, per_coordinate };

inline std::string_view to_string(NoiseConvention c) noexcept {
  return c == NoiseConvention::total_norm ? "total_norm" : "per_coordinate";
}

inline NoiseConvention parse_noise_convention(std::string_view s) {
  if (s == "total_norm") return NoiseConvention::total_norm;
  if (s == "per_coordinate") return NoiseConvention::per_coordinate;
  throw std::invalid_argument("unknown noise convention '" + std::string(s) + "'");
}

inline double coordinate_variance(double sigma2, std::size_t vocab, NoiseConvention c) noexcept {
  return c == NoiseConvention::total_norm ? sigma2 / static_cast<double>(vocab) : sigma2;
}

// Expected squared norm of one noise vector.
inline double expected_noise_norm2(double sigma2, std::size_t vocab, NoiseConvention c) noexcept {
  return c == NoiseConvention::total_norm ? sigma2 : sigma2 * static_cast<double>(vocab);
}

// Fills `out` with a Gaussian draw. Zero variance yields exact zeros.
inline void draw_noise(Rng& rng, double sigma2, NoiseConvention c, std::span<double> out) {
  const double var = coordinate_variance(sigma2, out.size(), c);
  if (var <= 0.0) {
    for (double& x : out) x = 0.0;
    return;
  }
  std::normal_distribution<double> normal(0.0, std::sqrt(var));
  for (double& x : out) x = normal(rng);
}

}  // namespace traceguard
