#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace traceguard {

using Rng = std::mt19937_64;

// splitmix64 finalizer. Used to derive independent streams from one master seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix64(mix64(master) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

// FNV-1a; stable across platforms and standard library versions.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Per-trace seed: depends only on (global seed, trace id), never on scheduling.
constexpr std::uint64_t trace_seed(std::uint64_t global_seed, std::string_view trace_id) noexcept {
  return derive_seed(global_seed, fnv1a64(trace_id));
}

}  // namespace traceguard
