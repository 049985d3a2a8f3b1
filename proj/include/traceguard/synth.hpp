#pragma once

// Seeded synthetic reasoning traces with known branching sentences. The
// generator records which sentences it built from a branching marker, so
// tests can compare poisoning results with construction-time ground truth.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "traceguard/seeding.hpp"
#include "traceguard/trace_model.hpp"

namespace traceguard {

struct SynthOptions {
  double branching_probability = 0.2;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 30;
};

namespace synth_detail {

// Openers that the default branching set must recognise.
inline constexpr std::array<std::string_view, 10> kBranchingOpeners = {
    "Wait, ",  "Wait ",  "wait, ", "Hold on, ", "Hold  on, ", "HOLD ON, ", "Alternatively, ", "alternatively ",
    "\"Wait, ", "- Alternatively, "};

// Openers that must not match: other words, and marker prefixes that are not
// whole words.
inline constexpr std::array<std::string_view, 14> kPlainOpeners = {
    "So ",        "Then ",      "Let me ",    "The ",  "We get ",        "Now ",       "Therefore ",
    "Next, ",     "Waiting on ", "Holding ", "Alternative ", "Waitlist ", "I think ", "Hence "};

inline constexpr std::array<std::string_view, 12> kBodies = {
    "the sum is 3.14 here",
    "that gives x = 2.5 for the first term",
    "I should recheck the second factor",
    "maybe the triangle is isosceles",
    "compute 12 times 7 to get 84",
    "the remainder after division is 4",
    "the derivative of x^2 is 2x",
    "this simplifies to a quadratic in n",
    "we can substitute y = 1.5 back in",
    "the area equals half the base times height",
    "I made a mistake in the sign",
    "check whether 0.75 is in lowest terms"};

inline constexpr std::array<std::string_view, 5> kTerminators = {".", ".", "?", "!", "\xE2\x80\xA6"};
inline constexpr std::array<std::string_view, 4> kSeparators = {" ", " ", "\n", "\n\n"};

template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& options) {
  return options[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

}  // namespace synth_detail

// One trace. extra["synth_branching"] holds the indices of branching sentences.
inline ReasoningTrace synth_trace(std::string id, std::uint64_t seed, const SynthOptions& opt = {}) {
  using namespace synth_detail;
  Rng rng(trace_seed(seed, id));
  std::bernoulli_distribution branching(opt.branching_probability);
  const std::size_t n = std::uniform_int_distribution<std::size_t>(opt.min_sentences, opt.max_sentences)(rng);
  std::string reasoning;
  Json truth = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) reasoning += pick(rng, kSeparators);
    const bool is_branch = branching(rng);
    if (is_branch) truth.push_back(i);
    reasoning += is_branch ? pick(rng, kBranchingOpeners) : pick(rng, kPlainOpeners);
    reasoning += pick(rng, kBodies);
    reasoning += pick(rng, kTerminators);
  }
  const int answer = std::uniform_int_distribution<int>(0, 999)(rng);
  ReasoningTrace t = ReasoningTrace::from_text(std::move(id), "Solve problem " + std::to_string(answer % 97) + ".",
                                               reasoning, "\\boxed{" + std::to_string(answer) + "}");
  t.extra["synth_branching"] = std::move(truth);
  return t;
}

inline std::vector<ReasoningTrace> synth_corpus(std::size_t traces, std::uint64_t seed, const SynthOptions& opt = {}) {
  std::vector<ReasoningTrace> out;
  out.reserve(traces);
  for (std::size_t i = 0; i < traces; ++i) {
    std::string id = "synth-" + std::to_string(i);
    out.push_back(synth_trace(std::move(id), seed, opt));
  }
  return out;
}

inline std::vector<std::size_t> synth_branching_indices(const ReasoningTrace& t) {
  std::vector<std::size_t> out;
  if (auto it = t.extra.find("synth_branching"); it != t.extra.end()) {
    for (const auto& v : *it) out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace traceguard
