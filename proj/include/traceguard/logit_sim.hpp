#pragma once

// Toy categorical teacher and the sparse Gaussian perturbation set: at most k
// unprotected positions are resampled from softmax(logits + noise) with
// sigma2 <= 2 * eta / k; every other position keeps the teacher token.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <istream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "traceguard/detectability.hpp"
#include "traceguard/errors.hpp"
#include "traceguard/noise.hpp"
#include "traceguard/seeding.hpp"

namespace traceguard {

// One logit vector per sequence position, plus the teacher's tokens at those
// positions. When no tokens are given the teacher is taken to be greedy.
class LogitTable {
 public:
  LogitTable(std::size_t vocab, std::vector<std::vector<double>> rows,
             std::optional<std::vector<std::size_t>> tokens = std::nullopt)
      : vocab_(vocab), rows_(std::move(rows)) {
    if (vocab_ == 0) throw DataError("logit table: vocabulary size must be positive");
    for (std::size_t t = 0; t < rows_.size(); ++t) {
      if (rows_[t].size() != vocab_) {
        throw DataError("logit table: row " + std::to_string(t) + " has " + std::to_string(rows_[t].size()) +
                        " entries, expected " + std::to_string(vocab_));
      }
      for (double v : rows_[t]) {
        if (!std::isfinite(v)) throw DataError("logit table: row " + std::to_string(t) + " has a non-finite entry");
      }
    }
    if (tokens) {
      if (tokens->size() != rows_.size()) throw DataError("logit table: token count differs from row count");
      for (std::size_t tok : *tokens) {
        if (tok >= vocab_) throw DataError("logit table: token index out of range");
      }
      tokens_ = std::move(*tokens);
    } else {
      tokens_.reserve(rows_.size());
      for (const auto& r : rows_) tokens_.push_back(argmax(r));
    }
  }

  std::size_t vocab() const noexcept { return vocab_; }
  std::size_t length() const noexcept { return rows_.size(); }
  const std::vector<double>& row(std::size_t t) const { return rows_.at(t); }
  const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }
  const std::vector<std::size_t>& tokens() const noexcept { return tokens_; }

  static std::size_t argmax(std::span<const double> v) noexcept {
    return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
  }

 private:
  std::size_t vocab_;
  std::vector<std::vector<double>> rows_;
  std::vector<std::size_t> tokens_;
};

// Format: "V=<int>" header, then one whitespace-separated row of V reals per line.
inline LogitTable parse_logit_table(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> vocab;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!vocab) {
      auto first = line.find_first_not_of(" \t");
      if (line.compare(first, 2, "V=") != 0) throw DataError("logit table: line 1 must be 'V=<int>'");
      std::istringstream hs(line.substr(first + 2));
      long long v = 0;
      std::string rest;
      if (!(hs >> v) || v <= 0 || (hs >> rest)) throw DataError("logit table: bad vocabulary header");
      vocab = static_cast<std::size_t>(v);
      continue;
    }
    std::istringstream rs(line);
    std::vector<double> row;
    std::string field;
    while (rs >> field) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw DataError("logit table: line " + std::to_string(line_no) + ": '" + field + "' is not a number");
      }
    }
    if (row.size() != *vocab) {
      throw DataError("logit table: line " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                      " values, expected " + std::to_string(*vocab));
    }
    rows.push_back(std::move(row));
  }
  if (!vocab) throw DataError("logit table: missing 'V=<int>' header");
  return LogitTable(*vocab, std::move(rows));
}

inline LogitTable load_logit_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open logit table '" + path + "'");
  return parse_logit_table(in);
}

// Order-1 Markov teacher: the logits at step t depend only on the token at t-1.
struct MarkovTeacher {
  std::vector<double> initial;                  // logits for position 0
  std::vector<std::vector<double>> transition;  // transition[prev] = logits

  std::size_t vocab() const noexcept { return initial.size(); }

  // Random teacher with N(0, scale^2) logits.
  static MarkovTeacher random(std::size_t vocab, double scale, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    MarkovTeacher m;
    m.initial.resize(vocab);
    for (double& v : m.initial) v = normal(rng);
    m.transition.assign(vocab, std::vector<double>(vocab));
    for (auto& row : m.transition) {
      for (double& v : row) v = normal(rng);
    }
    return m;
  }

  // Samples a teacher trajectory and records the logits used at each step.
  LogitTable generate(std::size_t length, std::uint64_t seed) const {
    if (initial.empty() || transition.size() != initial.size()) throw DataError("markov teacher: inconsistent shape");
    Rng rng(seed);
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> tokens;
    rows.reserve(length);
    for (std::size_t t = 0; t < length; ++t) {
      const std::vector<double>& logits = t == 0 ? initial : transition.at(tokens.back());
      std::vector<double> p = softmax(logits);
      std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
      rows.push_back(logits);
      tokens.push_back(pick(rng));
    }
    return LogitTable(vocab(), std::move(rows), std::move(tokens));
  }
};

struct ConstraintParams {
  double eta = 0.0;
  std::size_t k = 1;
  double sigma2 = 0.0;
  NoiseConvention convention = NoiseConvention::total_norm;
  std::set<std::size_t> protected_positions;
};

struct Violation {
  int condition = 0;  // 0 = malformed parameters, otherwise the failed membership condition
  std::string message;
};

inline std::optional<Violation> validate_params(const ConstraintParams& p) {
  if (p.k < 1) return Violation{1, "k must be at least 1"};
  if (!(p.eta >= 0.0) || !std::isfinite(p.eta)) return Violation{0, "eta must be a finite nonnegative number"};
  if (!(p.sigma2 >= 0.0) || !std::isfinite(p.sigma2)) return Violation{0, "sigma2 must be a finite nonnegative number"};
  const double limit = 2.0 * p.eta / static_cast<double>(p.k);
  if (p.sigma2 > limit) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "condition 4 violated: sigma2 = " << p.sigma2 << " exceeds 2*eta/k = " << limit;
    return Violation{4, msg.str()};
  }
  return std::nullopt;
}

inline void require_valid(const ConstraintParams& p) {
  if (auto v = validate_params(p)) throw ConstraintError(v->message);
}

// Uniform k-subset (clamped) of the unprotected positions, sorted ascending.
inline std::vector<std::size_t> sample_mask(std::size_t seq_len, const ConstraintParams& p, std::uint64_t seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t t = 0; t < seq_len; ++t) {
    if (!p.protected_positions.contains(t)) eligible.push_back(t);
  }
  if (eligible.empty()) throw ConstraintError("sample_mask: no eligible (unprotected) positions");
  std::vector<std::size_t> mask;
  const std::size_t take = std::min(p.k, eligible.size());
  mask.reserve(take);
  Rng rng(seed);
  std::sample(eligible.begin(), eligible.end(), std::back_inserter(mask), take, rng);
  std::sort(mask.begin(), mask.end());
  return mask;
}

enum class Resampling { sample, greedy };

struct PerturbationOutcome {
  std::vector<std::size_t> mask;
  std::vector<std::size_t> original_tokens;
  std::vector<std::size_t> perturbed_tokens;
  std::vector<std::vector<double>> noise;  // one draw per mask entry, in mask order
};

// Draws noise for each masked position and resamples its token from
// softmax(row + noise); unmasked positions copy the teacher token.
inline PerturbationOutcome perturb_and_resample(const LogitTable& table, const std::vector<std::size_t>& mask,
                                                const ConstraintParams& p, std::uint64_t seed,
                                                Resampling mode = Resampling::sample) {
  require_valid(p);
  if (mask.size() > p.k) throw ConstraintError("mask has more than k positions");
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] >= table.length()) throw ConstraintError("mask position out of range");
    if (i > 0 && mask[i] <= mask[i - 1]) throw ConstraintError("mask must be strictly increasing");
    if (p.protected_positions.contains(mask[i])) {
      throw ConstraintError("mask contains protected position " + std::to_string(mask[i]));
    }
  }
  PerturbationOutcome out;
  out.mask = mask;
  out.original_tokens = table.tokens();
  out.perturbed_tokens = table.tokens();
  out.noise.reserve(mask.size());
  Rng rng(seed);
  std::vector<double> shifted(table.vocab());
  for (std::size_t t : mask) {
    std::vector<double> xi(table.vocab());
    draw_noise(rng, p.sigma2, p.convention, xi);
    const auto& row = table.row(t);
    for (std::size_t v = 0; v < shifted.size(); ++v) shifted[v] = row[v] + xi[v];
    if (mode == Resampling::greedy) {
      out.perturbed_tokens[t] = LogitTable::argmax(shifted);
    } else {
      std::vector<double> probs = softmax(shifted);
      std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
      out.perturbed_tokens[t] = pick(rng);
    }
    out.noise.push_back(std::move(xi));
  }
  return out;
}

// Fraction of masked positions whose resampled token differs from the argmax
// of the unperturbed row, over `trials` independent (mask, noise) draws.
inline double token_flip_rate(const LogitTable& table, const ConstraintParams& p, std::size_t trials,
                              std::uint64_t seed, Resampling mode = Resampling::sample) {
  if (trials == 0) throw std::invalid_argument("token_flip_rate: trials must be >= 1");
  require_valid(p);
  std::uint64_t flips = 0, masked = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(seed, trial);
    const auto mask = sample_mask(table.length(), p, derive_seed(trial_seed, 0));
    const auto outcome = perturb_and_resample(table, mask, p, derive_seed(trial_seed, 1), mode);
    for (std::size_t t : mask) {
      ++masked;
      if (outcome.perturbed_tokens[t] != LogitTable::argmax(table.row(t))) ++flips;
    }
  }
  return masked == 0 ? 0.0 : static_cast<double>(flips) / static_cast<double>(masked);
}

}  // namespace traceguard
