#pragma once

// Branching-sentence removal (TraceGuard) and the random-removal baseline.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "traceguard/errors.hpp"
#include "traceguard/parallel.hpp"
#include "traceguard/seeding.hpp"
#include "traceguard/trace_model.hpp"

namespace traceguard {

// Discourse markers that open a branching sentence.
class BranchingSet {
 public:
  BranchingSet() : BranchingSet({"wait", "hold on", "alternatively"}) {}

  explicit BranchingSet(std::vector<std::string> markers, bool case_sensitive = false)
      : markers_(std::move(markers)), case_sensitive_(case_sensitive) {
    if (markers_.empty()) throw DataError("branching set must contain at least one marker");
    for (auto& m : markers_) {
      if (m.empty() || is_ascii_space(m.front()) || is_ascii_space(m.back())) {
        throw DataError("marker '" + m + "' is empty or has surrounding whitespace");
      }
      if (!case_sensitive_) {
        for (char& c : m) c = fold(c);
      }
    }
  }

  const std::vector<std::string>& markers() const noexcept { return markers_; }
  bool case_sensitive() const noexcept { return case_sensitive_; }

  // True when some marker is a prefix of `text` ending at a word boundary,
  // after stripping leading whitespace, quotes and dashes. A space inside a
  // marker matches any whitespace run.
  bool matches(std::string_view text) const noexcept {
    text = strip_openers(text);
    for (const auto& m : markers_) {
      if (prefix_at_boundary(text, m)) return true;
    }
    return false;
  }

  friend bool operator==(const BranchingSet&, const BranchingSet&) = default;

 private:
  static char fold(char c) noexcept { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

  static bool is_word_char(char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  }

  static std::string_view strip_openers(std::string_view s) noexcept {
    static constexpr std::string_view kMultiByte[] = {
        "\xE2\x80\x9C", "\xE2\x80\x9D", "\xE2\x80\x98", "\xE2\x80\x99",  // curly quotes
        "\xC2\xAB",     "\xC2\xBB",                                      // guillemets
        "\xE2\x80\x93", "\xE2\x80\x94", "\xE2\x80\x95"};                 // en/em dash, bar
    for (;;) {
      if (s.empty()) return s;
      char c = s.front();
      if (is_ascii_space(c) || c == '"' || c == '\'' || c == '`' || c == '-') {
        s.remove_prefix(1);
        continue;
      }
      bool stripped = false;
      for (auto seq : kMultiByte) {
        if (s.starts_with(seq)) {
          s.remove_prefix(seq.size());
          stripped = true;
          break;
        }
      }
      if (!stripped) return s;
    }
  }

  bool prefix_at_boundary(std::string_view text, std::string_view marker) const noexcept {
    std::size_t t = 0;
    for (std::size_t i = 0; i < marker.size(); ++i) {
      if (marker[i] == ' ') {
        if (t >= text.size() || !is_ascii_space(text[t])) return false;
        while (t < text.size() && is_ascii_space(text[t])) ++t;
        continue;
      }
      if (t >= text.size()) return false;
      char c = case_sensitive_ ? text[t] : fold(text[t]);
      if (c != marker[i]) return false;
      ++t;
    }
    return t == text.size() || !is_word_char(text[t]);
  }

  std::vector<std::string> markers_;
  bool case_sensitive_ = false;
};

// One marker per line; '#' starts a comment.
inline BranchingSet parse_branching_set(std::istream& in, bool case_sensitive = false) {
  std::vector<std::string> markers;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r\n\v\f");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r\n\v\f");
    markers.push_back(line.substr(first, last - first + 1));
  }
  if (markers.empty()) throw DataError("marker file lists no markers");
  return BranchingSet(std::move(markers), case_sensitive);
}

inline BranchingSet load_branching_set(const std::string& path, bool case_sensitive = false) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open marker file '" + path + "'");
  return parse_branching_set(in, case_sensitive);
}

inline bool is_branching(const Sentence& sentence, const BranchingSet& markers) noexcept {
  return markers.matches(sentence.text);
}

struct PoisonOutcome {
  ReasoningTrace trace;
  PoisonReport report;
};

// Drops the sentences at `removed` (sorted, unique). Each survivor keeps the
// separator that originally followed the previous survivor, so every surviving
// sentence boundary is byte-identical to the original one.
inline ReasoningTrace remove_sentences(const ReasoningTrace& trace, const std::vector<std::size_t>& removed) {
  ReasoningTrace out = trace;
  out.sentences.clear();
  out.poison_report.reset();
  const auto& in = trace.sentences;
  std::size_t r = 0;
  std::optional<std::size_t> prev_kept;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (r < removed.size() && removed[r] == i) {
      ++r;
      continue;
    }
    Sentence s = in[i];
    std::size_t sep_from = prev_kept ? *prev_kept + 1 : 0;
    s.leading_separator = in[sep_from].leading_separator;
    s.index = out.sentences.size();
    out.sentences.push_back(std::move(s));
    prev_kept = i;
  }
  return out;
}

namespace detail {

inline PoisonOutcome apply_removal(const ReasoningTrace& trace, std::vector<std::size_t> removed, PoisonMethod method,
                                   std::size_t budget, std::optional<std::uint64_t> seed) {
  PoisonReport report;
  report.trace_id = trace.id;
  report.method = method;
  report.total_token_count = trace.token_count();
  report.budget = budget;
  report.seed = seed;
  for (std::size_t i : removed) report.removed_token_count += trace.sentences[i].token_count;
  ReasoningTrace poisoned = remove_sentences(trace, removed);
  report.removed_indices = std::move(removed);
  poisoned.poison_report = report;
  return {std::move(poisoned), std::move(report)};
}

}  // namespace detail

// In-order scan removing branching sentences until `budget` removals.
inline PoisonOutcome traceguard_poison(const ReasoningTrace& trace, const BranchingSet& markers, std::size_t budget) {
  std::vector<std::size_t> removed;
  for (const auto& s : trace.sentences) {
    if (removed.size() >= budget) break;
    if (is_branching(s, markers)) removed.push_back(s.index);
  }
  return detail::apply_removal(trace, std::move(removed), PoisonMethod::traceguard, budget, std::nullopt);
}

// Removes min(count, n) sentences uniformly without replacement. The stream is
// seeded from (seed, trace id), so corpus order and threading do not matter.
inline PoisonOutcome random_poison(const ReasoningTrace& trace, std::size_t count, std::uint64_t seed) {
  const std::size_t n = trace.sentences.size();
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> removed;
  removed.reserve(std::min(count, n));
  Rng rng(trace_seed(seed, trace.id));
  std::sample(all.begin(), all.end(), std::back_inserter(removed), std::min(count, n), rng);
  std::sort(removed.begin(), removed.end());
  return detail::apply_removal(trace, std::move(removed), PoisonMethod::random, count, seed);
}

struct MatchedPoison {
  PoisonOutcome traceguard;
  PoisonOutcome random;
};

// Random baseline removing exactly as many sentences as TraceGuard did. The
// random report carries the TraceGuard budget and removal count.
inline MatchedPoison match_budget_random(const ReasoningTrace& trace, const BranchingSet& markers, std::size_t budget,
                                         std::uint64_t seed) {
  PoisonOutcome guard = traceguard_poison(trace, markers, budget);
  const std::size_t matched = guard.report.removed_indices.size();
  PoisonOutcome rnd = random_poison(trace, matched, seed);
  rnd.report.budget = budget;
  rnd.report.traceguard_removed_count = matched;
  rnd.trace.poison_report = rnd.report;
  return {std::move(guard), std::move(rnd)};
}

// ---- corpus driver ---------------------------------------------------------

struct CorpusPoisonOptions {
  PoisonMethod method = PoisonMethod::traceguard;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  bool match_traceguard = false;
  BranchingSet markers;
  unsigned threads = 1;
};

struct CorpusPoisonSummary {
  std::size_t traces = 0;
  std::size_t sentences_removed = 0;
  std::size_t tokens_removed = 0;
};

inline std::vector<ReasoningTrace> poison_corpus(const std::vector<ReasoningTrace>& corpus,
                                                 const CorpusPoisonOptions& opt) {
  if (opt.method == PoisonMethod::gaussian) {
    throw ConstraintError("gaussian poisoning acts on logits, not on sentence corpora");
  }
  std::vector<ReasoningTrace> out(corpus.size());
  parallel_for_index(corpus.size(), opt.threads, [&](std::size_t i) {
    const ReasoningTrace& t = corpus[i];
    if (opt.method == PoisonMethod::traceguard) {
      out[i] = traceguard_poison(t, opt.markers, opt.budget).trace;
    } else if (opt.match_traceguard) {
      out[i] = match_budget_random(t, opt.markers, opt.budget, opt.seed).random.trace;
    } else {
      out[i] = random_poison(t, opt.budget, opt.seed).trace;
    }
  });
  return out;
}

inline CorpusPoisonSummary summarize(const std::vector<ReasoningTrace>& poisoned) {
  CorpusPoisonSummary s;
  s.traces = poisoned.size();
  for (const auto& t : poisoned) {
    if (!t.poison_report) continue;
    s.sentences_removed += t.poison_report->removed_indices.size();
    s.tokens_removed += t.poison_report->removed_token_count;
  }
  return s;
}

}  // namespace traceguard
