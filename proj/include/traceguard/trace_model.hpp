#pragma once

// Reasoning-trace data model: sentence segmentation, whitespace token
// counting, and the line-delimited JSON corpus format.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "traceguard/errors.hpp"

namespace traceguard {

using Json = nlohmann::ordered_json;

inline bool is_ascii_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Number of maximal non-whitespace runs.
inline std::size_t count_tokens(std::string_view text) noexcept {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    bool space = is_ascii_space(c);
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

struct Sentence {
  std::size_t index = 0;
  std::string text;
  std::string leading_separator;
  std::size_t token_count = 0;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

namespace detail {

inline bool ends_with_terminator(std::string_view body) noexcept {
  if (body.empty()) return false;
  char last = body.back();
  if (last == '.' || last == '?' || last == '!') return true;
  // U+2026 HORIZONTAL ELLIPSIS
  return body.size() >= 3 && body.substr(body.size() - 3) == "\xE2\x80\xA6";
}

}  // namespace detail

// Splits reasoning text into sentences. A sentence ends where a whitespace run
// begins, provided the text before it ends in a terminator (. ? ! …) or the
// whitespace run contains a line break. Terminators not followed by whitespace
// (3.14, e.g.x) never split. Whitespace after the final sentence is kept in
// that sentence's text, so joining separators and texts reproduces the input.
inline std::vector<Sentence> segment_sentences(std::string_view text) {
  std::vector<Sentence> out;
  const std::size_t n = text.size();
  std::size_t pos = 0;
  while (pos < n) {
    std::size_t sep_begin = pos;
    while (pos < n && is_ascii_space(text[pos])) ++pos;
    std::string_view sep = text.substr(sep_begin, pos - sep_begin);
    if (pos == n) {
      if (out.empty()) {
        out.push_back(Sentence{0, "", std::string(sep), 0});
      } else {
        out.back().text.append(sep);
      }
      break;
    }
    std::size_t body_begin = pos;
    while (pos < n) {
      if (!is_ascii_space(text[pos])) {
        ++pos;
        continue;
      }
      std::size_t run_end = pos;
      bool line_break = false;
      while (run_end < n && is_ascii_space(text[run_end])) {
        line_break = line_break || text[run_end] == '\n' || text[run_end] == '\r';
        ++run_end;
      }
      if (line_break || detail::ends_with_terminator(text.substr(body_begin, pos - body_begin))) break;
      pos = run_end;
    }
    std::string body(text.substr(body_begin, pos - body_begin));
    std::size_t tokens = count_tokens(body);
    out.push_back(Sentence{out.size(), std::move(body), std::string(sep), tokens});
  }
  return out;
}

inline std::string join_sentences(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    out += s.leading_separator;
    out += s.text;
  }
  return out;
}

enum class PoisonMethod { traceguard, random, gaussian };

inline std::string_view to_string(PoisonMethod m) noexcept {
  switch (m) {
    case PoisonMethod::traceguard: return "traceguard";
    case PoisonMethod::random: return "random";
    case PoisonMethod::gaussian: return "gaussian";
  }
  return "traceguard";
}

inline PoisonMethod parse_poison_method(std::string_view s) {
  if (s == "traceguard") return PoisonMethod::traceguard;
  if (s == "random") return PoisonMethod::random;
  if (s == "gaussian") return PoisonMethod::gaussian;
  throw DataError("unknown poison method '" + std::string(s) + "'");
}

// Provenance for one poisoned trace. Indices refer to the unpoisoned trace.
struct PoisonReport {
  std::string trace_id;
  PoisonMethod method = PoisonMethod::traceguard;
  std::vector<std::size_t> removed_indices;
  std::size_t removed_token_count = 0;
  std::size_t total_token_count = 0;
  std::size_t budget = 0;
  std::optional<std::uint64_t> seed;
  // Set by budget-matched random runs: how many sentences TraceGuard removed.
  std::optional<std::size_t> traceguard_removed_count;

  friend bool operator==(const PoisonReport&, const PoisonReport&) = default;
};

struct ReasoningTrace {
  std::string id;
  std::string prompt;
  std::vector<Sentence> sentences;
  std::string answer;
  // Unrecognized record keys, preserved in their original order.
  Json extra = Json::object();
  std::optional<PoisonReport> poison_report;

  static ReasoningTrace from_text(std::string id, std::string prompt, std::string_view reasoning,
                                  std::string answer) {
    ReasoningTrace t;
    t.id = std::move(id);
    t.prompt = std::move(prompt);
    t.sentences = segment_sentences(reasoning);
    t.answer = std::move(answer);
    return t;
  }

  std::string reasoning() const { return join_sentences(sentences); }

  std::size_t token_count() const noexcept {
    std::size_t total = 0;
    for (const auto& s : sentences) total += s.token_count;
    return total;
  }

  friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

// ---- corpus serialization ------------------------------------------------

inline Json report_to_json(const PoisonReport& r) {
  Json j = Json::object();
  j["trace_id"] = r.trace_id;
  j["method"] = std::string(to_string(r.method));
  j["removed_indices"] = r.removed_indices;
  j["removed_token_count"] = r.removed_token_count;
  j["total_token_count"] = r.total_token_count;
  j["budget"] = r.budget;
  j["seed"] = r.seed ? Json(*r.seed) : Json(nullptr);
  if (r.traceguard_removed_count) j["traceguard_removed_count"] = *r.traceguard_removed_count;
  return j;
}

namespace detail {

inline const Json& require(const Json& obj, const char* key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(std::string(where) + ": missing required field '" + key + "'");
  return *it;
}

inline std::string require_string(const Json& obj, const char* key, std::string_view where) {
  const Json& v = require(obj, key, where);
  if (!v.is_string()) throw DataError(std::string(where) + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline std::size_t require_count(const Json& obj, const char* key, std::string_view where) {
  const Json& v = require(obj, key, where);
  if (!v.is_number_unsigned()) {
    throw DataError(std::string(where) + ": field '" + key + "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace detail

inline PoisonReport report_from_json(const Json& j, std::string_view where) {
  if (!j.is_object()) throw DataError(std::string(where) + ": poison_report must be an object");
  PoisonReport r;
  r.trace_id = detail::require_string(j, "trace_id", where);
  r.method = parse_poison_method(detail::require_string(j, "method", where));
  const Json& idx = detail::require(j, "removed_indices", where);
  if (!idx.is_array()) throw DataError(std::string(where) + ": removed_indices must be an array");
  for (const auto& v : idx) {
    if (!v.is_number_unsigned()) throw DataError(std::string(where) + ": removed_indices must be nonnegative");
    r.removed_indices.push_back(v.get<std::size_t>());
  }
  r.removed_token_count = detail::require_count(j, "removed_token_count", where);
  r.total_token_count = detail::require_count(j, "total_token_count", where);
  r.budget = detail::require_count(j, "budget", where);
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) {
    if (!it->is_number_unsigned()) throw DataError(std::string(where) + ": seed must be an unsigned integer");
    r.seed = it->get<std::uint64_t>();
  }
  if (auto it = j.find("traceguard_removed_count"); it != j.end()) {
    r.traceguard_removed_count = detail::require_count(j, "traceguard_removed_count", where);
  }
  return r;
}

inline Json trace_to_json(const ReasoningTrace& t) {
  Json j = Json::object();
  j["id"] = t.id;
  j["prompt"] = t.prompt;
  j["reasoning"] = t.reasoning();
  j["answer"] = t.answer;
  for (const auto& [key, value] : t.extra.items()) j[key] = value;
  if (t.poison_report) j["poison_report"] = report_to_json(*t.poison_report);
  return j;
}

inline ReasoningTrace trace_from_json(const Json& j, std::string_view where) {
  if (!j.is_object()) throw DataError(std::string(where) + ": record must be a JSON object");
  ReasoningTrace t = ReasoningTrace::from_text(
      detail::require_string(j, "id", where), detail::require_string(j, "prompt", where),
      detail::require_string(j, "reasoning", where), detail::require_string(j, "answer", where));
  for (const auto& [key, value] : j.items()) {
    if (key == "id" || key == "prompt" || key == "reasoning" || key == "answer") continue;
    if (key == "poison_report") {
      t.poison_report = report_from_json(value, where);
    } else {
      t.extra[key] = value;
    }
  }
  return t;
}

inline std::vector<ReasoningTrace> read_corpus(std::istream& in) {
  std::vector<ReasoningTrace> traces;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
    ReasoningTrace t = trace_from_json(j, where);
    if (!seen.insert(t.id).second) throw DataError(where + ": duplicate id '" + t.id + "'");
    traces.push_back(std::move(t));
  }
  return traces;
}

inline void write_corpus(const std::vector<ReasoningTrace>& traces, std::ostream& out) {
  for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

inline std::vector<ReasoningTrace> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus '" + path + "'");
  return read_corpus(in);
}

inline void save_corpus(const std::vector<ReasoningTrace>& traces, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus '" + path + "'");
  write_corpus(traces, out);
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace traceguard
