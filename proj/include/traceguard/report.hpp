#pragma once

// Token-accounting table over poisoned corpora: one row per (method, budget).

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "traceguard/errors.hpp"
#include "traceguard/trace_model.hpp"

namespace traceguard {

struct ReportRow {
  PoisonMethod method = PoisonMethod::traceguard;
  std::size_t budget = 0;
  std::size_t traces = 0;
  double mean_tokens_removed = 0.0;
  double median_tokens_removed = 0.0;
  double mean_sentences_removed = 0.0;
  double mean_total_tokens = 0.0;
  std::map<std::size_t, std::size_t> sentences_histogram;  // sentences removed -> trace count
};

inline std::vector<ReportRow> aggregate_reports(const std::vector<ReasoningTrace>& traces) {
  struct Acc {
    std::vector<std::size_t> tokens;
    std::size_t sentences = 0;
    std::size_t total_tokens = 0;
    std::map<std::size_t, std::size_t> hist;
  };
  std::map<std::tuple<int, std::size_t>, Acc> groups;
  for (const auto& t : traces) {
    if (!t.poison_report) throw DataError("trace '" + t.id + "' has no poison_report");
    const PoisonReport& r = *t.poison_report;
    Acc& a = groups[{static_cast<int>(r.method), r.budget}];
    a.tokens.push_back(r.removed_token_count);
    a.sentences += r.removed_indices.size();
    a.total_tokens += r.total_token_count;
    ++a.hist[r.removed_indices.size()];
  }
  std::vector<ReportRow> rows;
  for (auto& [key, a] : groups) {
    ReportRow row;
    row.method = static_cast<PoisonMethod>(std::get<0>(key));
    row.budget = std::get<1>(key);
    row.traces = a.tokens.size();
    const double n = static_cast<double>(row.traces);
    double sum = 0.0;
    for (std::size_t v : a.tokens) sum += static_cast<double>(v);
    row.mean_tokens_removed = sum / n;
    std::sort(a.tokens.begin(), a.tokens.end());
    const std::size_t mid = a.tokens.size() / 2;
    row.median_tokens_removed = a.tokens.size() % 2 == 1
                                    ? static_cast<double>(a.tokens[mid])
                                    : (static_cast<double>(a.tokens[mid - 1]) + static_cast<double>(a.tokens[mid])) / 2.0;
    row.mean_sentences_removed = static_cast<double>(a.sentences) / n;
    row.mean_total_tokens = static_cast<double>(a.total_tokens) / n;
    row.sentences_histogram = std::move(a.hist);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline constexpr const char* kReportHeader[] = {"method",
                                                "budget",
                                                "traces",
                                                "mean_tokens_removed",
                                                "median_tokens_removed",
                                                "mean_sentences_removed",
                                                "mean_total_tokens",
                                                "sentences_removed_histogram"};

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Histogram cells are "count:traces" pairs joined by ';'.
inline void write_report(const std::vector<ReportRow>& rows, std::ostream& out, char delim = ',') {
  bool first = true;
  for (const char* h : kReportHeader) {
    if (!first) out << delim;
    out << h;
    first = false;
  }
  out << '\n';
  for (const auto& r : rows) {
    out << to_string(r.method) << delim << r.budget << delim << r.traces << delim << format_real(r.mean_tokens_removed)
        << delim << format_real(r.median_tokens_removed) << delim << format_real(r.mean_sentences_removed) << delim
        << format_real(r.mean_total_tokens) << delim;
    bool first_bin = true;
    for (const auto& [count, traces] : r.sentences_histogram) {
      if (!first_bin) out << ';';
      out << count << ':' << traces;
      first_bin = false;
    }
    out << '\n';
  }
}

}  // namespace traceguard
