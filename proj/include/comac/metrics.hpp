#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "comac/corpus.hpp"
#include "comac/error.hpp"

namespace comac {

/// Per-entry persona grounding metrics pooled over rounds.
struct PgReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0, f1 = 0.0, precision = 0.0, recall = 0.0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

inline PgReport pg_report_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                                      std::size_t fn) {
  PgReport r{tp, fp, tn, fn};
  const auto total = static_cast<double>(r.total());
  if (total == 0) throw EmptyEval("no persona entries to evaluate");
  r.accuracy = static_cast<double>(tp + tn) / total;
  r.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline PgReport pg_metrics(const std::vector<std::vector<bool>>& predicted,
                           const std::vector<std::vector<bool>>& labels) {
  if (predicted.size() != labels.size()) throw ShapeError("prediction/label round counts differ");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t r = 0; r < predicted.size(); ++r) {
    if (predicted[r].size() != labels[r].size())
      throw ShapeError("prediction/label sizes differ in round " + std::to_string(r));
    for (std::size_t i = 0; i < labels[r].size(); ++i) {
      const bool p = predicted[r][i], y = labels[r][i];
      (p ? (y ? tp : fp) : (y ? fn : tn)) += 1;
    }
  }
  return pg_report_from_counts(tp, fp, tn, fn);
}

inline double kg_accuracy(const std::vector<std::size_t>& predicted,
                          const std::vector<std::size_t>& labels) {
  if (predicted.size() != labels.size()) throw ShapeError("prediction/label counts differ");
  if (predicted.empty()) throw EmptyEval("no rounds to evaluate");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

/// LCS F-measure over corpus-tokenizer tokens.
inline double rouge_l(const std::string& candidate, const std::string& reference) {
  const auto c = split_words(candidate), r = split_words(reference);
  if (c.empty() || r.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(c, r));
  if (lcs == 0) return 0.0;
  return harmonic(lcs / static_cast<double>(c.size()), lcs / static_cast<double>(r.size()));
}

/// Multiset unigram overlap F1.
inline double unigram_f1(const std::string& candidate, const std::string& reference) {
  const auto c = split_words(candidate), r = split_words(reference);
  if (c.empty() || r.empty()) return 0.0;
  std::map<std::string, long> counts;
  for (const auto& t : r) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : c)
    if (auto it = counts.find(t); it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  if (overlap == 0) return 0.0;
  return harmonic(static_cast<double>(overlap) / static_cast<double>(c.size()),
                  static_cast<double>(overlap) / static_cast<double>(r.size()));
}

struct TextScores {
  double f1 = 0.0;
  double rouge_l = 0.0;
};

struct EvalReport {
  PgReport pg;
  double kg_accuracy = 0.0;
  std::optional<TextScores> text;
};

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["pg"] = {{"accuracy", r.pg.accuracy}, {"f1", r.pg.f1},   {"precision", r.pg.precision},
             {"recall", r.pg.recall},     {"tp", r.pg.tp},   {"fp", r.pg.fp},
             {"tn", r.pg.tn},             {"fn", r.pg.fn}};
  j["kg_accuracy"] = r.kg_accuracy;
  if (r.text) j["text"] = {{"f1", r.text->f1}, {"rouge_l", r.text->rouge_l}};
  j["bleu"] = nullptr;
  j["ppl"] = nullptr;
  return j;
}

inline std::string csv_header() {
  return "kg_accuracy,pg_accuracy,pg_f1,pg_precision,pg_recall";
}

inline std::string csv_fields(const EvalReport& r) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << r.kg_accuracy << ',' << r.pg.accuracy << ',' << r.pg.f1 << ','
      << r.pg.precision << ',' << r.pg.recall;
  return out.str();
}

}  // namespace comac
