#pragma once

// Corpus BLEU-4, next-action F1/accuracy and joint goal accuracy.

#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "codial/util.hpp"

namespace codial::metrics {

// Lowercased tokens; runs of letters/digits form words and every other
// non-space character is a token of its own.
inline std::vector<std::string> bleu_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    if (!std::isspace(c)) out.emplace_back(1, static_cast<char>(c));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

enum class Smoothing { none, exp };

struct BleuStats {
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  std::size_t matches[4] = {0, 0, 0, 0};
  std::size_t totals[4] = {0, 0, 0, 0};
};

inline BleuStats bleu_stats(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  if (candidates.size() != references.size()) throw Error("InvalidArgument", "candidate and reference counts differ");
  BleuStats st;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto hyp = bleu_tokens(candidates[i]);
    auto ref = bleu_tokens(references[i]);
    st.hyp_len += hyp.size();
    st.ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, std::size_t> ref_counts;
      for (std::size_t k = 0; k + n <= ref.size(); ++k) ++ref_counts[{ref.begin() + k, ref.begin() + k + n}];
      std::map<std::vector<std::string>, std::size_t> hyp_counts;
      for (std::size_t k = 0; k + n <= hyp.size(); ++k) ++hyp_counts[{hyp.begin() + k, hyp.begin() + k + n}];
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        st.matches[n - 1] += it == ref_counts.end() ? 0 : std::min(count, it->second);
        st.totals[n - 1] += count;
      }
    }
  }
  return st;
}

inline double bleu_from_stats(const BleuStats& st, Smoothing smoothing = Smoothing::none) {
  if (st.hyp_len == 0) return 0;
  double log_sum = 0;
  double halving = 1;
  for (int n = 0; n < 4; ++n) {
    if (st.totals[n] == 0) return 0;
    double p;
    if (st.matches[n] > 0) {
      p = static_cast<double>(st.matches[n]) / st.totals[n];
    } else if (smoothing == Smoothing::exp) {
      halving *= 2;
      p = 1.0 / (halving * st.totals[n]);
    } else {
      return 0;
    }
    log_sum += std::log(p);
  }
  double bp = st.hyp_len < st.ref_len ? std::exp(1.0 - static_cast<double>(st.ref_len) / st.hyp_len) : 1.0;
  return 100.0 * bp * std::exp(log_sum / 4);
}

inline double bleu4(const std::vector<std::string>& candidates, const std::vector<std::string>& references,
                    Smoothing smoothing = Smoothing::none) {
  return bleu_from_stats(bleu_stats(candidates, references), smoothing);
}

// ---------------------------------------------------------------------------
// Action prediction

// One prediction per turn. An empty `predicted` is a failed turn: it counts
// against recall and accuracy but is not a wrong prediction for precision.
struct LabelPair {
  std::string predicted;
  std::string gold;
};

struct ActionScores {
  double micro_f1 = 0;
  double macro_f1 = 0;
  double accuracy = 0;
  std::size_t turns = 0;
  std::size_t correct = 0;
  bool operator==(const ActionScores&) const = default;
};

inline double f1_of(double tp, double fp, double fn) {
  if (tp == 0) return 0;
  double p = tp / (tp + fp), r = tp / (tp + fn);
  return 2 * p * r / (p + r);
}

inline ActionScores action_scores(const std::vector<LabelPair>& pairs) {
  ActionScores s;
  s.turns = pairs.size();
  if (pairs.empty()) return s;
  std::map<std::string, std::array<double, 3>> per;  // label -> tp, fp, fn
  double fp = 0, fn = 0;
  for (const auto& [pred, gold] : pairs) {
    if (pred == gold) {
      ++s.correct;
      per[gold][0] += 1;
      continue;
    }
    fn += 1;
    per[gold][2] += 1;
    if (!pred.empty()) {
      fp += 1;
      per[pred][1] += 1;
    }
  }
  s.accuracy = 100.0 * s.correct / s.turns;
  s.micro_f1 = 100.0 * f1_of(static_cast<double>(s.correct), fp, fn);
  double macro = 0;
  for (const auto& [label, c] : per) macro += f1_of(c[0], c[1], c[2]);
  s.macro_f1 = 100.0 * macro / per.size();
  return s;
}

// ---------------------------------------------------------------------------
// Joint goal accuracy

// Text form used for state comparisons: trimmed, lowercased, null for
// null / missing / empty values.
inline std::optional<std::string> normalize_value(const json& v) {
  if (v.is_null()) return std::nullopt;
  auto s = util::lower(util::trim(util::display(v)));
  if (s.empty()) return std::nullopt;
  return s;
}

using SlotState = std::map<std::string, json>;

inline bool states_match(const SlotState& predicted, const SlotState& gold) {
  std::set<std::string> keys;
  for (const auto& [k, v] : predicted) keys.insert(k);
  for (const auto& [k, v] : gold) keys.insert(k);
  for (const auto& k : keys) {
    auto p = predicted.count(k) ? normalize_value(predicted.at(k)) : std::nullopt;
    auto g = gold.count(k) ? normalize_value(gold.at(k)) : std::nullopt;
    if (p != g) return false;
  }
  return true;
}

inline double jga(const std::vector<SlotState>& predicted, const std::vector<SlotState>& gold) {
  if (predicted.size() != gold.size()) throw Error("InvalidArgument", "predicted and gold state counts differ");
  if (gold.empty()) return 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += states_match(predicted[i], gold[i]);
  return 100.0 * hits / gold.size();
}

}  // namespace codial::metrics
