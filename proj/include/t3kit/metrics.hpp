// Copyright 2026 The t3kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "t3kit/task_heads.hpp"
#include "t3kit/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace t3kit::metrics {

struct RecognitionScore {
  double acc_action = 0.0;
  double acc_verb = 0.0;
  double acc_noun = 0.0;
};

/// acc_action counts a clip only when verb and noun are both right.
inline RecognitionScore recognition_accuracy(std::span<const ActionPrediction> preds,
                                             std::span<const ActionTarget> targets) {
  if (preds.size() != targets.size())
    throw std::invalid_argument("recognition_accuracy: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(targets.size()) + " targets");
  if (preds.empty()) throw std::invalid_argument("recognition_accuracy: empty evaluation set");
  std::size_t verb = 0, noun = 0, both = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool v = preds[i].verb == targets[i].verb;
    const bool n = preds[i].noun == targets[i].noun;
    verb += v;
    noun += n;
    both += v && n;
  }
  const double total = static_cast<double>(preds.size());
  return {static_cast<double>(both) / total, static_cast<double>(verb) / total, static_cast<double>(noun) / total};
}

using Tokens = std::vector<std::string>;

struct BleuStats {
  std::vector<long> matches;  // clipped, per order
  std::vector<long> totals;   // candidate n-grams, per order
  long candidate_length = 0;
  long reference_length = 0;
};

inline constexpr double kBleuLogFloor = 1e-9;

namespace detail {
inline std::map<Tokens, long> ngram_counts(const Tokens& s, int n) {
  std::map<Tokens, long> out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
    ++out[Tokens(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return out;
}
}  // namespace detail

/// Corpus statistics: clipped n-gram matches against the max count over each
/// candidate's references, and the closest reference length (shorter on ties).
inline BleuStats bleu_stats(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                            int max_order) {
  if (candidates.size() != references.size())
    throw std::invalid_argument("bleu: " + std::to_string(candidates.size()) + " candidates for " +
                                std::to_string(references.size()) + " reference sets");
  if (max_order < 1) throw std::invalid_argument("bleu: order must be >= 1");
  BleuStats st;
  st.matches.assign(static_cast<std::size_t>(max_order), 0);
  st.totals.assign(static_cast<std::size_t>(max_order), 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Tokens& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw std::invalid_argument("bleu: candidate " + std::to_string(i) + " has no reference");
    const long c = static_cast<long>(cand.size());
    long best = static_cast<long>(refs.front().size());
    for (const Tokens& r : refs) {
      const long len = static_cast<long>(r.size());
      if (std::labs(len - c) < std::labs(best - c) || (std::labs(len - c) == std::labs(best - c) && len < best)) best = len;
    }
    st.candidate_length += c;
    st.reference_length += best;
    for (int n = 1; n <= max_order; ++n) {
      const auto cc = detail::ngram_counts(cand, n);
      std::map<Tokens, long> max_ref;
      for (const Tokens& r : refs)
        for (const auto& [g, k] : detail::ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
      for (const auto& [g, k] : cc) {
        st.totals[static_cast<std::size_t>(n - 1)] += k;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) st.matches[static_cast<std::size_t>(n - 1)] += std::min(k, it->second);
      }
    }
  }
  return st;
}

/// Corpus BLEU with uniform weights over orders 1..n. Orders with no
/// candidate n-grams at all are left out of the geometric mean; an order with
/// n-grams but no matches contributes log(1e-9).
inline double bleu_from_stats(const BleuStats& st) {
  double log_sum = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < st.totals.size(); ++i) {
    if (st.totals[i] == 0) continue;
    const double p = static_cast<double>(st.matches[i]) / static_cast<double>(st.totals[i]);
    log_sum += p > 0.0 ? std::log(p) : std::log(kBleuLogFloor);
    ++used;
  }
  const long c = st.candidate_length, r = st.reference_length;
  if (used == 0) return (c == 0 && r == 0) ? 1.0 : 0.0;
  double bp = 1.0;
  if (c == 0)
    bp = 0.0;
  else if (c <= r)
    bp = std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / used);
}

inline double bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references, int n) {
  return bleu_from_stats(bleu_stats(candidates, references, n));
}

/// Single reference per candidate.
inline double bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n) {
  std::vector<std::vector<Tokens>> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back({r});
  return bleu(candidates, refs, n);
}

struct BleuScore {
  double b1 = 0.0;
  double b4 = 0.0;
};

/// B@1 and B@4 over raw answer strings (tokenized by text::tokenize).
inline BleuScore answer_bleu(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  std::vector<Tokens> c, r;
  for (const auto& s : candidates) c.push_back(text::tokenize(s));
  for (const auto& s : references) r.push_back(text::tokenize(s));
  return {bleu(c, r, 1), bleu(c, r, 4)};
}

/// Element-wise arithmetic mean of equally sized non-negative vectors.
inline std::vector<double> aggregate(std::span<const std::vector<double>> prob_sets) {
  if (prob_sets.empty()) throw std::invalid_argument("aggregate: no probability vectors");
  const std::size_t width = prob_sets.front().size();
  std::vector<double> out(width, 0.0);
  for (const auto& p : prob_sets) {
    if (p.size() != width)
      throw std::invalid_argument("aggregate: width " + std::to_string(p.size()) + " differs from " +
                                  std::to_string(width));
    for (std::size_t i = 0; i < width; ++i) {
      if (p[i] < 0.0) throw std::invalid_argument("aggregate: negative probability");
      out[i] += p[i];
    }
  }
  for (double& v : out) v /= static_cast<double>(prob_sets.size());
  return out;
}

}  // namespace t3kit::metrics
