#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "hnmt/common.hpp"

namespace hnmt {

// Corpus-level BLEU-4: clipped n-gram precision under a brevity penalty,
// reported on the 0-100 scale.
struct BleuReport {
  double bleu = 0.0;
  std::array<double, 4> precisions{};
  double brevity_penalty = 1.0;
  std::size_t candidate_tokens = 0;
  std::size_t reference_tokens = 0;
  bool smoothed = false;  // add-one smoothing kicked in on some order
};

namespace detail {

template <class Token>
std::map<std::vector<Token>, std::size_t> ngram_counts(const std::vector<Token>& tokens,
                                                       std::size_t n) {
  std::map<std::vector<Token>, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<Token>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace detail

// Single-reference corpus BLEU. With `smooth` (default), orders n >= 2 whose
// clipped match count is zero fall back to (m+1)/(t+1); unigrams never
// smooth, so disjoint corpora still score 0.
template <class Token>
BleuReport bleu(const std::vector<std::vector<Token>>& candidates,
                const std::vector<std::vector<Token>>& references, bool smooth = true) {
  if (candidates.empty()) throw ContractError("bleu: empty corpus");
  if (candidates.size() != references.size())
    throw ContractError("bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                        std::to_string(references.size()) + " references");

  std::array<std::size_t, 4> matched{}, total{};
  BleuReport r;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    r.candidate_tokens += candidates[i].size();
    r.reference_tokens += references[i].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      auto cand = detail::ngram_counts(candidates[i], n);
      auto ref = detail::ngram_counts(references[i], n);
      for (const auto& [gram, count] : cand) {
        total[n - 1] += count;
        auto it = ref.find(gram);
        if (it != ref.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }

  if (r.candidate_tokens == 0) return r;  // nothing generated anywhere
  if (r.candidate_tokens < r.reference_tokens)
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.reference_tokens) /
                                           static_cast<double>(r.candidate_tokens));

  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double p;
    if (matched[n] > 0) {
      p = static_cast<double>(matched[n]) / static_cast<double>(total[n]);
    } else if (n >= 1 && smooth) {
      p = 1.0 / static_cast<double>(total[n] + 1);
      r.smoothed = true;
    } else {
      p = 0.0;
    }
    r.precisions[n] = p;
    if (p <= 0.0) return r;  // bleu stays 0
    log_sum += std::log(p);
  }
  r.bleu = 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

}  // namespace hnmt
