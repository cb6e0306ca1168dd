#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hnmt/common.hpp"
#include "hnmt/data.hpp"
#include "hnmt/langtree.hpp"
#include "json.hpp"

namespace hnmt {

struct SynthTask {
  std::string src, tgt;
  std::size_t pairs = 0;
};

// Deterministic toy-language generator. A latent meaning (a concept-id
// sequence) renders into each language by token-table substitution at family
// nodes plus suffix marking and a local swap at the leaf, so languages
// sharing more ancestors share more surface structure.
struct SynthSpec {
  std::size_t base_vocab = 120;
  std::size_t len_min = 3, len_max = 9;
  double mark_rate = 0.15;   // per-language fraction of marked token types
  double swap_rate = 0.2;    // per-language chance of swapping adjacent tokens
  double base_share = 0.03;  // fraction of concepts rendered by the shared base table
  std::uint64_t seed = 1;
  std::vector<SynthTask> tasks;

  static SynthSpec from_json(const nlohmann::json& j) {
    SynthSpec s;
    s.base_vocab = j.value("base_vocab", s.base_vocab);
    s.len_min = j.value("len_min", s.len_min);
    s.len_max = j.value("len_max", s.len_max);
    s.mark_rate = j.value("mark_rate", s.mark_rate);
    s.swap_rate = j.value("swap_rate", s.swap_rate);
    s.base_share = j.value("base_share", s.base_share);
    s.seed = j.value("seed", s.seed);
    if (s.base_vocab < 8) throw ConfigError("synthetic: base_vocab must be >= 8");
    if (s.len_min < 1 || s.len_max < s.len_min)
      throw ConfigError("synthetic: need 1 <= len_min <= len_max");
    if (!j.contains("tasks") || !j["tasks"].is_array() || j["tasks"].empty())
      throw ConfigError("synthetic: a non-empty \"tasks\" array is required");
    for (const auto& t : j["tasks"]) {
      SynthTask task;
      task.src = t.at("src").get<std::string>();
      task.tgt = t.at("tgt").get<std::string>();
      task.pairs = t.at("pairs").get<std::size_t>();
      if (task.pairs < 1) throw ConfigError("synthetic: pair counts must be >= 1");
      s.tasks.push_back(std::move(task));
    }
    return s;
  }
};

namespace detail {

constexpr int kSynthLevels = 4;

inline double unit_hash(std::uint64_t seed, const std::string& label) {
  return static_cast<double>(derive_seed(seed, label) >> 11) * 0x1.0p-53;
}

// concept stratum: 0 renders through the shared base table, level k >= 1
// through the k-th family on the language's chain (capped at chain length)
inline int concept_level(const SynthSpec& spec, std::size_t concept_id) {
  const double u = unit_hash(spec.seed, "level|" + std::to_string(concept_id));
  if (u < spec.base_share) return 0;
  const double rest = (u - spec.base_share) / (1.0 - spec.base_share);
  return 1 + std::min(kSynthLevels - 1, static_cast<int>(rest * kSynthLevels));
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

struct LanguageRenderer {
  const SynthSpec* spec;
  std::string language;
  std::vector<std::string> chain;  // family ids root -> leaf

  std::string surface(std::size_t concept_id) const {
    const int level = concept_level(*spec, concept_id);
    const int k = std::min<int>(level, static_cast<int>(chain.size()));
    std::string tok;
    if (k == 0) {
      tok = "w" + std::to_string(concept_id);
    } else {
      const std::uint64_t table = derive_seed(spec->seed, "table|" + chain[static_cast<std::size_t>(k - 1)]);
      tok = "t" + hex64(mix64(table + concept_id));
    }
    if (unit_hash(spec->seed, "mark|" + language + "|" + std::to_string(concept_id)) <
        spec->mark_rate)
      tok += "." + language;
    return tok;
  }

  std::vector<std::string> render(const std::vector<std::size_t>& meaning) const {
    std::vector<std::string> out;
    out.reserve(meaning.size());
    for (std::size_t c : meaning) out.push_back(surface(c));
    // local swap: language-specific reordering of adjacent tokens
    std::size_t i = 0;
    while (i + 1 < out.size()) {
      const std::string key = "swap|" + language + "|" + std::to_string(meaning[i]) + "|" +
                              std::to_string(meaning[i + 1]);
      if (unit_hash(spec->seed, key) < spec->swap_rate) {
        std::swap(out[i], out[i + 1]);
        i += 2;
      } else {
        ++i;
      }
    }
    return out;
  }
};

inline LanguageRenderer make_renderer(const SynthSpec& spec, const LanguageTree& pruned,
                                      const std::string& language) {
  return {&spec, language, pruned.family_chain(language)};
}

}  // namespace detail

// Parallel corpus for one task. Both directions of a language pair draw the
// same meaning stream, so a shared corpus stays mirror-consistent.
inline std::vector<SentencePair> generate_task(const SynthSpec& spec, const LanguageTree& pruned,
                                               const SynthTask& task) {
  const auto src_r = detail::make_renderer(spec, pruned, task.src);
  const auto tgt_r = detail::make_renderer(spec, pruned, task.tgt);
  const std::string lo = std::min(task.src, task.tgt);
  const std::string hi = std::max(task.src, task.tgt);
  Rng rng(derive_seed(spec.seed, "meanings|" + lo + "|" + hi));
  std::vector<SentencePair> pairs;
  pairs.reserve(task.pairs);
  for (std::size_t i = 0; i < task.pairs; ++i) {
    const std::size_t len = spec.len_min + rng.below(spec.len_max - spec.len_min + 1);
    std::vector<std::size_t> meaning(len);
    for (auto& c : meaning) c = rng.below(spec.base_vocab);
    pairs.push_back({src_r.render(meaning), tgt_r.render(meaning)});
  }
  return pairs;
}

inline std::map<std::string, std::vector<SentencePair>> generate_synthetic(
    const SynthSpec& spec, const LanguageTree& pruned) {
  std::map<std::string, std::vector<SentencePair>> out;
  for (const auto& t : spec.tasks) {
    if (t.src == t.tgt) throw ConfigError("synthetic: task " + t.src + "->" + t.tgt +
                                          " maps a language onto itself");
    out.emplace(t.src + "-" + t.tgt, generate_task(spec, pruned, t));
  }
  return out;
}

// Jaccard overlap of the surface token types on the two sides of a parallel
// corpus; the generator's graded-similarity statistic.
inline double token_overlap(const std::vector<SentencePair>& pairs) {
  std::set<std::string> a, b;
  for (const auto& p : pairs) {
    a.insert(p.src.begin(), p.src.end());
    b.insert(p.tgt.begin(), p.tgt.end());
  }
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace hnmt
