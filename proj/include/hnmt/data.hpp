#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hnmt/common.hpp"
#include "hnmt/tensor.hpp"

namespace hnmt {

// whitespace-tokenized aligned sentence pair
struct SentencePair {
  std::vector<std::string> src, tgt;
};

struct EncodedPair {
  std::vector<int> src;  // plain token ids
  std::vector<int> tgt;  // wrapped in bos ... eos
};

inline std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

namespace detail {

inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

// Aligned plain-text corpus: one sentence per line, equal line counts.
// Pairs where either side tokenizes to nothing are dropped pairwise.
inline std::vector<SentencePair> load_parallel_text(const std::string& src_text,
                                                    const std::string& tgt_text,
                                                    const std::string& src_name = "source",
                                                    const std::string& tgt_name = "target") {
  std::istringstream si(src_text), ti(tgt_text);
  auto src_lines = detail::read_lines(si);
  auto tgt_lines = detail::read_lines(ti);
  if (src_lines.size() != tgt_lines.size())
    throw DataError("alignment error: " + src_name + " has " +
                    std::to_string(src_lines.size()) + " lines, " + tgt_name + " has " +
                    std::to_string(tgt_lines.size()));
  std::vector<SentencePair> pairs;
  pairs.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    SentencePair p{tokenize(src_lines[i]), tokenize(tgt_lines[i])};
    if (p.src.empty() || p.tgt.empty()) continue;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline std::vector<SentencePair> load_parallel(const std::string& src_path,
                                               const std::string& tgt_path) {
  std::ifstream sf(src_path), tf(tgt_path);
  if (!sf) throw DataError("cannot open corpus file '" + src_path + "'");
  if (!tf) throw DataError("cannot open corpus file '" + tgt_path + "'");
  std::ostringstream ss, ts;
  ss << sf.rdbuf();
  ts << tf.rdbuf();
  return load_parallel_text(ss.str(), ts.str(), src_path, tgt_path);
}

struct RawSplits {
  std::vector<SentencePair> train, validation, test;
};

// Deterministic shuffle, then 70/10/20: floor for train and validation, the
// remainder to test. A shared corpus should be split once with a seed derived
// from the unordered language pair, so that both directions agree on the
// partition and no test pair was trained on in either direction.
inline RawSplits split_pairs(std::vector<SentencePair> pairs, std::uint64_t seed) {
  if (pairs.size() < 10)
    throw DataError("dataset too small: " + std::to_string(pairs.size()) +
                    " usable pairs (minimum 10)");
  Rng rng(seed);
  rng.shuffle(pairs);
  const std::size_t n = pairs.size();
  const std::size_t n_train = static_cast<std::size_t>(0.7 * static_cast<double>(n));
  const std::size_t n_val = static_cast<std::size_t>(0.1 * static_cast<double>(n));
  RawSplits s;
  s.train.assign(pairs.begin(), pairs.begin() + n_train);
  s.validation.assign(pairs.begin() + n_train, pairs.begin() + n_train + n_val);
  s.test.assign(pairs.begin() + n_train + n_val, pairs.end());
  return s;
}

// Token ids for one language. Reserved ids come first, then an optional block
// of target-language tokens shared by every vocabulary of the experiment,
// then corpus tokens ordered by frequency (desc) and lexicographically.
class Vocabulary {
public:
  static constexpr int pad_id = 0;
  static constexpr int unk_id = 1;
  static constexpr int bos_id = 2;
  static constexpr int eos_id = 3;

  Vocabulary() = default;

  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences,
                          std::string language, std::size_t min_count = 1,
                          std::vector<std::string> target_langs = {}) {
    if (min_count < 1) throw ContractError("vocabulary min_count must be >= 1");
    Vocabulary v;
    v.language_ = std::move(language);
    v.tokens_ = {"<pad>", "<unk>", "<bos>", "<eos>"};
    std::sort(target_langs.begin(), target_langs.end());
    for (const auto& lang : target_langs) {
      v.target_tokens_[lang] = static_cast<int>(v.tokens_.size());
      v.tokens_.push_back("<2" + lang + ">");
    }
    v.reserved_ = v.tokens_.size();
    std::map<std::string, std::size_t> freq;
    for (const auto& s : sentences)
      for (const auto& t : s) ++freq[t];
    std::vector<std::pair<std::string, std::size_t>> rows(freq.begin(), freq.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    for (const auto& [tok, count] : rows)
      if (count >= min_count) v.tokens_.push_back(tok);
    for (std::size_t i = 0; i < v.tokens_.size(); ++i)
      v.ids_.emplace(v.tokens_[i], static_cast<int>(i));
    return v;
  }

  const std::string& language() const { return language_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t reserved() const { return reserved_; }

  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? unk_id : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw LookupError("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
  }

  int target_token(const std::string& lang) const {
    auto it = target_tokens_.find(lang);
    if (it == target_tokens_.end())
      throw LookupError("no reserved target token for language '" + lang + "'");
    return it->second;
  }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
  }

  // non-reserved corpus tokens, in id order
  std::vector<std::string> corpus_tokens() const {
    return {tokens_.begin() + static_cast<std::ptrdiff_t>(reserved_), tokens_.end()};
  }

private:
  std::string language_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::map<std::string, int> target_tokens_;
  std::size_t reserved_ = 4;
};

// Aligned sentence pairs for one ordered language pair, id-encoded and split.
struct TaskDataset {
  std::string source_lang, target_lang;
  std::vector<EncodedPair> train, validation, test;
  std::size_t train_pairs() const { return train.size(); }
};

inline std::vector<EncodedPair> encode_pairs(const std::vector<SentencePair>& pairs,
                                             const Vocabulary& src_vocab,
                                             const Vocabulary& tgt_vocab) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    EncodedPair e;
    e.src = src_vocab.encode(p.src);
    e.tgt.reserve(p.tgt.size() + 2);
    e.tgt.push_back(Vocabulary::bos_id);
    for (const auto& t : p.tgt) e.tgt.push_back(tgt_vocab.id(t));
    e.tgt.push_back(Vocabulary::eos_id);
    out.push_back(std::move(e));
  }
  return out;
}

inline TaskDataset make_dataset(const std::string& src_lang, const std::string& tgt_lang,
                                const RawSplits& splits, const Vocabulary& src_vocab,
                                const Vocabulary& tgt_vocab) {
  TaskDataset d;
  d.source_lang = src_lang;
  d.target_lang = tgt_lang;
  d.train = encode_pairs(splits.train, src_vocab, tgt_vocab);
  d.validation = encode_pairs(splits.validation, src_vocab, tgt_vocab);
  d.test = encode_pairs(splits.test, src_vocab, tgt_vocab);
  return d;
}

// Externally produced word vectors for one language, text format:
// "token v1 ... vd" per line, optional "count dim" header.
struct EmbeddingTable {
  std::string language;
  std::size_t dimension = 0;
  std::map<std::string, std::vector<double>> vectors;
  double coverage = 0.0;  // covered fraction of the vocabulary's corpus tokens
};

inline EmbeddingTable load_embeddings_text(const std::string& text, const Vocabulary& vocab,
                                           const std::string& name = "embeddings") {
  std::istringstream in(text);
  auto lines = detail::read_lines(in);
  EmbeddingTable table;
  table.language = vocab.language();
  std::size_t start = 0;
  if (!lines.empty()) {
    auto head = tokenize(lines[0]);
    if (head.size() == 2 && head[0].find_first_not_of("0123456789") == std::string::npos &&
        head[1].find_first_not_of("0123456789") == std::string::npos)
      start = 1;  // word2vec-style "count dim" header
  }
  for (std::size_t li = start; li < lines.size(); ++li) {
    auto parts = tokenize(lines[li]);
    if (parts.empty()) continue;
    if (parts.size() < 2)
      throw ParseError(name + ": malformed line " + std::to_string(li + 1));
    std::vector<double> vec;
    vec.reserve(parts.size() - 1);
    for (std::size_t i = 1; i < parts.size(); ++i) {
      try {
        vec.push_back(std::stod(parts[i]));
      } catch (const std::exception&) {
        throw ParseError(name + ": bad number '" + parts[i] + "' at line " +
                         std::to_string(li + 1));
      }
    }
    if (table.dimension == 0) table.dimension = vec.size();
    if (vec.size() != table.dimension)
      throw ParseError(name + ": embedding dimension mismatch at line " +
                       std::to_string(li + 1) + ": got " + std::to_string(vec.size()) +
                       ", expected " + std::to_string(table.dimension));
    table.vectors[parts[0]] = std::move(vec);
  }
  const auto corpus = vocab.corpus_tokens();
  std::size_t covered = 0;
  for (const auto& t : corpus)
    if (table.vectors.count(t)) ++covered;
  table.coverage =
      corpus.empty() ? 0.0 : static_cast<double>(covered) / static_cast<double>(corpus.size());
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open embedding file '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return load_embeddings_text(os.str(), vocab, path);
}

// [V, d] matrix for the vocabulary: file vectors where covered, seeded
// uniform +-0.1 rows elsewhere (reserved ids and uncovered tokens).
inline Tensor embedding_matrix(const Vocabulary& vocab, std::size_t dim,
                               const EmbeddingTable* table, std::uint64_t seed) {
  if (table && table->dimension != dim)
    throw ConfigError("embedding dimension " + std::to_string(table->dimension) +
                      " from file does not match configured " + std::to_string(dim));
  Tensor m({vocab.size(), dim});
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const std::string& tok = vocab.token(static_cast<int>(i));
    const std::vector<double>* vec = nullptr;
    if (table) {
      auto it = table->vectors.find(tok);
      if (it != table->vectors.end()) vec = &it->second;
    }
    if (vec) {
      std::copy(vec->begin(), vec->end(), m.data() + i * dim);
    } else {
      Rng rng(derive_seed(seed, "emb|" + vocab.language() + "|" + tok));
      for (std::size_t j = 0; j < dim; ++j) m.at(i, j) = rng.uniform(-0.1, 0.1);
    }
  }
  return m;
}

}  // namespace hnmt
