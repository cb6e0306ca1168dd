#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hnmt {

// Error taxonomy. The CLI maps these onto distinct exit codes, so keep the
// hierarchy flat and the messages self-contained.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: missing paths, contradictory options, invalid values.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Problems with input data: corpora, vocabularies, splits, scores.
class DataError : public Error {
public:
  using Error::Error;
};

// Malformed input files (tree files, embedding files, checkpoints).
class ParseError : public DataError {
public:
  using DataError::DataError;
};

// Unknown language / missing key lookups.
class LookupError : public DataError {
public:
  using DataError::DataError;
};

// Tensor dimension mismatches; message names both shapes.
class ShapeError : public Error {
public:
  using Error::Error;
};

// API misuse: backward on a non-scalar, optimizer step without gradients.
class ContractError : public Error {
public:
  using Error::Error;
};

// Non-finite loss during training.
class DivergedError : public Error {
public:
  using Error::Error;
};

// splitmix64 finalizer; mixes the root seed with a label hash so every
// component draws from an independent, addressable stream.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  return mix64(root ^ mix64(hash_label(label)));
}

// mt19937_64 output is pinned by the standard; the helpers below avoid
// std::uniform_*_distribution, whose mapping is implementation-defined.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // [0, 1)
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  std::size_t below(std::size_t n) { return n ? static_cast<std::size_t>(next() % n) : 0; }

  // Fisher-Yates, fixed order of draws
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 gen_;
};

}  // namespace hnmt
