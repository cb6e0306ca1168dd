#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "hnmt/common.hpp"
#include "hnmt/langtree.hpp"
#include "hnmt/store.hpp"
#include "json.hpp"

namespace hnmt {

enum class Scheme { hnmt, many_to_many, one_to_many, many_to_one, one_to_one };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::hnmt: return "hnmt";
    case Scheme::many_to_many: return "many-to-many";
    case Scheme::one_to_many: return "one-to-many";
    case Scheme::many_to_one: return "many-to-one";
    case Scheme::one_to_one: return "one-to-one";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "hnmt") return Scheme::hnmt;
  if (s == "many-to-many") return Scheme::many_to_many;
  if (s == "one-to-many") return Scheme::one_to_many;
  if (s == "many-to-one") return Scheme::many_to_one;
  if (s == "one-to-one") return Scheme::one_to_one;
  throw ConfigError("unknown scheme '" + std::string(s) +
                    "' (expected hnmt, many-to-many, one-to-many, many-to-one, one-to-one)");
}

inline std::vector<Scheme> all_schemes() {
  return {Scheme::hnmt, Scheme::many_to_many, Scheme::one_to_many, Scheme::many_to_one,
          Scheme::one_to_one};
}

// The ordered layer sequence one (source, target) task traverses, plus the
// owner keys for its embedding/projection bundles. Models with a single
// shared decoder need the target-language token prepended to their input.
struct RoutePlan {
  std::string source, target;
  Scheme scheme = Scheme::hnmt;
  std::vector<LayerKey> encoder_layers;  // size N, input side first
  std::vector<LayerKey> decoder_layers;  // size N, h side first
  bool needs_target_token = false;
  std::string src_owner, tgt_owner;  // LangParams registry keys
};

namespace detail {

inline std::string task_marker(const std::string& src, const std::string& tgt) {
  return "task:" + src + ">" + tgt;
}

inline std::vector<LayerKey> uniform_stack(Side side, const std::string& node_id, int n) {
  std::vector<LayerKey> keys;
  keys.reserve(static_cast<std::size_t>(n));
  for (int d = 1; d <= n; ++d) keys.push_back({side, node_id, d});
  return keys;
}

}  // namespace detail

// Builds the layer walk for one task under the given sharing scheme.
// For hnmt the tree must already be preprocessed to family depth N-2:
// encoder = [source leaf, source families deepest to shallowest, world],
// decoder = [world, target families shallowest to deepest, target leaf].
inline RoutePlan compile_route(const LanguageTree& tree, const std::string& src,
                               const std::string& tgt, Scheme scheme, int n_layers) {
  if (n_layers < 1) throw ConfigError("layer count must be >= 1");
  const FamilyNode& src_leaf = tree.language(src);
  const FamilyNode& tgt_leaf = tree.language(tgt);

  RoutePlan r;
  r.source = src;
  r.target = tgt;
  r.scheme = scheme;
  r.needs_target_token = scheme == Scheme::many_to_one || scheme == Scheme::one_to_one;
  r.src_owner = src;
  r.tgt_owner = tgt;

  switch (scheme) {
    case Scheme::hnmt: {
      if (n_layers < 3)
        throw ConfigError("hnmt needs at least 3 layers (language, world and the family budget)");
      const int depth = n_layers - 2;
      const auto src_chain = tree.family_chain(src);
      const auto tgt_chain = tree.family_chain(tgt);
      for (const auto* chain : {&src_chain, &tgt_chain})
        if (static_cast<int>(chain->size()) != depth)
          throw ConfigError("preprocessing mismatch: family chain of length " +
                            std::to_string(chain->size()) + " but layer count " +
                            std::to_string(n_layers) + " requires exactly " +
                            std::to_string(depth) + "; preprocess the tree with that depth");
      int d = 1;
      r.encoder_layers.push_back({Side::encoder, src_leaf.id, d++});
      for (auto it = src_chain.rbegin(); it != src_chain.rend(); ++it)
        r.encoder_layers.push_back({Side::encoder, *it, d++});
      r.encoder_layers.push_back({Side::encoder, tree.root().id, d++});
      d = 1;
      r.decoder_layers.push_back({Side::decoder, tree.root().id, d++});
      for (const auto& id : tgt_chain) r.decoder_layers.push_back({Side::decoder, id, d++});
      r.decoder_layers.push_back({Side::decoder, tgt_leaf.id, d++});
      break;
    }
    case Scheme::many_to_many: {
      const std::string marker = detail::task_marker(src, tgt);
      r.encoder_layers = detail::uniform_stack(Side::encoder, marker, n_layers);
      r.decoder_layers = detail::uniform_stack(Side::decoder, marker, n_layers);
      // fully bilingual: the embedding bundles are task-private too
      r.src_owner = src + "@" + marker;
      r.tgt_owner = tgt + "@" + marker;
      break;
    }
    case Scheme::one_to_many:
      r.encoder_layers = detail::uniform_stack(Side::encoder, "shared", n_layers);
      r.decoder_layers = detail::uniform_stack(Side::decoder, "lang:" + tgt, n_layers);
      break;
    case Scheme::many_to_one:
      r.encoder_layers = detail::uniform_stack(Side::encoder, "lang:" + src, n_layers);
      r.decoder_layers = detail::uniform_stack(Side::decoder, "shared", n_layers);
      break;
    case Scheme::one_to_one:
      r.encoder_layers = detail::uniform_stack(Side::encoder, "shared", n_layers);
      r.decoder_layers = detail::uniform_stack(Side::decoder, "shared", n_layers);
      break;
  }
  return r;
}

// Sharing manifest: every task's ordered layer keys, in deterministic task
// order. This is the document tests and operators diff.
inline nlohmann::json route_manifest(const LanguageTree& tree,
                                     std::vector<std::pair<std::string, std::string>> tasks,
                                     Scheme scheme, int n_layers) {
  std::sort(tasks.begin(), tasks.end());
  nlohmann::json j;
  j["scheme"] = to_string(scheme);
  j["layers"] = n_layers;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [src, tgt] : tasks) {
    RoutePlan r = compile_route(tree, src, tgt, scheme, n_layers);
    nlohmann::json t;
    t["src"] = src;
    t["tgt"] = tgt;
    t["needs_target_token"] = r.needs_target_token;
    auto keys = [](const std::vector<LayerKey>& ks) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& k : ks) a.push_back(k.str());
      return a;
    };
    t["encoder"] = keys(r.encoder_layers);
    t["decoder"] = keys(r.decoder_layers);
    arr.push_back(std::move(t));
  }
  j["tasks"] = std::move(arr);
  return j;
}

}  // namespace hnmt
