#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hnmt/common.hpp"
#include "hnmt/tensor.hpp"

namespace hnmt {

enum class Side { encoder, decoder };

inline const char* to_string(Side s) { return s == Side::encoder ? "enc" : "dec"; }

// Identity of one LSTM layer. Two routes share a layer exactly when they
// reference the same key.
struct LayerKey {
  Side side = Side::encoder;
  std::string node_id;  // tree-node id, or a scheme/task marker for baselines
  int depth = 1;        // 1..N

  std::string str() const {
    return std::string(to_string(side)) + ":" + node_id + ":" + std::to_string(depth);
  }

  auto operator<=>(const LayerKey&) const = default;
};

// Gate weights for one LSTM layer of hidden size H. Gate order along the
// packed rows: input, forget, cell, output.
struct LstmParams {
  Tensor wx;  // [4H, H]
  Tensor wh;  // [4H, H]
  Tensor b;   // [4H]
};

// Per-language bundle: token embedding, input projection to the hidden
// width, and the output projection over the language's vocabulary.
struct LangParams {
  Tensor embedding;  // [V, d]
  Tensor in_w;       // [H, d]
  Tensor in_b;       // [H]
  Tensor out_w;      // [V, H]
  Tensor out_b;      // [V]
};

// Registry of every trainable tensor, keyed so that creation order never
// matters: each tensor's init stream is derived from its own id.
class ParameterStore {
public:
  ParameterStore(std::size_t hidden, std::size_t embed_dim, std::uint64_t init_seed)
      : hidden_(hidden), embed_dim_(embed_dim), init_seed_(init_seed) {}

  std::size_t hidden() const { return hidden_; }
  std::size_t embed_dim() const { return embed_dim_; }

  LstmParams& layer(const LayerKey& key) {
    auto it = layers_.find(key.str());
    if (it != layers_.end()) return it->second;
    LstmParams p;
    const std::string base = "lstm/" + key.str();
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
    p.wx = init_tensor({4 * hidden_, hidden_}, -bound, bound, base + "/wx");
    p.wh = init_tensor({4 * hidden_, hidden_}, -bound, bound, base + "/wh");
    p.b = Tensor({4 * hidden_});
    // forget-gate bias starts open
    for (std::size_t i = hidden_; i < 2 * hidden_; ++i) p.b.at(i) = 1.0;
    p.b.set_requires_grad(true).set_label(base + "/b");
    return layers_.emplace(key.str(), std::move(p)).first->second;
  }

  bool has_layer(const LayerKey& key) const { return layers_.count(key.str()) > 0; }

  // `preset_embedding`, when given, seeds the table (shape-checked) instead
  // of random init; used by the external embedding loader.
  LangParams& language(const std::string& owner, std::size_t vocab_size,
                       const Tensor* preset_embedding = nullptr) {
    auto it = langs_.find(owner);
    if (it != langs_.end()) {
      if (it->second.embedding.rows() != vocab_size)
        throw ContractError("language '" + owner + "' registered with vocabulary size " +
                            std::to_string(it->second.embedding.rows()) + ", requested " +
                            std::to_string(vocab_size));
      return it->second;
    }
    LangParams p;
    const std::string base = "lang/" + owner;
    if (preset_embedding) {
      if (preset_embedding->rows() != vocab_size || preset_embedding->cols() != embed_dim_)
        throw ShapeError("preset embedding " + format_shape(preset_embedding->shape()) +
                         " does not match [" + std::to_string(vocab_size) + "x" +
                         std::to_string(embed_dim_) + "]");
      p.embedding = Tensor(preset_embedding->shape(), preset_embedding->vec());
      p.embedding.set_requires_grad(true).set_label(base + "/embedding");
    } else {
      p.embedding = init_tensor({vocab_size, embed_dim_}, -0.1, 0.1, base + "/embedding");
    }
    const double ib = 1.0 / std::sqrt(static_cast<double>(embed_dim_));
    const double ob = 1.0 / std::sqrt(static_cast<double>(hidden_));
    p.in_w = init_tensor({hidden_, embed_dim_}, -ib, ib, base + "/in_w");
    p.in_b = Tensor({hidden_});
    p.in_b.set_requires_grad(true).set_label(base + "/in_b");
    p.out_w = init_tensor({vocab_size, hidden_}, -ob, ob, base + "/out_w");
    p.out_b = Tensor({vocab_size});
    p.out_b.set_requires_grad(true).set_label(base + "/out_b");
    return langs_.emplace(owner, std::move(p)).first->second;
  }

  bool has_language(const std::string& owner) const { return langs_.count(owner) > 0; }

  // every parameter, ordered by id
  std::map<std::string, Tensor> named_parameters() const {
    std::map<std::string, Tensor> out;
    for (const auto& [key, p] : layers_) {
      out.emplace(p.wx.label(), p.wx);
      out.emplace(p.wh.label(), p.wh);
      out.emplace(p.b.label(), p.b);
    }
    for (const auto& [owner, p] : langs_) {
      out.emplace(p.embedding.label(), p.embedding);
      out.emplace(p.in_w.label(), p.in_w);
      out.emplace(p.in_b.label(), p.in_b);
      out.emplace(p.out_w.label(), p.out_w);
      out.emplace(p.out_b.label(), p.out_b);
    }
    return out;
  }

  // value snapshot (for round checkpointing)
  std::map<std::string, std::vector<double>> snapshot() const {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [id, t] : named_parameters()) out.emplace(id, t.vec());
    return out;
  }

  // overwrite parameter values in place; every snapshot id must exist here
  void restore(const std::map<std::string, std::vector<double>>& snap) {
    auto params = named_parameters();
    for (const auto& [id, data] : snap) {
      auto it = params.find(id);
      if (it == params.end())
        throw LookupError("restore: unknown parameter id '" + id + "'");
      if (it->second.size() != data.size())
        throw ShapeError("restore: size mismatch on '" + id + "'");
      it->second.vec() = data;
    }
  }

private:
  std::size_t hidden_, embed_dim_;
  std::uint64_t init_seed_;
  std::map<std::string, LstmParams> layers_;
  std::map<std::string, LangParams> langs_;

  Tensor init_tensor(std::vector<std::size_t> shape, double lo, double hi,
                     const std::string& id) {
    Rng rng(derive_seed(init_seed_, id));
    Tensor t = Tensor::randu(std::move(shape), lo, hi, rng);
    t.set_requires_grad(true).set_label(id);
    return t;
  }
};

}  // namespace hnmt
