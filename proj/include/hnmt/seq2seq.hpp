#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hnmt/adam.hpp"
#include "hnmt/data.hpp"
#include "hnmt/routes.hpp"
#include "hnmt/store.hpp"
#include "hnmt/tape.hpp"

namespace hnmt {

// Everything needed to run one task: its compiled route and the vocabularies
// of both sides.
struct TaskBinding {
  RoutePlan route;
  const Vocabulary* src_vocab = nullptr;
  const Vocabulary* tgt_vocab = nullptr;
};

// source token ids as the model consumes them: target-language token first
// for single-decoder schemes
inline std::vector<int> prepared_source(const TaskBinding& tb, const std::vector<int>& src) {
  if (!tb.route.needs_target_token) return src;
  std::vector<int> out;
  out.reserve(src.size() + 1);
  out.push_back(tb.src_vocab->target_token(tb.route.target));
  out.insert(out.end(), src.begin(), src.end());
  return out;
}

namespace detail {

inline std::pair<Tensor, Tensor> lstm_step(Tape& tape, const LstmParams& p, const Tensor& x,
                                           const Tensor& h, const Tensor& c) {
  const std::size_t hs = p.wh.cols();
  Tensor gates = tape.add_bias(tape.add(tape.matmul(p.wx, x), tape.matmul(p.wh, h)), p.b);
  Tensor gi = tape.sigmoid(tape.rows(gates, 0, hs));
  Tensor gf = tape.sigmoid(tape.rows(gates, hs, 2 * hs));
  Tensor gg = tape.tanh(tape.rows(gates, 2 * hs, 3 * hs));
  Tensor go = tape.sigmoid(tape.rows(gates, 3 * hs, 4 * hs));
  Tensor nc = tape.add(tape.mul(gf, c), tape.mul(gi, gg));
  Tensor nh = tape.mul(go, tape.tanh(nc));
  return {nh, nc};
}

// embedding + linear projection of one batch column of token ids
inline Tensor embed_step(Tape& tape, const LangParams& lp, std::vector<int> ids) {
  Tensor e = tape.embed_columns(lp.embedding, std::move(ids));
  return tape.add_bias(tape.matmul(lp.in_w, e), lp.in_b);
}

}  // namespace detail

// Runs the N encoder layers in route order over a batch of source sentences
// (each layer consumes the full hidden sequence of the previous layer) and
// returns the final-step hidden state of the top layer, [H, B]. Sources must
// already carry the target token when the route requires one.
inline Tensor encode_batch(Tape& tape, ParameterStore& store, const TaskBinding& tb,
                           std::span<const std::vector<int>> sources) {
  if (sources.empty()) throw ContractError("encode: empty batch");
  const std::size_t b = sources.size();
  std::size_t t_max = 0;
  for (const auto& s : sources) {
    if (s.empty()) throw ContractError("encode: empty source sequence (minimum length 1)");
    t_max = std::max(t_max, s.size());
  }
  auto& lp = store.language(tb.route.src_owner, tb.src_vocab->size());
  const std::size_t hs = store.hidden();

  std::vector<std::vector<double>> masks(t_max, std::vector<double>(b));
  std::vector<Tensor> seq(t_max);
  for (std::size_t t = 0; t < t_max; ++t) {
    std::vector<int> ids(b);
    for (std::size_t j = 0; j < b; ++j) {
      const bool live = t < sources[j].size();
      masks[t][j] = live ? 1.0 : 0.0;
      ids[j] = live ? sources[j][t] : Vocabulary::pad_id;
    }
    seq[t] = detail::embed_step(tape, lp, std::move(ids));
  }

  Tensor top;
  for (const LayerKey& key : tb.route.encoder_layers) {
    const LstmParams& p = store.layer(key);
    Tensor h = Tensor::zeros({hs, b});
    Tensor c = Tensor::zeros({hs, b});
    for (std::size_t t = 0; t < t_max; ++t) {
      auto [nh, nc] = detail::lstm_step(tape, p, seq[t], h, c);
      // hold the last real state through padded steps
      h = tape.col_blend(masks[t], nh, h);
      c = tape.col_blend(masks[t], nc, c);
      seq[t] = h;
    }
    top = h;
  }
  return top;
}

struct LossStats {
  Tensor loss;        // scalar: mean NLL per non-pad target position
  std::size_t tokens = 0;
};

// Teacher-forced decoder over a batch. h seeds the initial hidden state of
// decoder layer 1; cell states and deeper layers start at zero, keeping h the
// sole bridge between the two halves.
inline LossStats decode_loss(Tape& tape, ParameterStore& store, const TaskBinding& tb,
                             const Tensor& h_enc, std::span<const std::vector<int>> targets) {
  const std::size_t b = targets.size();
  std::size_t t_max = 0;
  for (const auto& y : targets) {
    if (y.size() < 2 || y.front() != Vocabulary::bos_id || y.back() != Vocabulary::eos_id)
      throw ContractError("decode: target must be wrapped in bos ... eos");
    t_max = std::max(t_max, y.size());
  }
  auto& lp = store.language(tb.route.tgt_owner, tb.tgt_vocab->size());
  const std::size_t hs = store.hidden();

  std::vector<std::pair<Tensor, Tensor>> states;
  states.reserve(tb.route.decoder_layers.size());
  for (std::size_t l = 0; l < tb.route.decoder_layers.size(); ++l)
    states.emplace_back(l == 0 ? h_enc : Tensor::zeros({hs, b}), Tensor::zeros({hs, b}));

  Tensor total;
  std::size_t tokens = 0;
  for (std::size_t t = 0; t + 1 < t_max; ++t) {
    std::vector<int> in_ids(b), out_ids(b);
    for (std::size_t j = 0; j < b; ++j) {
      in_ids[j] = t < targets[j].size() - 1 ? targets[j][t] : Vocabulary::pad_id;
      out_ids[j] = t + 1 < targets[j].size() ? targets[j][t + 1] : Vocabulary::pad_id;
    }
    Tensor x = detail::embed_step(tape, lp, std::move(in_ids));
    for (std::size_t l = 0; l < states.size(); ++l) {
      auto [nh, nc] =
          detail::lstm_step(tape, store.layer(tb.route.decoder_layers[l]), x, states[l].first,
                            states[l].second);
      states[l] = {nh, nc};
      x = nh;
    }
    Tensor logits = tape.add_bias(tape.matmul(lp.out_w, x), lp.out_b);
    std::size_t counted = 0;
    Tensor ce = tape.cross_entropy_columns(logits, std::move(out_ids), Vocabulary::pad_id,
                                           &counted);
    if (counted > 0) {
      total = total.defined() ? tape.add(total, ce) : ce;
      tokens += counted;
    }
  }
  if (tokens == 0) throw DataError("decode: degenerate batch with no target tokens");
  return {tape.scale(total, 1.0 / static_cast<double>(tokens)), tokens};
}

// full teacher-forced loss of one batch of encoded pairs
inline LossStats batch_loss(Tape& tape, ParameterStore& store, const TaskBinding& tb,
                            std::span<const EncodedPair> batch) {
  std::vector<std::vector<int>> sources, targets;
  sources.reserve(batch.size());
  targets.reserve(batch.size());
  for (const auto& p : batch) {
    sources.push_back(prepared_source(tb, p.src));
    targets.push_back(p.tgt);
  }
  Tensor h = encode_batch(tape, store, tb, sources);
  return decode_loss(tape, store, tb, h, targets);
}

// ---- single-sentence contract surface ----

// h for one source sentence, as a 1-D vector of size |h|
inline Tensor encode(Tape& tape, ParameterStore& store, const TaskBinding& tb,
                     const std::vector<int>& tokens) {
  std::vector<std::vector<int>> batch{tokens};
  Tensor h = encode_batch(tape, store, tb, batch);
  return tape.reshape(h, {store.hidden()});
}

// per-position vocabulary logits, [len(y)-1, V]
inline Tensor decode_teacher_forced(Tape& tape, ParameterStore& store, const TaskBinding& tb,
                                    const Tensor& h, const std::vector<int>& y) {
  if (y.size() < 2 || y.front() != Vocabulary::bos_id || y.back() != Vocabulary::eos_id)
    throw ContractError("decode_teacher_forced: target must be wrapped in bos ... eos");
  Tensor h_col = h.ndim() == 1 ? tape.reshape(h, {h.size(), 1}) : h;
  auto& lp = store.language(tb.route.tgt_owner, tb.tgt_vocab->size());
  const std::size_t hs = store.hidden();

  std::vector<std::pair<Tensor, Tensor>> states;
  for (std::size_t l = 0; l < tb.route.decoder_layers.size(); ++l)
    states.emplace_back(l == 0 ? h_col : Tensor::zeros({hs, 1}), Tensor::zeros({hs, 1}));

  Tensor logits_rows;
  for (std::size_t t = 0; t + 1 < y.size(); ++t) {
    Tensor x = detail::embed_step(tape, lp, {y[t]});
    for (std::size_t l = 0; l < states.size(); ++l) {
      auto [nh, nc] = detail::lstm_step(tape, store.layer(tb.route.decoder_layers[l]), x,
                                        states[l].first, states[l].second);
      states[l] = {nh, nc};
      x = nh;
    }
    Tensor row = tape.transpose(tape.add_bias(tape.matmul(lp.out_w, x), lp.out_b));
    logits_rows = logits_rows.defined() ? tape.concat(logits_rows, row) : row;
  }
  return logits_rows;
}

// autoregressive argmax decoding; ties break toward the lowest token id.
// Returns the generated tokens without bos/eos.
inline std::vector<int> decode_greedy(ParameterStore& store, const TaskBinding& tb,
                                      const Tensor& h, std::size_t max_len) {
  if (max_len < 1) throw ContractError("decode_greedy: max_len must be >= 1");
  Tape tape(false);
  Tensor h_col = h.ndim() == 1 ? tape.reshape(h, {h.size(), 1}) : h;
  auto& lp = store.language(tb.route.tgt_owner, tb.tgt_vocab->size());
  const std::size_t hs = store.hidden();

  std::vector<std::pair<Tensor, Tensor>> states;
  for (std::size_t l = 0; l < tb.route.decoder_layers.size(); ++l)
    states.emplace_back(l == 0 ? h_col : Tensor::zeros({hs, 1}), Tensor::zeros({hs, 1}));

  std::vector<int> out;
  int prev = Vocabulary::bos_id;
  for (std::size_t step = 0; step < max_len; ++step) {
    Tensor x = detail::embed_step(tape, lp, {prev});
    for (std::size_t l = 0; l < states.size(); ++l) {
      auto [nh, nc] = detail::lstm_step(tape, store.layer(tb.route.decoder_layers[l]), x,
                                        states[l].first, states[l].second);
      states[l] = {nh, nc};
      x = nh;
    }
    Tensor logits = tape.add_bias(tape.matmul(lp.out_w, x), lp.out_b);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.rows(); ++i)
      if (logits.at(i, 0) > logits.at(best, 0)) best = i;
    if (static_cast<int>(best) == Vocabulary::eos_id) break;
    out.push_back(static_cast<int>(best));
    prev = static_cast<int>(best);
  }
  return out;
}

// encode + greedy decode with the default generation budget
inline std::vector<int> translate_greedy(ParameterStore& store, const TaskBinding& tb,
                                         const std::vector<int>& src) {
  Tape tape(false);
  const auto prepped = prepared_source(tb, src);
  std::vector<std::vector<int>> batch{prepped};
  Tensor h = encode_batch(tape, store, tb, batch);
  return decode_greedy(store, tb, h, 2 * src.size() + 5);
}

// token-mean teacher-forced loss without gradients, batched
inline double eval_loss(ParameterStore& store, const TaskBinding& tb,
                        std::span<const EncodedPair> pairs, std::size_t batch_size = 64) {
  if (pairs.empty()) throw ContractError("eval_loss: empty pair list");
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t off = 0; off < pairs.size(); off += batch_size) {
    const std::size_t n = std::min(batch_size, pairs.size() - off);
    Tape tape(false);
    LossStats s = batch_loss(tape, store, tb, pairs.subspan(off, n));
    total += s.loss.value() * static_cast<double>(s.tokens);
    tokens += s.tokens;
  }
  return total / static_cast<double>(tokens);
}

// parameters the route actually touches, ordered by id; layer entries are
// created on first use
inline NamedParams route_parameters(ParameterStore& store, const TaskBinding& tb) {
  std::map<std::string, Tensor> m;
  auto add_layer = [&](const LayerKey& k) {
    LstmParams& p = store.layer(k);
    m.emplace(p.wx.label(), p.wx);
    m.emplace(p.wh.label(), p.wh);
    m.emplace(p.b.label(), p.b);
  };
  for (const auto& k : tb.route.encoder_layers) add_layer(k);
  for (const auto& k : tb.route.decoder_layers) add_layer(k);
  auto add_lang = [&](const std::string& owner, const Vocabulary& v, bool with_output) {
    LangParams& p = store.language(owner, v.size());
    m.emplace(p.embedding.label(), p.embedding);
    m.emplace(p.in_w.label(), p.in_w);
    m.emplace(p.in_b.label(), p.in_b);
    if (with_output) {
      m.emplace(p.out_w.label(), p.out_w);
      m.emplace(p.out_b.label(), p.out_b);
    }
  };
  add_lang(tb.route.src_owner, *tb.src_vocab, false);
  add_lang(tb.route.tgt_owner, *tb.tgt_vocab, true);
  return {m.begin(), m.end()};
}

}  // namespace hnmt
