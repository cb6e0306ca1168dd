#include <fstream>
#include <set>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "hnmt/adam.hpp"
#include "hnmt/routes.hpp"
#include "hnmt/seq2seq.hpp"

using namespace hnmt;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

LanguageTree sample_tree() { return parse_tree(slurp(SAMPLES_DIR "/tree.json")); }

std::vector<std::string> key_ids(const std::vector<LayerKey>& keys) {
  std::vector<std::string> out;
  for (const auto& k : keys) out.push_back(k.node_id);
  return out;
}

// vocabulary over a handful of synthetic tokens, with the shared
// target-token block for the given languages
Vocabulary toy_vocab(const std::string& lang, std::size_t tokens,
                     std::vector<std::string> target_langs) {
  std::vector<std::vector<std::string>> sents(1);
  for (std::size_t i = 0; i < tokens; ++i) sents[0].push_back(lang + std::to_string(i));
  return Vocabulary::build(sents, lang, 1, std::move(target_langs));
}

struct ToyWorld {
  LanguageTree prep;
  std::map<std::string, Vocabulary> vocabs;

  TaskBinding bind(const std::string& src, const std::string& tgt, Scheme scheme, int n) const {
    TaskBinding tb;
    tb.route = compile_route(prep, src, tgt, scheme, n);
    tb.src_vocab = &vocabs.at(src);
    tb.tgt_vocab = &vocabs.at(tgt);
    return tb;
  }
};

ToyWorld toy_world(int n_layers) {
  ToyWorld w;
  auto raw = parse_tree(R"({"name":"w","children":[
    {"name":"F1","children":[{"name":"aa"},{"name":"bb"}]},
    {"name":"F2","children":[{"name":"cc"}]}]})");
  w.prep = preprocess_tree(raw, n_layers - 2);
  std::vector<std::string> langs{"aa", "bb", "cc"};
  for (const auto& l : langs) w.vocabs.emplace(l, toy_vocab(l, 10, langs));
  return w;
}

std::vector<int> toy_ids(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> out(n);
  for (auto& id : out) id = 4 + static_cast<int>(rng.below(vocab - 4));
  return out;
}

}  // namespace

TEST_CASE("hnmt route on the sample tree matches the published step chain") {
  auto prep = preprocess_tree(sample_tree(), 2);

  RoutePlan es_en = compile_route(prep, "es", "en", Scheme::hnmt, 4);
  CHECK(key_ids(es_en.encoder_layers) ==
        std::vector<std::string>{"/world/Indo-European/Italic/es", "/world/Indo-European/Italic",
                                 "/world/Indo-European", "/world"});
  CHECK(key_ids(es_en.decoder_layers) ==
        std::vector<std::string>{"/world", "/world/Indo-European",
                                 "/world/Indo-European/Germanic",
                                 "/world/Indo-European/Germanic/en"});
  CHECK_FALSE(es_en.needs_target_token);

  RoutePlan es_fi = compile_route(prep, "es", "fi", Scheme::hnmt, 4);
  CHECK(key_ids(es_fi.encoder_layers) == key_ids(es_en.encoder_layers));
  CHECK(key_ids(es_fi.decoder_layers) ==
        std::vector<std::string>{"/world", "/world/Uralic", "/world/Uralic~dup1~fi",
                                 "/world/Uralic/fi"});
  for (int d = 1; d <= 4; ++d) {
    CHECK(es_fi.decoder_layers[static_cast<std::size_t>(d - 1)].depth == d);
    CHECK(es_fi.decoder_layers[static_cast<std::size_t>(d - 1)].side == Side::decoder);
  }
}

TEST_CASE("route compilation validates inputs") {
  auto raw = sample_tree();
  // fi has a single family on the raw tree; N=4 requires exactly two
  CHECK_THROWS_AS(compile_route(raw, "es", "fi", Scheme::hnmt, 4), ConfigError);
  auto prep = preprocess_tree(raw, 2);
  CHECK_THROWS_AS(compile_route(prep, "es", "zz", Scheme::hnmt, 4), LookupError);
  CHECK_THROWS_AS(compile_route(prep, "es", "en", Scheme::hnmt, 2), ConfigError);
}

TEST_CASE("one-to-one uses a single universal stack") {
  auto prep = preprocess_tree(sample_tree(), 2);
  RoutePlan a = compile_route(prep, "es", "en", Scheme::one_to_one, 4);
  RoutePlan b = compile_route(prep, "fi", "pt", Scheme::one_to_one, 4);
  CHECK(a.encoder_layers == b.encoder_layers);
  CHECK(a.decoder_layers == b.decoder_layers);
  CHECK(a.needs_target_token);
}

TEST_CASE("scheme sharing properties over random trees") {
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    auto pruned = prune_redundant_families(testing::random_tree(seed));
    auto langs = pruned.languages();
    if (langs.size() < 2) continue;
    const int n = 3 + static_cast<int>(seed % 3);
    const int depth = n - 2;
    auto prep = duplicate_leaves(limit_depth(pruned, depth), depth);
    Rng rng(seed * 31 + 7);
    const auto& s1 = langs[rng.below(langs.size())];
    const auto& t1 = langs[rng.below(langs.size())];
    const auto& t2 = langs[rng.below(langs.size())];

    // many-to-many stacks are disjoint between distinct tasks
    if (s1 != t1 && s1 != t2 && t1 != t2) {
      auto ra = compile_route(prep, s1, t1, Scheme::many_to_many, n);
      auto rb = compile_route(prep, s1, t2, Scheme::many_to_many, n);
      std::set<std::string> keys_a, keys_b;
      for (const auto& k : ra.encoder_layers) keys_a.insert(k.str());
      for (const auto& k : ra.decoder_layers) keys_a.insert(k.str());
      for (const auto& k : rb.encoder_layers) keys_b.insert(k.str());
      for (const auto& k : rb.decoder_layers) keys_b.insert(k.str());
      for (const auto& k : keys_a) CHECK(keys_b.count(k) == 0);
    }

    // hnmt decoder routes share exactly 1 + similarity leading keys when
    // neither chain was truncated by the depth limit
    if (t1 != t2 &&
        pruned.family_chain(t1).size() <= static_cast<std::size_t>(depth) &&
        pruned.family_chain(t2).size() <= static_cast<std::size_t>(depth)) {
      auto r1 = compile_route(prep, s1, t1, Scheme::hnmt, n);
      auto r2 = compile_route(prep, s1, t2, Scheme::hnmt, n);
      std::size_t shared = 0;
      while (shared < r1.decoder_layers.size() &&
             r1.decoder_layers[shared] == r2.decoder_layers[shared])
        ++shared;
      CHECK(shared == 1 + static_cast<std::size_t>(similarity(pruned, t1, t2)));
    }

    // the target token is needed exactly for single-decoder schemes
    for (Scheme sc : all_schemes()) {
      if (sc == Scheme::hnmt) continue;
      auto r = compile_route(prep, s1, t1 == s1 ? langs[(0 + 1) % langs.size()] : t1, sc, n);
      CHECK(r.needs_target_token ==
            (sc == Scheme::many_to_one || sc == Scheme::one_to_one));
    }
  }
}

TEST_CASE("route manifest is deterministic and task-sorted") {
  auto prep = preprocess_tree(sample_tree(), 2);
  auto m1 = route_manifest(prep, {{"fi", "en"}, {"es", "en"}}, Scheme::hnmt, 4);
  auto m2 = route_manifest(prep, {{"es", "en"}, {"fi", "en"}}, Scheme::hnmt, 4);
  CHECK(m1.dump() == m2.dump());
  CHECK(m1["tasks"][0]["src"] == "es");
}

TEST_CASE("encode rejects empty input and out-of-vocabulary ids") {
  auto w = toy_world(3);
  ParameterStore store(8, 6, 1);
  auto tb = w.bind("aa", "cc", Scheme::hnmt, 3);
  Tape tape;
  CHECK_THROWS_AS(encode(tape, store, tb, {}), ContractError);
  CHECK_THROWS_AS(encode(tape, store, tb, {99999}), ContractError);
}

TEST_CASE("encode is deterministic and route-identical across same-source tasks") {
  auto w = toy_world(3);
  ParameterStore store(8, 6, 7);
  auto to_cc = w.bind("aa", "cc", Scheme::hnmt, 3);
  auto to_bb = w.bind("aa", "bb", Scheme::hnmt, 3);
  CHECK(to_cc.route.encoder_layers == to_bb.route.encoder_layers);

  const auto x = toy_ids(5, w.vocabs.at("aa").size(), 3);
  Tape t1, t2, t3;
  Tensor h1 = encode(t1, store, to_cc, x);
  Tensor h2 = encode(t2, store, to_cc, x);
  Tensor h3 = encode(t3, store, to_bb, x);
  CHECK(h1.vec() == h2.vec());
  CHECK(h1.vec() == h3.vec());
  CHECK(h1.size() == 8);
}

TEST_CASE("encoding is order-sensitive, so state is genuinely recurrent") {
  auto w = toy_world(3);
  ParameterStore store(8, 6, 11);
  auto tb = w.bind("aa", "cc", Scheme::hnmt, 3);
  std::vector<int> x{4, 5, 6, 7};
  std::vector<int> perm{7, 6, 5, 4};
  Tape t1, t2;
  CHECK(encode(t1, store, tb, x).vec() != encode(t2, store, tb, perm).vec());
}

TEST_CASE("teacher forcing produces per-position logits") {
  auto w = toy_world(3);
  ParameterStore store(8, 6, 5);
  auto tb = w.bind("aa", "cc", Scheme::hnmt, 3);
  Tape tape;
  Tensor h = encode(tape, store, tb, toy_ids(4, w.vocabs.at("aa").size(), 1));
  const auto v = w.vocabs.at("cc").size();

  Tensor one = decode_teacher_forced(tape, store, tb,
                                     h, {Vocabulary::bos_id, Vocabulary::eos_id});
  CHECK(one.shape() == std::vector<std::size_t>{1, v});

  Tensor three = decode_teacher_forced(tape, store, tb, h,
                                       {Vocabulary::bos_id, 5, 6, Vocabulary::eos_id});
  CHECK(three.shape() == std::vector<std::size_t>{3, v});

  CHECK_THROWS_AS(decode_teacher_forced(tape, store, tb, h, {5, 6}), ContractError);
}

TEST_CASE("routed layers receive gradient, unrouted layers receive none") {
  auto w = toy_world(3);
  ParameterStore store(8, 6, 9);
  auto to_cc = w.bind("aa", "cc", Scheme::hnmt, 3);
  auto to_bb = w.bind("aa", "bb", Scheme::hnmt, 3);
  // materialize both routes' parameters, then train only aa->cc
  auto active = route_parameters(store, to_cc);
  auto idle = route_parameters(store, to_bb);

  Tape tape;
  std::vector<EncodedPair> batch{{toy_ids(4, w.vocabs.at("aa").size(), 2),
                                  {Vocabulary::bos_id, 5, 6, Vocabulary::eos_id}}};
  LossStats s = batch_loss(tape, store, to_cc, batch);
  tape.backward(s.loss);

  std::set<std::string> active_ids;
  for (auto& [id, t] : active) {
    active_ids.insert(id);
    CHECK(t.has_grad());
  }
  for (auto& [id, t] : idle)
    if (!active_ids.count(id)) CHECK_FALSE(t.has_grad());
}

TEST_CASE("full teacher-forced loss gradients match finite differences") {
  auto w = toy_world(3);
  ParameterStore store(6, 4, 13);
  auto tb = w.bind("aa", "cc", Scheme::hnmt, 3);
  std::vector<EncodedPair> batch{
      {toy_ids(3, w.vocabs.at("aa").size(), 21), {Vocabulary::bos_id, 4, 7, Vocabulary::eos_id}},
      {toy_ids(5, w.vocabs.at("aa").size(), 22), {Vocabulary::bos_id, 9, Vocabulary::eos_id}}};
  auto build = [&](Tape& t) { return batch_loss(t, store, tb, batch).loss; };

  auto params = route_parameters(store, tb);
  std::vector<Tensor> tensors;
  for (auto& [id, t] : params) tensors.push_back(t);
  CHECK(testing::gradient_check(build, tensors) <= 1e-4);
}

TEST_CASE("greedy decoding stops on a forced end-of-sentence") {
  auto w = toy_world(3);
  ParameterStore store(8, 6, 17);
  auto tb = w.bind("aa", "cc", Scheme::hnmt, 3);
  auto& lp = store.language(tb.route.tgt_owner, w.vocabs.at("cc").size());
  lp.out_b.at(Vocabulary::eos_id) = 1000.0;
  Tape tape;
  Tensor h = encode(tape, store, tb, toy_ids(4, w.vocabs.at("aa").size(), 8));
  CHECK(decode_greedy(store, tb, h, 10).empty());
}

TEST_CASE("greedy decoding is deterministic") {
  auto w = toy_world(3);
  ParameterStore store(8, 6, 19);
  auto tb = w.bind("aa", "cc", Scheme::hnmt, 3);
  const auto x = toy_ids(6, w.vocabs.at("aa").size(), 4);
  CHECK(translate_greedy(store, tb, x) == translate_greedy(store, tb, x));
}

TEST_CASE("a converged copy model reproduces its input") {
  // one-to-one single-layer model trained on the identity mapping
  auto raw = parse_tree(R"({"name":"w","children":[{"name":"F","children":[
    {"name":"aa"},{"name":"bb"}]}]})");
  std::map<std::string, Vocabulary> vocabs;
  for (const auto& l : {"aa", "bb"}) vocabs.emplace(l, toy_vocab(l, 8, {"aa", "bb"}));
  TaskBinding tb;
  tb.route = compile_route(raw, "aa", "aa", Scheme::one_to_one, 1);
  tb.src_vocab = &vocabs.at("aa");
  tb.tgt_vocab = &vocabs.at("aa");

  ParameterStore store(32, 16, 23);
  AdamState adam;
  AdamConfig cfg;
  Rng rng(5);
  std::vector<EncodedPair> pairs;
  for (int i = 0; i < 200; ++i) {
    auto ids = toy_ids(1 + rng.below(4), vocabs.at("aa").size(), 1000 + i);
    EncodedPair p;
    p.src = ids;
    p.tgt.push_back(Vocabulary::bos_id);
    p.tgt.insert(p.tgt.end(), ids.begin(), ids.end());
    p.tgt.push_back(Vocabulary::eos_id);
    pairs.push_back(std::move(p));
  }
  auto params = route_parameters(store, tb);
  double loss = 1e9;
  for (int epoch = 0; epoch < 120 && loss > 0.02; ++epoch) {
    for (std::size_t off = 0; off < pairs.size(); off += 32) {
      Tape tape;
      auto batch = std::span<const EncodedPair>(pairs).subspan(off, std::min<std::size_t>(32, pairs.size() - off));
      LossStats s = batch_loss(tape, store, tb, batch);
      tape.backward(s.loss);
      loss = s.loss.value();
      clip_gradients(params, 5.0);
      adam_update(params, adam, cfg);
    }
  }
  REQUIRE(loss <= 0.02);
  for (int i = 0; i < 10; ++i) CHECK(translate_greedy(store, tb, pairs[static_cast<std::size_t>(i)].src) == pairs[static_cast<std::size_t>(i)].src);
}
