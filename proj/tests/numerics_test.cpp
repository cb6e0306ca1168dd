#include <cmath>
#include <cstdio>
#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "hnmt/adam.hpp"
#include "hnmt/checkpoint.hpp"
#include "hnmt/tape.hpp"
#include "hnmt/tensor.hpp"

using namespace hnmt;

namespace {

// Central finite differences against the analytic pullbacks. The oracle side
// re-runs the forward pass on a non-recording tape, so it never touches the
// differentiation machinery it is checking.
template <class F>
void check_gradients(F&& build, std::vector<Tensor> inputs, double tol = 1e-4,
                     double step = 1e-5) {
  for (auto& t : inputs) t.drop_grad();
  Tape tape;
  Tensor loss = build(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    REQUIRE(t.has_grad());
    analytic.push_back(t.grad());
  }
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double keep = t.at(i);
      t.at(i) = keep + step;
      Tape f1(false);
      const double up = build(f1).value();
      t.at(i) = keep - step;
      Tape f2(false);
      const double dn = build(f2).value();
      t.at(i) = keep;
      const double fd = (up - dn) / (2.0 * step);
      const double an = analytic[ti][i];
      const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1.0});
      INFO("tensor " << ti << " element " << i << ": analytic " << an << " vs fd " << fd);
      CHECK(err <= tol);
    }
  }
}

Tensor grad_randu(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t = Tensor::randu(std::move(shape), -2.0, 2.0, rng);
  t.set_requires_grad(true);
  return t;
}

// fixed projection so the scalarized loss exposes per-element gradients
Tensor project(Tape& tape, const Tensor& out, const Tensor& weights) {
  return tape.sum(tape.mul(out, weights));
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform") {
  Tape tape;
  Tensor s = tape.softmax(Tensor({3}, {0.0, 0.0, 0.0}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(s.at(i) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("sigmoid at zero") {
  Tape tape;
  CHECK(tape.sigmoid(Tensor::scalar(0.0)).value() == 0.5);
}

TEST_CASE("matmul of ones") {
  Tape tape;
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor b({3, 1}, std::vector<double>(3, 1.0));
  Tensor c = tape.matmul(a, b);
  REQUIRE(c.shape() == std::vector<std::size_t>{2, 1});
  CHECK(c.at(0) == 3.0);
  CHECK(c.at(1) == 3.0);
}

TEST_CASE("shape mismatches name both shapes") {
  Tape tape;
  Tensor a({2, 3});
  Tensor b({2, 3});
  try {
    tape.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.add(a, Tensor({3, 2})), ShapeError);
}

TEST_CASE("softmax rows are non-negative and sum to one") {
  Rng rng(7);
  Tape tape;
  Tensor x = Tensor::randu({5, 9}, -4.0, 4.0, rng);
  Tensor s = tape.softmax(x);
  for (std::size_t i = 0; i < 5; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(s.at(i, j) >= 0.0);
      acc += s.at(i, j);
    }
    CHECK(std::abs(acc - 1.0) <= 1e-12);
  }
}

TEST_CASE("cross entropy of uniform logits is log V") {
  Tape tape;
  Tensor logits({2, 4}, std::vector<double>(8, 0.25));
  Tensor loss = tape.cross_entropy(logits, {1, 3}, 0 - 1);
  CHECK(loss.value() == Catch::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy of a saturated one-hot logit is near zero") {
  Tape tape;
  Tensor logits({1, 4}, {0.0, 1000.0, 0.0, 0.0});
  CHECK(tape.cross_entropy(logits, {1}, -1).value() == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("cross entropy matches the closed form") {
  Tape tape;
  Tensor logits({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const double expected = std::log(1.0 + std::exp(-1.0));
  CHECK(tape.cross_entropy(logits, {0, 1}, -1).value() ==
        Catch::Approx(expected).epsilon(1e-12));
  CHECK(expected == Catch::Approx(0.3133).margin(5e-5));
}

TEST_CASE("cross entropy rejects an all-pad target sequence") {
  Tape tape;
  Tensor logits({2, 3});
  CHECK_THROWS_AS(tape.cross_entropy(logits, {0, 0}, 0), DataError);
}

TEST_CASE("backward on a plain sum gives unit gradients") {
  Tape tape;
  Tensor w({3}, {4.0, -1.0, 2.5});
  w.set_requires_grad(true);
  tape.backward(tape.sum(w));
  CHECK(w.grad() == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("backward through a square") {
  Tape tape;
  Tensor w({2}, {1.0, 2.0});
  w.set_requires_grad(true);
  tape.backward(tape.sum(tape.mul(w, w)));
  CHECK(w.grad() == std::vector<double>{2.0, 4.0});
}

TEST_CASE("backward rejects non-scalar losses") {
  Tape tape;
  Tensor w({2}, {1.0, 2.0});
  CHECK_THROWS_AS(tape.backward(w), ContractError);
}

TEST_CASE("gradient additivity over independent losses") {
  Rng rng(11);
  Tensor w = grad_randu({4}, rng);
  Tensor a = Tensor::randu({4}, -1.0, 1.0, rng);
  Tensor b = Tensor::randu({4}, -1.0, 1.0, rng);

  Tape joint;
  joint.backward(joint.add(joint.sum(joint.mul(w, a)), joint.sum(joint.mul(joint.tanh(w), b))));
  std::vector<double> combined = w.grad();

  w.drop_grad();
  Tape t1;
  t1.backward(t1.sum(t1.mul(w, a)));
  Tape t2;
  t2.backward(t2.sum(t2.mul(t2.tanh(w), b)));
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(w.grad()[i] == Catch::Approx(combined[i]).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(1234);

  SECTION("matmul") {
    Tensor a = grad_randu({3, 4}, rng), b = grad_randu({4, 2}, rng);
    Tensor w = Tensor::randu({3, 2}, -1.0, 1.0, rng);
    check_gradients([&](Tape& t) { return project(t, t.matmul(a, b), w); }, {a, b});
  }
  SECTION("add and add_bias") {
    Tensor a = grad_randu({3, 3}, rng), b = grad_randu({3, 3}, rng);
    Tensor bias = grad_randu({3}, rng);
    Tensor w = Tensor::randu({3, 3}, -1.0, 1.0, rng);
    check_gradients(
        [&](Tape& t) { return project(t, t.add_bias(t.add(a, b), bias), w); }, {a, b, bias});
  }
  SECTION("mul and scale") {
    Tensor a = grad_randu({5}, rng), b = grad_randu({5}, rng);
    Tensor w = Tensor::randu({5}, -1.0, 1.0, rng);
    check_gradients([&](Tape& t) { return project(t, t.scale(t.mul(a, b), -1.7), w); }, {a, b});
  }
  SECTION("concat") {
    Tensor a = grad_randu({2, 3}, rng), b = grad_randu({4, 3}, rng);
    Tensor w = Tensor::randu({6, 3}, -1.0, 1.0, rng);
    check_gradients([&](Tape& t) { return project(t, t.concat(a, b), w); }, {a, b});
  }
  SECTION("sigmoid tanh softmax") {
    Tensor x = grad_randu({4, 5}, rng);
    Tensor w = Tensor::randu({4, 5}, -1.0, 1.0, rng);
    check_gradients([&](Tape& t) { return project(t, t.sigmoid(x), w); }, {x});
    check_gradients([&](Tape& t) { return project(t, t.tanh(x), w); }, {x});
    check_gradients([&](Tape& t) { return project(t, t.softmax(x), w); }, {x});
  }
  SECTION("rows transpose reshape") {
    Tensor x = grad_randu({6, 3}, rng);
    Tensor w = Tensor::randu({2, 3}, -1.0, 1.0, rng);
    Tensor wt = Tensor::randu({3, 6}, -1.0, 1.0, rng);
    check_gradients([&](Tape& t) { return project(t, t.rows(x, 2, 4), w); }, {x});
    check_gradients([&](Tape& t) { return project(t, t.transpose(x), wt); }, {x});
    check_gradients(
        [&](Tape& t) { return t.sum(t.mul(t.reshape(x, {3, 6}), wt)); }, {x});
  }
  SECTION("embedding gathers") {
    Tensor table = grad_randu({7, 4}, rng);
    std::vector<int> ids{3, 0, 3, 6};
    Tensor w = Tensor::randu({4, 4}, -1.0, 1.0, rng);
    Tensor wc = Tensor::randu({4, 4}, -1.0, 1.0, rng);
    check_gradients([&](Tape& t) { return project(t, t.embedding_lookup(table, ids), w); },
                    {table});
    check_gradients([&](Tape& t) { return project(t, t.embed_columns(table, ids), wc); },
                    {table});
  }
  SECTION("col_blend") {
    Tensor a = grad_randu({3, 4}, rng), b = grad_randu({3, 4}, rng);
    std::vector<double> keep{1.0, 0.0, 1.0, 0.0};
    Tensor w = Tensor::randu({3, 4}, -1.0, 1.0, rng);
    check_gradients([&](Tape& t) { return project(t, t.col_blend(keep, a, b), w); }, {a, b});
  }
  SECTION("cross entropy, both layouts") {
    Tensor logits = grad_randu({4, 6}, rng);
    std::vector<int> targets{2, 0, 5, 0};  // pad id 0 masks two positions
    check_gradients([&](Tape& t) { return t.cross_entropy(logits, targets, 0); }, {logits});
    Tensor cols = grad_randu({6, 4}, rng);
    check_gradients(
        [&](Tape& t) { return t.cross_entropy_columns(cols, targets, 0); }, {cols});
  }
}

TEST_CASE("embedding lookup rejects out-of-range ids") {
  Tape tape;
  Tensor table({4, 2});
  CHECK_THROWS_AS(tape.embedding_lookup(table, {4}), ContractError);
  CHECK_THROWS_AS(tape.embed_columns(table, {-1}), ContractError);
}

TEST_CASE("tensor ops are deterministic under a fixed seed") {
  auto make = [] {
    Rng rng(99);
    Tensor x = Tensor::randu({8, 8}, -2.0, 2.0, rng);
    Tape tape;
    return tape.sum(tape.softmax(tape.matmul(x, x))).value();
  };
  CHECK(make() == make());
}

TEST_CASE("adam first step moves by roughly minus lr") {
  Tensor p = Tensor::scalar(1.0).set_requires_grad(true);
  p.grad()[0] = 0.5;
  NamedParams params{{"p", p}};
  AdamState state;
  adam_update(params, state, AdamConfig{});
  // mhat = 0.5, vhat = 0.25 -> delta = -lr * 0.5 / (0.5 + eps)
  CHECK(p.value() == Catch::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(state.step_count("p") == 1);
}

TEST_CASE("adam leaves a zero-gradient parameter unchanged") {
  Tensor p = Tensor::scalar(3.0).set_requires_grad(true);
  p.grad();  // allocated, all zero
  NamedParams params{{"p", p}};
  AdamState state;
  adam_update(params, state, AdamConfig{});
  CHECK(p.value() == 3.0);
}

TEST_CASE("adam follows the scalar recurrence exactly") {
  struct Oracle {
    double m = 0.0, v = 0.0;
    long t = 0;
    double step(double w, double g, const AdamConfig& c) {
      ++t;
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      v = c.beta2 * v + (1.0 - c.beta2) * g * g;
      const double mhat = m / (1.0 - std::pow(c.beta1, static_cast<double>(t)));
      const double vhat = v / (1.0 - std::pow(c.beta2, static_cast<double>(t)));
      return w - c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  };
  AdamConfig cfg;
  Oracle oracle;
  Tensor p = Tensor::scalar(0.7).set_requires_grad(true);
  NamedParams params{{"p", p}};
  AdamState state;
  double w = 0.7;
  Rng rng(5);
  for (int k = 0; k < 25; ++k) {
    const double g = rng.uniform(-1.0, 1.0);
    p.grad()[0] = g;
    adam_update(params, state, cfg);
    w = oracle.step(w, g, cfg);
    CHECK(p.value() == Catch::Approx(w).epsilon(1e-15));
    CHECK(state.step_count("p") == k + 1);
  }
}

TEST_CASE("adam rejects parameters without gradients") {
  Tensor p = Tensor::scalar(1.0).set_requires_grad(true);
  NamedParams params{{"p", p}};
  AdamState state;
  CHECK_THROWS_AS(adam_update(params, state, AdamConfig{}), ContractError);
}

TEST_CASE("per-parameter step counters advance independently") {
  Tensor a = Tensor::scalar(1.0).set_requires_grad(true);
  Tensor b = Tensor::scalar(1.0).set_requires_grad(true);
  AdamState state;
  AdamConfig cfg;
  NamedParams pa{{"a", a}};
  NamedParams pb{{"b", b}};
  for (int i = 0; i < 3; ++i) {
    a.grad()[0] = 1.0;
    adam_update(pa, state, cfg);
  }
  b.grad()[0] = 1.0;
  adam_update(pb, state, cfg);
  CHECK(state.step_count("a") == 3);
  CHECK(state.step_count("b") == 1);
}

TEST_CASE("gradient clipping rescales to the global norm bound") {
  Tensor a = Tensor({2}, {0.0, 0.0}).set_requires_grad(true);
  Tensor b = Tensor({1}, {0.0}).set_requires_grad(true);
  a.grad() = {3.0, 4.0};
  b.grad() = {12.0};
  NamedParams params{{"a", a}, {"b", b}};
  CHECK(global_grad_norm(params) == Catch::Approx(13.0));
  clip_gradients(params, 5.0);
  CHECK(global_grad_norm(params) == Catch::Approx(5.0).epsilon(1e-12));
  // direction preserved
  CHECK(a.grad()[0] / a.grad()[1] == Catch::Approx(0.75));
  // already-small norms untouched
  clip_gradients(params, 5.0);
  CHECK(global_grad_norm(params) == Catch::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("checkpoints round-trip bit-identically") {
  Rng rng(42);
  std::map<std::string, Tensor> params;
  params.emplace("w1", Tensor::randu({3, 4}, -1.0, 1.0, rng));
  params.emplace("b", Tensor::randu({4}, -0.1, 0.1, rng));
  const auto path = std::filesystem::temp_directory_path() / "hnmt_ckpt_test.json";
  save_checkpoint(path.string(), params, {{"note", "test"}});
  Checkpoint ck = load_checkpoint(path.string());
  REQUIRE(ck.params.size() == 2);
  for (const auto& [id, t] : params) {
    REQUIRE(ck.params.count(id) == 1);
    CHECK(ck.params.at(id).shape() == t.shape());
    CHECK(ck.params.at(id).vec() == t.vec());
  }
  CHECK(ck.meta.at("note") == "test");
  std::filesystem::remove(path);
}
