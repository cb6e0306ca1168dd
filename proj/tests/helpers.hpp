#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hnmt/common.hpp"
#include "hnmt/langtree.hpp"
#include "hnmt/tape.hpp"
#include "hnmt/tensor.hpp"

namespace hnmt::testing {

// Central finite differences against analytic pullbacks. The oracle re-runs
// the forward pass on a non-recording tape, independent of the
// differentiation machinery under test. Returns the worst relative error;
// callers assert it against their tolerance.
template <class F>
double gradient_check(F&& build, std::vector<Tensor> inputs, double step = 1e-5) {
  for (auto& t : inputs) t.drop_grad();
  Tape tape;
  Tensor loss = build(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs)
    analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));
  double worst = 0.0;
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
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline std::size_t node_count(const FamilyNode& n) {
  std::size_t c = 1;
  for (const auto& k : n.children) c += node_count(k);
  return c;
}

inline void leaf_names_rec(const FamilyNode& n, std::vector<std::string>& out) {
  if (n.is_language) {
    out.push_back(n.name);
    return;
  }
  for (const auto& c : n.children) leaf_names_rec(c, out);
}

inline std::vector<std::string> leaf_names(const LanguageTree& t) {
  std::vector<std::string> out;
  leaf_names_rec(t.root(), out);
  return out;
}

namespace detail {

inline FamilyNode random_subtree(Rng& rng, int depth, int max_depth, int& lang_counter,
                                 int& fam_counter) {
  const bool leaf = depth > 0 && (depth >= max_depth || rng.unit() < 0.4);
  FamilyNode n;
  if (leaf) {
    n.name = "L" + std::to_string(lang_counter++);
    n.is_language = true;
    return n;
  }
  n.name = depth == 0 ? "root" : "F" + std::to_string(fam_counter++);
  const std::size_t kids = 1 + rng.below(3);
  for (std::size_t i = 0; i < kids; ++i)
    n.children.push_back(random_subtree(rng, depth + 1, max_depth, lang_counter, fam_counter));
  return n;
}

}  // namespace detail

// Arbitrary valid tree: unique language names, branch factor 1..3, family
// chains up to 5 deep. Used by the tree-algebra and sharing property suites.
inline LanguageTree random_tree(std::uint64_t seed) {
  Rng rng(seed);
  int langs = 0, fams = 0;
  FamilyNode root = detail::random_subtree(rng, 0, 1 + static_cast<int>(rng.below(5)), langs, fams);
  return LanguageTree::adopt(std::move(root));
}

}  // namespace hnmt::testing
