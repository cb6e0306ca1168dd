#pragma once

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hnmt/common.hpp"
#include "json.hpp"

namespace hnmt {

// One node of the typological language family tree. Leaves are languages,
// interior nodes are families. Ids are assigned once (path-derived) and kept
// stable through every transformation so that parameter registries keyed by
// node id are reproducible across runs.
struct FamilyNode {
  std::string id;
  std::string name;
  std::vector<FamilyNode> children;
  bool is_language = false;
  // original family id when this node is a preprocessing clone
  std::string duplicate_of;

  std::size_t language_count() const {
    if (is_language) return 1;
    std::size_t n = 0;
    for (const auto& c : children) n += c.language_count();
    return n;
  }
};

namespace detail {

inline bool valid_node_name(std::string_view name) {
  if (name.empty()) return false;
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.' || c == '+';
    if (!ok) return false;
  }
  return true;
}

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

// Validated, indexed tree. Immutable after construction; transformations
// return new trees.
class LanguageTree {
public:
  LanguageTree() = default;

  static LanguageTree adopt(FamilyNode root) {
    LanguageTree t;
    t.root_ = std::move(root);
    if (t.root_.id.empty()) t.root_.id = "/" + t.root_.name;
    t.assign_ids(t.root_);
    if (t.root_.is_language || t.root_.children.empty())
      throw ParseError("tree validation error: root must be a family with at least one child");
    t.index(t.root_, {}, 0);
    for (const auto& [id, path] : t.id_paths_) {
      const FamilyNode& n = t.at(path);
      if (n.is_language != n.children.empty())
        throw ParseError("tree validation error: node '" + id +
                         "' mixes language/family roles");
      if (!n.duplicate_of.empty()) {
        auto it = t.id_paths_.find(n.duplicate_of);
        if (it == t.id_paths_.end() || t.at(it->second).is_language)
          throw ParseError("tree validation error: duplicate_of '" + n.duplicate_of +
                           "' does not name a family node");
      }
    }
    return t;
  }

  const FamilyNode& root() const { return root_; }

  bool has_language(std::string_view name) const {
    return lang_paths_.count(std::string(name)) > 0;
  }

  const FamilyNode& language(std::string_view name) const {
    auto it = lang_paths_.find(std::string(name));
    if (it == lang_paths_.end())
      throw LookupError("unknown language '" + std::string(name) + "'");
    return at(it->second);
  }

  const FamilyNode* find(std::string_view id) const {
    auto it = id_paths_.find(std::string(id));
    return it == id_paths_.end() ? nullptr : &at(it->second);
  }

  // depth from root (root = 0)
  int depth_of(std::string_view id) const {
    auto it = id_paths_.find(std::string(id));
    if (it == id_paths_.end()) throw LookupError("unknown node id '" + std::string(id) + "'");
    return static_cast<int>(it->second.size());
  }

  // language names in document order
  std::vector<std::string> languages() const {
    std::vector<std::pair<std::vector<std::size_t>, std::string>> rows;
    rows.reserve(lang_paths_.size());
    for (const auto& [name, path] : lang_paths_) rows.emplace_back(path, name);
    std::sort(rows.begin(), rows.end());
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (auto& r : rows) out.push_back(std::move(r.second));
    return out;
  }

  std::size_t language_count() const { return lang_paths_.size(); }

  // family ids on the path root -> leaf, excluding root and the leaf itself,
  // ordered shallowest first
  std::vector<std::string> family_chain(std::string_view language_name) const {
    auto it = lang_paths_.find(std::string(language_name));
    if (it == lang_paths_.end())
      throw LookupError("unknown language '" + std::string(language_name) + "'");
    std::vector<std::string> chain;
    const FamilyNode* n = &root_;
    const auto& path = it->second;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      n = &n->children[path[i]];
      chain.push_back(n->id);
    }
    return chain;
  }

  nlohmann::json to_json() const { return node_json(root_); }

  std::string pretty() const {
    std::ostringstream os;
    pretty_rec(root_, 0, os);
    return os.str();
  }

private:
  FamilyNode root_;
  std::map<std::string, std::vector<std::size_t>> lang_paths_;
  std::map<std::string, std::vector<std::size_t>> id_paths_;

  const FamilyNode& at(const std::vector<std::size_t>& path) const {
    const FamilyNode* n = &root_;
    for (std::size_t i : path) n = &n->children[i];
    return *n;
  }

  void assign_ids(FamilyNode& n) {
    for (auto& c : n.children) {
      if (c.id.empty()) c.id = n.id + "/" + c.name;
      assign_ids(c);
    }
  }

  void index(const FamilyNode& n, std::vector<std::size_t> path, int depth) {
    if (!id_paths_.emplace(n.id, path).second)
      throw ParseError("tree validation error: duplicate node id '" + n.id + "'");
    if (n.is_language) {
      if (!lang_paths_.emplace(n.name, path).second)
        throw ParseError("tree validation error: duplicate language name '" + n.name + "'");
    }
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      path.push_back(i);
      index(n.children[i], path, depth + 1);
      path.pop_back();
    }
  }

  static nlohmann::json node_json(const FamilyNode& n) {
    nlohmann::json j;
    j["name"] = n.name;
    j["id"] = n.id;
    if (!n.duplicate_of.empty()) j["duplicate_of"] = n.duplicate_of;
    if (!n.children.empty()) {
      nlohmann::json kids = nlohmann::json::array();
      for (const auto& c : n.children) kids.push_back(node_json(c));
      j["children"] = std::move(kids);
    }
    return j;
  }

  static void pretty_rec(const FamilyNode& n, int indent, std::ostringstream& os) {
    for (int i = 0; i < indent; ++i) os << "  ";
    os << n.name;
    if (n.is_language) os << "  (language)";
    if (!n.duplicate_of.empty()) os << "  (duplicate of " << n.duplicate_of << ")";
    os << "\n";
    for (const auto& c : n.children) pretty_rec(c, indent + 1, os);
  }
};

namespace detail {

inline FamilyNode node_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    throw ParseError("tree format error: every node must be an object with a \"name\" string");
  FamilyNode n;
  n.name = j["name"].get<std::string>();
  if (!valid_node_name(n.name))
    throw ParseError("tree format error: invalid node name '" + n.name +
                     "' (allowed: letters, digits, '_', '-', '.', '+')");
  if (j.contains("id")) n.id = j["id"].get<std::string>();
  if (j.contains("duplicate_of")) n.duplicate_of = j["duplicate_of"].get<std::string>();
  if (j.contains("children") && !j["children"].empty()) {
    if (!j["children"].is_array())
      throw ParseError("tree format error: \"children\" of '" + n.name + "' must be an array");
    for (const auto& c : j["children"]) n.children.push_back(node_from_json(c));
  } else {
    n.is_language = true;
  }
  return n;
}

}  // namespace detail

// Tree file: UTF-8 JSON, one object per node: {"name": str, "children": [...]}.
// A node with an empty or absent "children" is a language. "id" and
// "duplicate_of" are optional (written by dumps of preprocessed trees) and
// honored on re-parse so node identities survive a round trip.
inline LanguageTree parse_tree(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, col] = detail::line_column(text, e.byte ? e.byte - 1 : 0);
    std::ostringstream os;
    os << "tree parse error at line " << line << ", column " << col << ": " << e.what();
    throw ParseError(os.str());
  }
  return LanguageTree::adopt(detail::node_from_json(j));
}

namespace detail {

inline void prune_rec(FamilyNode& node) {
  const std::size_t own = node.language_count();
  std::size_t i = 0;
  while (i < node.children.size()) {
    FamilyNode& c = node.children[i];
    if (!c.is_language && c.language_count() == own) {
      // splice the redundant family's children into its place
      std::vector<FamilyNode> grab = std::move(c.children);
      node.children.erase(node.children.begin() + static_cast<std::ptrdiff_t>(i));
      node.children.insert(node.children.begin() + static_cast<std::ptrdiff_t>(i),
                           std::make_move_iterator(grab.begin()),
                           std::make_move_iterator(grab.end()));
      // stay at i: spliced children are re-examined against this parent
    } else {
      ++i;
    }
  }
  for (auto& c : node.children)
    if (!c.is_language) prune_rec(c);
}

inline void collect_leaves(FamilyNode&& n, std::vector<FamilyNode>& out) {
  if (n.is_language) {
    out.push_back(std::move(n));
    return;
  }
  for (auto& c : n.children) collect_leaves(std::move(c), out);
}

inline void limit_rec(FamilyNode& n, int depth, int max_families) {
  if (!n.is_language && depth == max_families) {
    // families below this level dissolve; their languages attach here,
    // preserving document order
    std::vector<FamilyNode> kept;
    for (auto& c : n.children) collect_leaves(std::move(c), kept);
    n.children = std::move(kept);
    return;
  }
  for (auto& c : n.children)
    if (!c.is_language) limit_rec(c, depth + 1, max_families);
}

// Wraps `leaf` into a chain of `count` clones of the family identified by
// (original_id, original_name), deepest clone holding the leaf. Each leaf
// gets its own clones: duplicates are independent parameter owners, and
// sibling leaves must not share them or the decoder-prefix arithmetic
// (1 + similarity shared keys) breaks.
inline FamilyNode clone_chain(const std::string& original_id, const std::string& original_name,
                              FamilyNode leaf, int count) {
  const std::string leaf_name = leaf.name;
  FamilyNode cur = std::move(leaf);
  for (int i = count; i >= 1; --i) {
    FamilyNode clone;
    clone.name = original_name;
    clone.id = original_id + "~dup" + std::to_string(i) + "~" + leaf_name;
    clone.duplicate_of = original_id;
    clone.children.push_back(std::move(cur));
    cur = std::move(clone);
  }
  return cur;
}

inline void duplicate_rec(FamilyNode& n, int depth, int target) {
  for (auto& child : n.children) {
    if (!child.is_language) {
      duplicate_rec(child, depth + 1, target);
      continue;
    }
    const int have = depth;  // families on this leaf's chain
    if (have >= target) continue;
    if (have == 0) {
      // language attached directly to the root: it owns an implicit
      // singleton family, created first and then duplicated like any other
      FamilyNode implicit;
      implicit.name = child.name;
      implicit.id = child.id + "~fam";
      implicit.children.push_back(
          clone_chain(implicit.id, implicit.name, std::move(child), target - 1));
      child = std::move(implicit);
    } else {
      child = clone_chain(n.id, n.name, std::move(child), target - have);
    }
  }
}

}  // namespace detail

// Removes every non-root family whose descendant-language count equals its
// parent's, reattaching its children to the parent, until fixpoint.
inline LanguageTree prune_redundant_families(const LanguageTree& tree) {
  FamilyNode root = tree.root();
  detail::prune_rec(root);
  return LanguageTree::adopt(std::move(root));
}

// Truncates every leaf's family chain to at most `max_families` nodes,
// keeping the families closest to the root.
inline LanguageTree limit_depth(const LanguageTree& tree, int max_families) {
  if (max_families < 1) throw ContractError("limit_depth: depth must be >= 1");
  FamilyNode root = tree.root();
  detail::limit_rec(root, 0, max_families);
  return LanguageTree::adopt(std::move(root));
}

// Extends every leaf whose family chain is shorter than `target_families` by
// cloning its deepest family, so that afterwards every leaf sits under
// exactly `target_families` family nodes.
inline LanguageTree duplicate_leaves(const LanguageTree& tree, int target_families) {
  if (target_families < 1) throw ContractError("duplicate_leaves: depth must be >= 1");
  FamilyNode root = tree.root();
  detail::duplicate_rec(root, 0, target_families);
  return LanguageTree::adopt(std::move(root));
}

// Full preprocessing pipeline: redundancy pruning, depth limiting, leaf
// duplication. After this every leaf's family chain has exactly
// `family_depth` nodes.
inline LanguageTree preprocess_tree(const LanguageTree& tree, int family_depth) {
  return duplicate_leaves(limit_depth(prune_redundant_families(tree), family_depth),
                          family_depth);
}

// Number of family nodes (root excluded) the two languages share as
// ancestors. Meaningful on the redundancy-pruned tree, before depth limiting
// and duplication, so the value reflects typology rather than the layer
// budget.
inline int similarity(const LanguageTree& tree, std::string_view a, std::string_view b) {
  const auto ca = tree.family_chain(a);
  const auto cb = tree.family_chain(b);
  std::size_t n = 0;
  while (n < ca.size() && n < cb.size() && ca[n] == cb[n]) ++n;
  return static_cast<int>(n);
}

}  // namespace hnmt
