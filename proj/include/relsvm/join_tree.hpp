#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "relsvm/relational.hpp"

namespace relsvm {

/// A join tree over the tables of a JoinSpec: one node per table, and for
/// every attribute the nodes containing it form a connected subtree.
///
/// The tree shares ownership of its (immutable) JoinSpec, so it can be handed
/// to any number of concurrent readers.
class JoinTree {
 public:
  const JoinSpec& spec() const noexcept { return *spec_; }
  const std::shared_ptr<const JoinSpec>& spec_ptr() const noexcept { return spec_; }

  std::size_t size() const noexcept { return parent_.size(); }
  std::size_t root() const noexcept { return root_; }
  std::optional<std::size_t> parent(std::size_t node) const {
    if (parent_[node] == npos) return std::nullopt;
    return parent_[node];
  }
  const std::vector<std::size_t>& children(std::size_t node) const { return children_[node]; }

  /// Global attribute ids shared by `node` and its parent (empty at the root).
  const std::vector<std::size_t>& parent_attributes(std::size_t node) const {
    return parent_attrs_[node];
  }
  /// Column positions, within the node's own table, of parent_attributes(node).
  const std::vector<std::size_t>& parent_key_columns(std::size_t node) const {
    return parent_key_cols_[node];
  }
  /// Column positions, within the node's table, of the attributes it shares
  /// with child `children(node)[i]` (same order as that child's parent_attributes).
  const std::vector<std::size_t>& child_key_columns(std::size_t node, std::size_t i) const {
    return child_key_cols_[node][i];
  }

  /// Nodes ordered children-before-parent; the root is last.
  const std::vector<std::size_t>& postorder() const noexcept { return postorder_; }

  /// The node closest to the root that contains `attr`. Per-attribute factors
  /// are applied there, exactly once.
  std::size_t owner(std::size_t attr) const { return owner_[attr]; }
  /// Columns (positions in the node's table) whose attribute this node owns.
  const std::vector<std::size_t>& owned_columns(std::size_t node) const {
    return owned_cols_[node];
  }

  /// Undirected tree edges as (parent, child) pairs.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;

  /// Same undirected tree, rooted at `new_root`.
  JoinTree rerooted(std::size_t new_root) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  friend JoinTree build_join_tree(std::shared_ptr<const JoinSpec> spec);
  JoinTree(std::shared_ptr<const JoinSpec> spec,
           const std::vector<std::pair<std::size_t, std::size_t>>& undirected, std::size_t root);

  std::shared_ptr<const JoinSpec> spec_;
  std::size_t root_ = 0;
  std::vector<std::size_t> parent_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::vector<std::size_t>> parent_attrs_;
  std::vector<std::vector<std::size_t>> parent_key_cols_;
  std::vector<std::vector<std::vector<std::size_t>>> child_key_cols_;
  std::vector<std::size_t> postorder_;
  std::vector<std::size_t> owner_;
  std::vector<std::vector<std::size_t>> owned_cols_;
};

/// GYO ear removal over the query hypergraph. Returns a join tree when the
/// hypergraph is acyclic and throws CyclicQuery otherwise. Tables sharing no
/// attributes are joined as a cross product.
JoinTree build_join_tree(std::shared_ptr<const JoinSpec> spec);

inline JoinTree build_join_tree(JoinSpec spec) {
  return build_join_tree(std::make_shared<const JoinSpec>(std::move(spec)));
}

/// Projection of a row onto a list of columns, used as a hash key for
/// join-attribute values.
using RowKey = std::vector<double>;

inline RowKey project_row(std::span<const double> row, const std::vector<std::size_t>& cols) {
  RowKey key;
  key.reserve(cols.size());
  for (auto c : cols) key.push_back(row[c] == 0 ? 0.0 : row[c]);  // fold -0 into +0
  return key;
}

struct RowKeyHash {
  std::size_t operator()(const RowKey& key) const noexcept {
    std::size_t h = 0x9e3779b97f4a7c15ull;
    for (double v : key) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h ^= bits + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }
};

}  // namespace relsvm
