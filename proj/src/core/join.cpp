#include "relsvm/join.hpp"

#include <unordered_map>
#include <unordered_set>

#include "relsvm/errors.hpp"

namespace relsvm {

namespace {

using KeySet = std::unordered_set<RowKey, RowKeyHash>;
using RowIndex = std::unordered_map<RowKey, std::vector<std::size_t>, RowKeyHash>;

/// Row ids of each table surviving the full (bottom-up then top-down)
/// semijoin reduction.
std::vector<std::vector<std::size_t>> semijoin_reduce(const JoinTree& tree) {
  const JoinSpec& spec = tree.spec();
  const std::size_t n = tree.size();
  std::vector<std::vector<std::size_t>> alive(n);
  for (std::size_t u = 0; u < n; ++u) {
    alive[u].resize(spec.tables()[u].num_rows());
    for (std::size_t r = 0; r < alive[u].size(); ++r) alive[u][r] = r;
  }

  auto filter = [&](std::size_t u, const std::vector<std::size_t>& cols, const KeySet& keys) {
    const Table& t = spec.tables()[u];
    std::vector<std::size_t> kept;
    for (auto r : alive[u])
      if (keys.count(project_row(t.row(r), cols))) kept.push_back(r);
    alive[u] = std::move(kept);
  };

  // Bottom-up: parent semijoin child.
  for (auto u : tree.postorder()) {
    const auto& kids = tree.children(u);
    for (std::size_t i = 0; i < kids.size(); ++i) {
      KeySet keys;
      const Table& ct = spec.tables()[kids[i]];
      for (auto r : alive[kids[i]]) keys.insert(project_row(ct.row(r), tree.parent_key_columns(kids[i])));
      filter(u, tree.child_key_columns(u, i), keys);
    }
  }
  // Top-down: child semijoin parent.
  for (auto it = tree.postorder().rbegin(); it != tree.postorder().rend(); ++it) {
    auto u = *it;
    const auto& kids = tree.children(u);
    const Table& t = spec.tables()[u];
    for (std::size_t i = 0; i < kids.size(); ++i) {
      KeySet keys;
      for (auto r : alive[u]) keys.insert(project_row(t.row(r), tree.child_key_columns(u, i)));
      filter(kids[i], tree.parent_key_columns(kids[i]), keys);
    }
  }
  return alive;
}

void check_cap(const JoinTree& tree, unsigned long long cap) {
  BigCount n = count_join_rows(tree);
  if (n > cap) throw OutputCapExceeded(n.str(), cap);
}

}  // namespace

BigCount count_join_rows(const JoinTree& tree) {
  return eval_sumprod(tree, CountingSemiring{}, [](std::size_t, double) { return BigCount(1); });
}

std::vector<std::vector<double>> materialize_join_tuples(const JoinTree& tree,
                                                         unsigned long long cap) {
  check_cap(tree, cap);
  const JoinSpec& spec = tree.spec();
  const std::size_t n = tree.size();
  auto alive = semijoin_reduce(tree);

  // Index each non-root node's surviving rows by its parent key.
  std::vector<RowIndex> index(n);
  for (std::size_t u = 0; u < n; ++u) {
    if (!tree.parent(u)) continue;
    const Table& t = spec.tables()[u];
    for (auto r : alive[u]) index[u][project_row(t.row(r), tree.parent_key_columns(u))].push_back(r);
  }

  // Preorder over nodes: the enumeration binds nodes one at a time.
  std::vector<std::size_t> order(tree.postorder().rbegin(), tree.postorder().rend());
  std::vector<std::size_t> chosen(n, 0);
  std::vector<std::vector<double>> out;
  std::vector<double> tuple(spec.attributes().size(), 0.0);

  auto assign = [&](std::size_t u, std::size_t r) {
    const auto& attrs = spec.table_attributes(u);
    auto row = spec.tables()[u].row(r);
    for (std::size_t c = 0; c < attrs.size(); ++c) tuple[attrs[c]] = row[c];
  };

  // Iterative DFS over positions in `order`.
  auto recurse = [&](auto&& self, std::size_t pos) -> void {
    if (pos == order.size()) {
      out.push_back(tuple);
      return;
    }
    std::size_t u = order[pos];
    if (!tree.parent(u)) {
      for (auto r : alive[u]) {
        chosen[u] = r;
        assign(u, r);
        self(self, pos + 1);
      }
      return;
    }
    std::size_t p = *tree.parent(u);
    const auto& siblings = tree.children(p);
    std::size_t i = static_cast<std::size_t>(std::find(siblings.begin(), siblings.end(), u) - siblings.begin());
    auto key = project_row(spec.tables()[p].row(chosen[p]), tree.child_key_columns(p, i));
    auto it = index[u].find(key);
    if (it == index[u].end()) return;
    for (auto r : it->second) {
      chosen[u] = r;
      assign(u, r);
      self(self, pos + 1);
    }
  };
  recurse(recurse, 0);
  return out;
}

DesignMatrix materialize_join(const JoinTree& tree, unsigned long long cap) {
  const JoinSpec& spec = tree.spec();
  auto tuples = materialize_join_tuples(tree, cap);
  DesignMatrix m;
  m.dimension = spec.dimension();
  m.points.reserve(tuples.size() * m.dimension);
  m.labels.reserve(tuples.size());
  std::vector<double> x(m.dimension);
  for (const auto& t : tuples) {
    for (std::size_t k = 0; k < m.dimension; ++k) x[k] = t[spec.feature_attributes()[k]];
    m.add(x, t[spec.label_attribute()] > 0 ? 1 : -1);
  }
  return m;
}

}  // namespace relsvm
