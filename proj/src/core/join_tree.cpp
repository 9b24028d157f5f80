#include "relsvm/join_tree.hpp"

#include <algorithm>
#include <deque>
#include <string>

#include "relsvm/errors.hpp"

namespace relsvm {

namespace {

std::vector<std::size_t> sorted_attrs(const JoinSpec& spec, std::size_t t) {
  auto attrs = spec.table_attributes(t);
  std::sort(attrs.begin(), attrs.end());
  return attrs;
}

std::vector<std::size_t> intersect(const std::vector<std::size_t>& a,
                                   const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<std::size_t> columns_of(const JoinSpec& spec, std::size_t t,
                                    const std::vector<std::size_t>& attrs) {
  const auto& table_attrs = spec.table_attributes(t);
  std::vector<std::size_t> cols;
  for (auto a : attrs)
    cols.push_back(static_cast<std::size_t>(
        std::find(table_attrs.begin(), table_attrs.end(), a) - table_attrs.begin()));
  return cols;
}

}  // namespace

JoinTree::JoinTree(std::shared_ptr<const JoinSpec> spec,
                   const std::vector<std::pair<std::size_t, std::size_t>>& undirected,
                   std::size_t root)
    : spec_(std::move(spec)), root_(root) {
  const std::size_t n = spec_->num_tables();
  std::vector<std::vector<std::size_t>> adj(n);
  for (auto [a, b] : undirected) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());

  parent_.assign(n, npos);
  children_.assign(n, {});
  std::vector<std::size_t> order;  // BFS order
  std::vector<bool> seen(n, false);
  std::deque<std::size_t> queue{root};
  seen[root] = true;
  while (!queue.empty()) {
    auto u = queue.front();
    queue.pop_front();
    order.push_back(u);
    for (auto v : adj[u]) {
      if (seen[v]) continue;
      seen[v] = true;
      parent_[v] = u;
      children_[u].push_back(v);
      queue.push_back(v);
    }
  }
  postorder_.assign(order.rbegin(), order.rend());

  std::vector<std::vector<std::size_t>> attrs(n);
  for (std::size_t t = 0; t < n; ++t) attrs[t] = sorted_attrs(*spec_, t);

  parent_attrs_.assign(n, {});
  parent_key_cols_.assign(n, {});
  child_key_cols_.assign(n, {});
  for (std::size_t u = 0; u < n; ++u) {
    if (parent_[u] != npos) {
      parent_attrs_[u] = intersect(attrs[u], attrs[parent_[u]]);
      parent_key_cols_[u] = columns_of(*spec_, u, parent_attrs_[u]);
    }
  }
  for (std::size_t u = 0; u < n; ++u)
    for (auto c : children_[u]) child_key_cols_[u].push_back(columns_of(*spec_, u, parent_attrs_[c]));

  // Owner: first node in BFS order (closest to the root) containing the attribute.
  owner_.assign(spec_->attributes().size(), npos);
  owned_cols_.assign(n, {});
  for (auto u : order) {
    const auto& ta = spec_->table_attributes(u);
    for (std::size_t c = 0; c < ta.size(); ++c)
      if (owner_[ta[c]] == npos) {
        owner_[ta[c]] = u;
        owned_cols_[u].push_back(c);
      }
  }
}

std::vector<std::pair<std::size_t, std::size_t>> JoinTree::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t u = 0; u < size(); ++u)
    if (parent_[u] != npos) out.emplace_back(parent_[u], u);
  return out;
}

JoinTree JoinTree::rerooted(std::size_t new_root) const {
  return JoinTree(spec_, edges(), new_root);
}

JoinTree build_join_tree(std::shared_ptr<const JoinSpec> spec) {
  const std::size_t n = spec->num_tables();
  std::vector<std::vector<std::size_t>> attrs(n);
  for (std::size_t t = 0; t < n; ++t) attrs[t] = sorted_attrs(*spec, t);

  std::vector<bool> active(n, true);
  std::size_t remaining = n;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  while (remaining > 1) {
    bool removed = false;
    for (std::size_t e = 0; e < n && !removed; ++e) {
      if (!active[e]) continue;
      // Attributes of e that some other active hyperedge also contains.
      std::vector<std::size_t> shared;
      for (auto a : attrs[e])
        for (std::size_t f = 0; f < n; ++f)
          if (f != e && active[f] && std::binary_search(attrs[f].begin(), attrs[f].end(), a)) {
            shared.push_back(a);
            break;
          }
      for (std::size_t f = 0; f < n; ++f) {
        if (f == e || !active[f]) continue;
        if (std::includes(attrs[f].begin(), attrs[f].end(), shared.begin(), shared.end())) {
          edges.emplace_back(f, e);
          active[e] = false;
          --remaining;
          removed = true;
          break;
        }
      }
    }
    if (!removed) {
      std::string names;
      for (std::size_t t = 0; t < n; ++t)
        if (active[t]) names += (names.empty() ? "" : ", ") + spec->tables()[t].name();
      throw CyclicQuery("the join is cyclic: no ear among {" + names + "}");
    }
  }
  std::size_t root = 0;
  for (std::size_t t = 0; t < n; ++t)
    if (active[t]) root = t;
  return JoinTree(std::move(spec), edges, root);
}

}  // namespace relsvm
