#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "relsvm/join_tree.hpp"
#include "relsvm/semiring.hpp"

namespace relsvm {

/// Materialized join: N labeled points in feature order.
struct DesignMatrix {
  std::size_t dimension = 0;
  std::vector<double> points;  // row-major, rows() x dimension
  std::vector<int> labels;     // +1 / -1

  std::size_t rows() const noexcept { return labels.size(); }
  std::span<const double> point(std::size_t i) const {
    return {points.data() + i * dimension, dimension};
  }
  std::span<double> point(std::size_t i) { return {points.data() + i * dimension, dimension}; }
  void add(std::span<const double> x, int y) {
    points.insert(points.end(), x.begin(), x.end());
    labels.push_back(y);
  }
};

inline constexpr unsigned long long kDefaultOutputCap = 1'000'000;

/// Exact join cardinality via the counting semiring; nothing is materialized.
BigCount count_join_rows(const JoinTree& tree);

/// Full join output (bag semantics) by semijoin reduction followed by a
/// top-down enumeration over the reduced tables. Throws OutputCapExceeded
/// before enumerating when the exact row count exceeds `cap`.
DesignMatrix materialize_join(const JoinTree& tree,
                              unsigned long long cap = kDefaultOutputCap);

/// Materialized rows with every attribute (label included) in global
/// attribute order; used by oracles that need join columns.
std::vector<std::vector<double>> materialize_join_tuples(const JoinTree& tree,
                                                         unsigned long long cap = kDefaultOutputCap);

}  // namespace relsvm
