#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <limits>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "relsvm/join_tree.hpp"

namespace relsvm {

/// Arbitrary-precision row count (star-join counts overflow 64 bits).
using BigCount = boost::multiprecision::cpp_int;

/// (S, combine, identity) with combine associative and commutative.
template <class M>
concept CommutativeMonoid = requires(const M& m, const typename M::value_type& a) {
  typename M::value_type;
  { m.identity() } -> std::convertible_to<typename M::value_type>;
  { m.combine(a, a) } -> std::convertible_to<typename M::value_type>;
};

/// (R, add, zero, mul, one): both operations commutative and associative, mul
/// distributes over add, zero annihilates.
template <class S>
concept CommutativeSemiring = requires(const S& s, const typename S::value_type& a) {
  typename S::value_type;
  { s.zero() } -> std::convertible_to<typename S::value_type>;
  { s.one() } -> std::convertible_to<typename S::value_type>;
  { s.add(a, a) } -> std::convertible_to<typename S::value_type>;
  { s.mul(a, a) } -> std::convertible_to<typename S::value_type>;
};

/// (N, +, x): counts rows.
struct CountingSemiring {
  using value_type = BigCount;
  value_type zero() const { return 0; }
  value_type one() const { return 1; }
  value_type add(const value_type& a, const value_type& b) const { return a + b; }
  value_type mul(const value_type& a, const value_type& b) const { return a * b; }
};

/// (R, +, x) over doubles.
struct RealSumProduct {
  using value_type = double;
  value_type zero() const { return 0.0; }
  value_type one() const { return 1.0; }
  value_type add(value_type a, value_type b) const { return a + b; }
  value_type mul(value_type a, value_type b) const { return a * b; }
};

/// Tropical (R u {+inf}, min, +).
struct MinPlus {
  using value_type = double;
  value_type zero() const { return std::numeric_limits<double>::infinity(); }
  value_type one() const { return 0.0; }
  value_type add(value_type a, value_type b) const { return std::min(a, b); }
  value_type mul(value_type a, value_type b) const { return a + b; }
};

/// ({false,true}, or, and): join non-emptiness.
struct BooleanSemiring {
  using value_type = bool;
  value_type zero() const { return false; }
  value_type one() const { return true; }
  value_type add(value_type a, value_type b) const { return a || b; }
  value_type mul(value_type a, value_type b) const { return a && b; }
};

struct RealSum {
  using value_type = double;
  value_type identity() const { return 0.0; }
  value_type combine(value_type a, value_type b) const { return a + b; }
  value_type repeat(const BigCount& n, value_type v) const { return n.convert_to<double>() * v; }
};

struct RealMax {
  using value_type = double;
  value_type identity() const { return -std::numeric_limits<double>::infinity(); }
  value_type combine(value_type a, value_type b) const { return std::max(a, b); }
};

/// n-fold combine of v with itself; monoids may provide a closed form via
/// `repeat(n, v)`, otherwise repeated doubling is used.
template <CommutativeMonoid M>
typename M::value_type monoid_repeat(const M& m, const BigCount& n, const typename M::value_type& v) {
  if constexpr (requires { m.repeat(n, v); }) {
    return m.repeat(n, v);
  } else {
    typename M::value_type acc = m.identity();
    typename M::value_type base = v;
    BigCount k = n;
    while (k > 0) {
      if ((k & 1) != 0) acc = m.combine(acc, base);
      k >>= 1;
      if (k > 0) base = m.combine(base, base);
    }
    return acc;
  }
}

/// Semiring over (count, monoid value) pairs used to answer SumSum queries
/// with a single SumProd pass:
///   (c1,v1) + (c2,v2) = (c1+c2, v1 . v2)
///   (c1,v1) * (c2,v2) = (c1 c2, c2*v1 . c1*v2)
/// where n*v is the n-fold monoid combination.
template <CommutativeMonoid M>
struct CountedMonoidSemiring {
  struct value_type {
    BigCount count;
    typename M::value_type value;
  };
  M monoid;

  value_type zero() const { return {0, monoid.identity()}; }
  value_type one() const { return {1, monoid.identity()}; }
  value_type add(const value_type& a, const value_type& b) const {
    return {a.count + b.count, monoid.combine(a.value, b.value)};
  }
  value_type mul(const value_type& a, const value_type& b) const {
    return {a.count * b.count, monoid.combine(monoid_repeat(monoid, b.count, a.value),
                                              monoid_repeat(monoid, a.count, b.value))};
  }
};

/// Evaluates the SumProd query  (+)_{x in J} (x)_i F_i(x_i)  over the join
/// described by `tree` without materializing it.
///
/// `factor(attr, value)` returns F_attr(value) for global attribute id `attr`.
/// Each attribute's factor is applied once, at its owner node. Messages flow
/// leaf to root and are keyed by the values of the attributes an edge shares.
template <CommutativeSemiring S, class Factor>
typename S::value_type eval_sumprod(const JoinTree& tree, const S& sr, Factor&& factor) {
  using V = typename S::value_type;
  using Message = std::unordered_map<RowKey, V, RowKeyHash>;
  const JoinSpec& spec = tree.spec();

  std::vector<Message> up(tree.size());
  V result = sr.zero();
  for (auto u : tree.postorder()) {
    const Table& table = spec.tables()[u];
    const auto& attrs = spec.table_attributes(u);
    const auto& kids = tree.children(u);
    const bool is_root = !tree.parent(u);
    Message out;
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
      auto row = table.row(r);
      V w = sr.one();
      bool dangling = false;
      for (std::size_t i = 0; i < kids.size(); ++i) {
        const auto& msg = up[kids[i]];
        auto it = msg.find(project_row(row, tree.child_key_columns(u, i)));
        if (it == msg.end()) {
          dangling = true;
          break;
        }
        w = sr.mul(w, it->second);
      }
      if (dangling) continue;
      for (auto c : tree.owned_columns(u)) w = sr.mul(w, factor(attrs[c], row[c]));
      if (is_root) {
        result = sr.add(result, w);
      } else {
        auto key = project_row(row, tree.parent_key_columns(u));
        auto it = out.find(key);
        if (it == out.end())
          out.emplace(std::move(key), std::move(w));
        else
          it->second = sr.add(it->second, w);
      }
    }
    for (auto c : kids) Message().swap(up[c]);
    up[u] = std::move(out);
  }
  return result;
}

/// Evaluates the SumSum query  (+)_{x in J} (+)_i F_i(x_i)  over a commutative
/// monoid, via one SumProd pass over CountedMonoidSemiring.
template <CommutativeMonoid M, class Factor>
typename M::value_type eval_sumsum(const JoinTree& tree, const M& monoid, Factor&& factor) {
  CountedMonoidSemiring<M> sr{monoid};
  using V = typename CountedMonoidSemiring<M>::value_type;
  auto result = eval_sumprod(tree, sr, [&](std::size_t attr, double value) {
    return V{1, factor(attr, value)};
  });
  return result.value;
}

}  // namespace relsvm
