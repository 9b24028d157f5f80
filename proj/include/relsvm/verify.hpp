#pragma once

// Oracle comparisons on one instance: the relational algorithms against the
// materialized join.

#include <cstdint>
#include <string>
#include <vector>

#include "relsvm/join.hpp"
#include "relsvm/svm.hpp"

namespace relsvm {

struct VerifyOptions {
  double lambda = 0.1;
  double epsilon = 0.1;
  /// Hypotheses checked besides the origin.
  std::size_t hypotheses = 4;
  std::uint64_t seed = 0;
  unsigned long long cap = kDefaultOutputCap;
  std::size_t exact_cap = 100'000;
  bool rescale = true;
  unsigned threads = 1;
  /// Test hook forwarded to every counting call.
  double fault_scale = 1.0;
};

struct PropertyCheck {
  std::string name;
  bool passed = true;
  /// Largest deviation seen (property specific, 0 when exact).
  double worst = 0;
  std::string detail;
};

struct VerifyReport {
  unsigned long long rows = 0;
  std::vector<PropertyCheck> checks;
  bool passed() const;
};

/// Checks, on `spec`:
///   join-count      count_join_rows = |materialize_join|, no dangling tuples
///   pseudo-gradient exact-count pseudo-gradient = 2 lambda beta - (1/N) sum_far y x  (1e-9)
///   fhat-sandwich   F(beta,Z)/(1+eps) <= F-hat(beta,X) <= F(beta,Z)  (1e-9 slack)
/// Throws OutputCapExceeded when the join is larger than `cap`.
VerifyReport verify_instance(const JoinSpec& spec, const VerifyOptions& options);

}  // namespace relsvm
