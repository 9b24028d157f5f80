#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "relsvm/join_tree.hpp"

namespace relsvm {

enum class CountingMode { exact, sketch };

const char* counting_mode_name(CountingMode mode) noexcept;
CountingMode parse_counting_mode(std::string_view name);

/// One additive inequality  sum_j g_j(x_j) + offset >= threshold  over the
/// joined schema, with each g_j sign-split linear:
///   g_j(v) = positive[j] * v   if v >= 0
///            negative[j] * v   otherwise.
/// Vectors are indexed by global attribute id; the label attribute's
/// coefficients must be zero.
struct AdditiveInequality {
  std::vector<double> positive;
  std::vector<double> negative;
  double offset = 0.0;
  double threshold = 0.0;

  /// All-zero coefficients sized for `spec`.
  static AdditiveInequality zeros(const JoinSpec& spec);

  double term(std::size_t attr, double v) const {
    return v >= 0 ? positive[attr] * v : negative[attr] * v;
  }
  /// Left-hand side (including the offset) for a tuple in global attribute order.
  double score(std::span<const double> tuple) const;
  /// Throws ConfigError on size mismatch, non-finite values or a nonzero label term.
  void validate(const JoinSpec& spec) const;
};

struct CountingOptions {
  CountingMode mode = CountingMode::exact;
  /// Accuracy: sketch-mode results are within a (1+epsilon) factor.
  double epsilon = 0.1;
  /// Exact mode gives up (PartialSumBlowup) past this many distinct partial
  /// sums in one distribution.
  std::size_t exact_cap = 100'000;
  /// Test hook: multiplies every produced count. Anything but 1 breaks the
  /// counting contract on purpose (fault injection for `verify`).
  double fault_scale = 1.0;
};

struct CountingStats {
  /// Largest distribution (after compaction) held during the call.
  std::size_t peak_entries = 0;
  /// Realised worst-case undercount factor (1 = exact).
  double distortion = 1.0;
};

/// Multiset of (score, count) pairs, sorted by descending score with unique
/// scores. `distortion()` bounds how far tail counts were pushed down by
/// compaction: for every tau,  N(tau) / distortion <= count_at_least(tau) <= N(tau).
class ScoreDistribution {
 public:
  struct Entry {
    double score;
    double count;
  };

  ScoreDistribution() = default;
  static ScoreDistribution point(double score, double count = 1.0);
  /// Sorts, merges equal scores and drops zero counts.
  static ScoreDistribution from_entries(std::vector<Entry> entries, double distortion = 1.0);
  /// Entries already strictly descending by score with positive counts.
  static ScoreDistribution from_sorted(std::vector<Entry> entries, double distortion = 1.0);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  double total() const noexcept { return prefix_.empty() ? 0.0 : prefix_.back(); }
  double distortion() const noexcept { return distortion_; }

  /// Number of rows with score >= tau.
  double count_at_least(double tau) const;

  /// Merges adjacent entries into rank-geometric buckets: a bucket starting
  /// after P rows absorbs entries while the rows moved down stay <= step * P.
  /// Each moved row keeps the bucket's smallest score, so tails only shrink,
  /// by at most a factor (1 + step). Returns true if anything merged.
  bool compact(double step);

  void scale_counts(double factor);

  friend ScoreDistribution convolve(const ScoreDistribution& a, const ScoreDistribution& b);

 private:
  void rebuild_prefix();

  std::vector<Entry> entries_;
  std::vector<double> prefix_;
  double distortion_ = 1.0;
};

/// Distribution of pairwise sums.
ScoreDistribution convolve(const ScoreDistribution& a, const ScoreDistribution& b);
/// convolve followed by compact(step), streamed: memory stays proportional
/// to the inputs plus the compacted output.
ScoreDistribution convolve_compacted(const ScoreDistribution& a, const ScoreDistribution& b,
                                     double step);
/// convolve that throws PartialSumBlowup once the result would exceed `cap` entries.
ScoreDistribution convolve_capped(const ScoreDistribution& a, const ScoreDistribution& b,
                                  std::size_t cap);

/// Per-feature value counts C_{j,v}.
struct ColumnCounts {
  std::size_t attribute = 0;
  std::vector<double> values;  // ascending active domain
  std::vector<double> counts;  // same length as values

  double count_of(double value) const;
  double total() const;
};

struct CountResult {
  CountingMode mode = CountingMode::exact;
  double epsilon = 0.0;
  int label = 1;
  /// One entry per feature, in feature order.
  std::vector<ColumnCounts> columns;
  CountingStats stats;
};

/// For every feature j and value v of its active domain: the number of join
/// rows with label `label`, value v in column j, satisfying `ineq`.
/// Exact mode is exact; sketch mode returns one-sided (1+epsilon) undercounts.
CountResult row_counts(const JoinTree& tree, const AdditiveInequality& ineq, int label,
                       const CountingOptions& options);

/// Thresholds H_k: H_k is the largest value with at least floor((1+base)^k)
/// label rows scoring >= H_k, for k = 0 .. while floor((1+base)^k) <= N_l.
///
/// Repeated floor values occupy distinct slots; storage keeps one entry per
/// distinct target and maps slot indices onto them.
struct QuantileLadder {
  int label = 1;
  CountingMode mode = CountingMode::exact;
  /// Requested accuracy of approx_count_at.
  double epsilon = 0.0;
  /// Growth factor of the slot targets, (1+base)^k. Equals epsilon in exact
  /// mode whenever that already meets the accuracy; finer otherwise.
  double base = 0.0;
  /// Total label rows N_l.
  double label_rows = 0.0;
  /// Number of slots k = 0 .. num_slots-1.
  std::size_t num_slots = 0;
  /// Distinct targets floor((1+base)^k), ascending, with their first slot and
  /// threshold (non-increasing).
  std::vector<double> targets;
  std::vector<std::size_t> first_slot;
  std::vector<double> thresholds;
  CountingStats stats;

  double threshold(std::size_t k) const;
  double slot_count(std::size_t k) const;
  /// All slot thresholds H_0 .. H_{num_slots-1}.
  std::vector<double> slot_thresholds() const;
};

/// Ladder for the score  sum_j g_j(x_j) + offset  (the inequality's threshold
/// is ignored) over rows with label `label`.
QuantileLadder quantile_ladder(const JoinTree& tree, const AdditiveInequality& score, int label,
                               const CountingOptions& options);

/// floor((1+base)^k) for the largest k with H_k >= h, or 0 when none:
/// N(h)/(1+epsilon) <= approx_count_at(h) <= N(h).
double approx_count_at(const QuantileLadder& ladder, double h);

/// Integral over tau >= 0 of approx_count_at(tau):
///   sum_{k<L} c_k (H_k - H_{k+1}) + c_L H_L,  L = largest k with H_k >= 0.
/// Zero when no threshold is nonnegative.
double ladder_positive_mass(const QuantileLadder& ladder);

/// Distinct values of floor((1+base)^k) not exceeding `limit`.
struct LadderTargets {
  std::vector<double> values;
  std::vector<std::size_t> first_slot;
  /// Slots k with floor((1+base)^k) <= limit.
  std::size_t num_slots = 0;
  /// First target above `limit`.
  double next_value = 1.0;
};
LadderTargets ladder_targets(double base, double limit);

/// True when consecutive targets satisfy  next - 1 <= (1+epsilon) * current
/// up to `limit`, i.e. a ladder with this base meets the (1+epsilon) count
/// sandwich without any extra slack.
bool ladder_base_meets(double base, double epsilon, double limit);

}  // namespace relsvm
