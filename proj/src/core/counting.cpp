#include "relsvm/counting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "relsvm/errors.hpp"

namespace relsvm {

const char* counting_mode_name(CountingMode mode) noexcept {
  return mode == CountingMode::exact ? "exact" : "sketch";
}

CountingMode parse_counting_mode(std::string_view name) {
  if (name == "exact") return CountingMode::exact;
  if (name == "sketch") return CountingMode::sketch;
  throw ConfigError("unknown counting mode '" + std::string(name) + "' (exact|sketch)");
}

// --- AdditiveInequality ------------------------------------------------------

AdditiveInequality AdditiveInequality::zeros(const JoinSpec& spec) {
  AdditiveInequality ineq;
  ineq.positive.assign(spec.attributes().size(), 0.0);
  ineq.negative.assign(spec.attributes().size(), 0.0);
  return ineq;
}

double AdditiveInequality::score(std::span<const double> tuple) const {
  double s = 0.0;
  for (std::size_t a = 0; a < tuple.size(); ++a) s += term(a, tuple[a]);
  return s + offset;
}

void AdditiveInequality::validate(const JoinSpec& spec) const {
  const auto n = spec.attributes().size();
  if (positive.size() != n || negative.size() != n)
    throw ConfigError("inequality has " + std::to_string(positive.size()) +
                      " coefficients, the join schema has " + std::to_string(n) + " attributes");
  for (std::size_t a = 0; a < n; ++a)
    if (!std::isfinite(positive[a]) || !std::isfinite(negative[a]))
      throw ConfigError("inequality coefficient for '" + spec.attributes()[a] + "' is not finite");
  if (!std::isfinite(offset) || !std::isfinite(threshold))
    throw ConfigError("inequality offset/threshold must be finite");
  if (positive[spec.label_attribute()] != 0.0 || negative[spec.label_attribute()] != 0.0)
    throw ConfigError("the label attribute cannot carry a score term");
}

// --- ScoreDistribution --------------------------------------------------------

ScoreDistribution ScoreDistribution::point(double score, double count) {
  ScoreDistribution d;
  if (count > 0) d.entries_.push_back({score, count});
  d.rebuild_prefix();
  return d;
}

ScoreDistribution ScoreDistribution::from_entries(std::vector<Entry> entries, double distortion) {
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.score > b.score; });
  ScoreDistribution d;
  d.distortion_ = distortion;
  d.entries_.reserve(entries.size());
  for (const auto& e : entries) {
    if (!(e.count > 0)) continue;
    if (!d.entries_.empty() && d.entries_.back().score == e.score)
      d.entries_.back().count += e.count;
    else
      d.entries_.push_back(e);
  }
  d.rebuild_prefix();
  return d;
}

void ScoreDistribution::rebuild_prefix() {
  prefix_.resize(entries_.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) prefix_[i] = acc += entries_[i].count;
}

double ScoreDistribution::count_at_least(double tau) const {
  auto it = std::partition_point(entries_.begin(), entries_.end(),
                                 [tau](const Entry& e) { return e.score >= tau; });
  auto n = static_cast<std::size_t>(it - entries_.begin());
  return n == 0 ? 0.0 : prefix_[n - 1];
}

namespace {

/// Rank-geometric compaction over a stream of strictly descending entries:
/// a bucket starting after `above` rows absorbs entries while the rows moved
/// down stay within step * above, and closes at the first entry that does not
/// fit (or the last one). The bucket keeps its closing score.
class Compactor {
 public:
  explicit Compactor(double step) : step_(step) {}

  void push(double score, double count) {
    if (step_ > 0 && above_ + moved_ + count <= (1.0 + step_) * above_) {
      moved_ += count;
      last_ = score;
      ++pending_;
      return;
    }
    if (pending_ > 0) merged_ = true;
    out_.push_back({score, moved_ + count});
    above_ += moved_ + count;
    moved_ = 0;
    pending_ = 0;
  }

  /// Returns the compacted entries; `merged` tells whether any bucket holds
  /// more than one input entry.
  std::vector<ScoreDistribution::Entry> finish(bool& merged) {
    if (pending_ > 0) {
      if (pending_ > 1) merged_ = true;
      out_.push_back({last_, moved_});
      pending_ = 0;
    }
    merged = merged_;
    return std::move(out_);
  }

  std::size_t size() const { return out_.size() + (pending_ > 0); }

 private:
  double step_;
  double above_ = 0;
  double moved_ = 0;
  double last_ = 0;
  std::size_t pending_ = 0;
  bool merged_ = false;
  std::vector<ScoreDistribution::Entry> out_;
};

/// Streams the pairwise sums of a and b in descending score order, equal
/// scores merged, using a heap over the smaller side.
template <class Emit>
void merge_sums(const ScoreDistribution& a, const ScoreDistribution& b, Emit&& emit) {
  const auto& small = a.size() <= b.size() ? a.entries() : b.entries();
  const auto& large = a.size() <= b.size() ? b.entries() : a.entries();
  if (small.empty() || large.empty()) return;
  if (small.size() == 1) {
    for (const auto& y : large) emit(small[0].score + y.score, small[0].count * y.count);
    return;
  }
  std::vector<std::size_t> cursor(small.size(), 0);
  using Item = std::pair<double, std::size_t>;  // (score, index into small)
  std::vector<Item> heap;
  heap.reserve(small.size());
  for (std::size_t i = 0; i < small.size(); ++i) heap.emplace_back(small[i].score + large[0].score, i);
  std::make_heap(heap.begin(), heap.end());
  bool have = false;
  double cur_score = 0, cur_count = 0;
  while (!heap.empty()) {
    std::pop_heap(heap.begin(), heap.end());
    auto [score, i] = heap.back();
    heap.pop_back();
    double count = small[i].count * large[cursor[i]].count;
    if (have && score == cur_score) {
      cur_count += count;
    } else {
      if (have) emit(cur_score, cur_count);
      have = true;
      cur_score = score;
      cur_count = count;
    }
    if (++cursor[i] < large.size()) {
      heap.emplace_back(small[i].score + large[cursor[i]].score, i);
      std::push_heap(heap.begin(), heap.end());
    }
  }
  if (have) emit(cur_score, cur_count);
}

}  // namespace

ScoreDistribution ScoreDistribution::from_sorted(std::vector<Entry> entries, double distortion) {
  ScoreDistribution d;
  d.entries_ = std::move(entries);
  d.distortion_ = distortion;
  d.rebuild_prefix();
  return d;
}

bool ScoreDistribution::compact(double step) {
  if (entries_.size() < 2 || !(step > 0)) return false;
  Compactor c(step);
  for (const auto& e : entries_) c.push(e.score, e.count);
  bool merged = false;
  auto out = c.finish(merged);
  if (merged) {
    entries_ = std::move(out);
    distortion_ *= 1.0 + step;
    rebuild_prefix();
  }
  return merged;
}

void ScoreDistribution::scale_counts(double factor) {
  for (auto& e : entries_) e.count *= factor;
  rebuild_prefix();
}

ScoreDistribution convolve(const ScoreDistribution& a, const ScoreDistribution& b) {
  std::vector<ScoreDistribution::Entry> out;
  merge_sums(a, b, [&](double s, double c) { out.push_back({s, c}); });
  return ScoreDistribution::from_sorted(std::move(out), a.distortion() * b.distortion());
}

ScoreDistribution convolve_compacted(const ScoreDistribution& a, const ScoreDistribution& b,
                                     double step) {
  Compactor c(step);
  merge_sums(a, b, [&](double s, double n) { c.push(s, n); });
  bool merged = false;
  auto out = c.finish(merged);
  return ScoreDistribution::from_sorted(std::move(out),
                                        a.distortion() * b.distortion() * (merged ? 1.0 + step : 1.0));
}

ScoreDistribution convolve_capped(const ScoreDistribution& a, const ScoreDistribution& b,
                                  std::size_t cap) {
  std::vector<ScoreDistribution::Entry> out;
  merge_sums(a, b, [&](double s, double c) {
    if (out.size() == cap) throw PartialSumBlowup(cap + 1, cap);
    out.push_back({s, c});
  });
  return ScoreDistribution::from_sorted(std::move(out), a.distortion() * b.distortion());
}

// --- ColumnCounts -------------------------------------------------------------

double ColumnCounts::count_of(double value) const {
  auto it = std::lower_bound(values.begin(), values.end(), value);
  if (it == values.end() || *it != value) return 0.0;
  return counts[static_cast<std::size_t>(it - values.begin())];
}

double ColumnCounts::total() const {
  double s = 0.0;
  for (double c : counts) s += c;
  return s;
}

// --- Join-tree dynamic programming ----------------------------------------------

namespace {

using Message = std::unordered_map<RowKey, ScoreDistribution, RowKeyHash>;

/// Shared state of one counting call: row scores, the label gate, and the
/// normalisation policy (exact cap or sketch compaction).
class ScoreDP {
 public:
  ScoreDP(const JoinTree& tree, const AdditiveInequality& ineq, int label,
          const CountingOptions& options, double sketch_accuracy, double layers)
      : tree_(tree), spec_(tree.spec()), options_(options) {
    ineq.validate(spec_);
    if (label != 1 && label != -1) throw ConfigError("label must be +1 or -1");
    if (options.mode == CountingMode::sketch && !(options.epsilon > 0))
      throw ConfigError("sketch mode needs epsilon > 0");
    if (options.mode == CountingMode::sketch) {
      step_ = std::expm1(std::log1p(sketch_accuracy) / layers);
      budget_ = 1.0 + sketch_accuracy;
    }

    const std::size_t n = tree.size();
    row_score_.resize(n);
    valid_.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
      const Table& t = spec_.tables()[u];
      const auto& attrs = spec_.table_attributes(u);
      auto label_col = t.label_column();
      row_score_[u].resize(t.num_rows());
      valid_[u].resize(t.num_rows());
      for (std::size_t r = 0; r < t.num_rows(); ++r) {
        auto row = t.row(r);
        valid_[u][r] = !label_col || row[*label_col] == static_cast<double>(label);
        double s = 0.0;
        for (auto c : tree.owned_columns(u)) s += ineq.term(attrs[c], row[c]);
        row_score_[u][r] = s;
      }
    }
  }

  const CountingStats& stats() const { return stats_; }

  void normalize(ScoreDistribution& d) {
    if (options_.mode == CountingMode::exact) {
      if (d.size() > options_.exact_cap) throw PartialSumBlowup(d.size(), options_.exact_cap);
    } else {
      d.compact(step_);
    }
    stats_.peak_entries = std::max(stats_.peak_entries, d.size());
    stats_.distortion = std::max(stats_.distortion, d.distortion());
  }

  /// Convolution followed by normalisation, without materialising the full
  /// product.
  ScoreDistribution combine(const ScoreDistribution& a, const ScoreDistribution& b) {
    ScoreDistribution d = options_.mode == CountingMode::exact ? convolve_capped(a, b, options_.exact_cap)
                                                               : convolve_compacted(a, b, step_);
    stats_.peak_entries = std::max(stats_.peak_entries, d.size());
    stats_.distortion = std::max(stats_.distortion, d.distortion());
    return d;
  }

  void check_budget() const {
    if (options_.mode == CountingMode::sketch && stats_.distortion > budget_ * (1 + 1e-12))
      throw Error(Errc::internal, "sketch distortion " + std::to_string(stats_.distortion) +
                                      " exceeds its budget " + std::to_string(budget_));
  }

  struct Input {
    const Message* message;
    const std::vector<std::size_t>* columns;
  };

  /// Incoming messages of node u, optionally skipping the one from `skip`
  /// (a neighbour id, or npos to keep all).
  std::vector<Input> inputs(std::size_t u, std::size_t skip, const std::vector<Message>& up,
                            const std::vector<Message>& down) const {
    std::vector<Input> in;
    if (tree_.parent(u) && *tree_.parent(u) != skip)
      in.push_back({&down[u], &tree_.parent_key_columns(u)});
    const auto& kids = tree_.children(u);
    for (std::size_t i = 0; i < kids.size(); ++i)
      if (kids[i] != skip) in.push_back({&up[kids[i]], &tree_.child_key_columns(u, i)});
    return in;
  }

  /// Groups valid rows of u by their keys into `in`, convolves the matching
  /// messages once per group and hands (group distribution, rows) to `sink`.
  /// Rows with a missing key are dropped (no join partner).
  template <class Sink>
  void for_each_group(std::size_t u, const std::vector<Input>& in, Sink&& sink) {
    const Table& t = spec_.tables()[u];
    std::unordered_map<RowKey, std::size_t, RowKeyHash> group_of;
    std::vector<std::vector<std::size_t>> rows;
    for (std::size_t r = 0; r < t.num_rows(); ++r) {
      if (!valid_[u][r]) continue;
      RowKey key;
      for (const auto& input : in) {
        auto part = project_row(t.row(r), *input.columns);
        key.insert(key.end(), part.begin(), part.end());
      }
      auto [it, inserted] = group_of.try_emplace(std::move(key), rows.size());
      if (inserted) rows.emplace_back();
      rows[it->second].push_back(r);
    }
    for (auto& group : rows) {
      auto row = t.row(group.front());
      ScoreDistribution combined = ScoreDistribution::point(0.0, 1.0);
      bool dangling = false;
      for (const auto& input : in) {
        auto it = input.message->find(project_row(row, *input.columns));
        if (it == input.message->end()) {
          dangling = true;
          break;
        }
        combined = combine(combined, it->second);
      }
      if (!dangling) sink(combined, group);
    }
  }

  /// Message from u keyed by `out_cols`: union over rows of
  /// (row score + combined inputs).
  Message build_message(std::size_t u, const std::vector<Input>& in,
                        const std::vector<std::size_t>& out_cols) {
    const Table& t = spec_.tables()[u];
    std::unordered_map<RowKey, std::pair<std::vector<ScoreDistribution::Entry>, double>, RowKeyHash>
        raw;
    for_each_group(u, in, [&](const ScoreDistribution& combined, const std::vector<std::size_t>& group) {
      std::unordered_map<RowKey, std::vector<ScoreDistribution::Entry>, RowKeyHash> by_key;
      for (auto r : group) by_key[project_row(t.row(r), out_cols)].push_back({row_score_[u][r], 1.0});
      for (auto& [key, own] : by_key) {
        auto shifted = combine(combined, ScoreDistribution::from_entries(std::move(own)));
        auto& slot = raw[key];
        slot.first.insert(slot.first.end(), shifted.entries().begin(), shifted.entries().end());
        slot.second = std::max(slot.second, shifted.distortion());
      }
    });
    Message out;
    for (auto& [key, acc] : raw) {
      auto d = ScoreDistribution::from_entries(std::move(acc.first), std::max(1.0, acc.second));
      normalize(d);
      out.emplace(key, std::move(d));
    }
    return out;
  }

  std::vector<Message> upward() {
    std::vector<Message> up(tree_.size());
    std::vector<Message> none(tree_.size());
    for (auto u : tree_.postorder()) {
      if (!tree_.parent(u)) continue;
      up[u] = build_message(u, inputs(u, *tree_.parent(u), up, none), tree_.parent_key_columns(u));
    }
    return up;
  }

  /// down[c]: distribution of the scores of everything outside c's subtree,
  /// keyed by c's parent key.
  std::vector<Message> downward(const std::vector<Message>& up) {
    std::vector<Message> down(tree_.size());
    for (auto it = tree_.postorder().rbegin(); it != tree_.postorder().rend(); ++it) {
      auto u = *it;
      const auto& kids = tree_.children(u);
      for (std::size_t i = 0; i < kids.size(); ++i)
        down[kids[i]] = build_message(u, inputs(u, kids[i], up, down), tree_.child_key_columns(u, i));
    }
    return down;
  }

  /// Distribution of total scores (without offset) over all label rows of J.
  ScoreDistribution root_distribution(const std::vector<Message>& up) {
    auto root = tree_.root();
    std::vector<Message> none(tree_.size());
    Message total = build_message(root, inputs(root, JoinTree::npos, up, none), {});
    if (total.empty()) return {};
    return std::move(total.begin()->second);
  }

  const std::vector<double>& row_scores(std::size_t u) const { return row_score_[u]; }
  const std::vector<char>& valid(std::size_t u) const { return valid_[u]; }

 private:
  const JoinTree& tree_;
  const JoinSpec& spec_;
  CountingOptions options_;
  double step_ = 0.0;
  double budget_ = 1.0;
  std::vector<std::vector<double>> row_score_;
  std::vector<std::vector<char>> valid_;
  CountingStats stats_;
};

}  // namespace

CountResult row_counts(const JoinTree& tree, const AdditiveInequality& ineq, int label,
                       const CountingOptions& options) {
  // Compaction layers behind one completion count: every node's inputs,
  // shifted rows and union (its degree + 2), plus the completion's own inputs.
  const double m = static_cast<double>(tree.size());
  ScoreDP dp(tree, ineq, label, options, options.epsilon, 5 * m + 2);
  auto up = dp.upward();
  auto down = dp.downward(up);
  const JoinSpec& spec = tree.spec();

  // Per feature: value -> count, over the owner node's active domain.
  std::vector<std::map<double, double>> tallies(spec.dimension());
  for (std::size_t u = 0; u < tree.size(); ++u) {
    const Table& t = spec.tables()[u];
    const auto& attrs = spec.table_attributes(u);
    std::vector<std::pair<std::size_t, std::size_t>> owned;  // (column, feature)
    for (auto c : tree.owned_columns(u))
      if (auto f = spec.feature_index(attrs[c])) owned.emplace_back(c, *f);
    if (owned.empty()) continue;
    for (std::size_t r = 0; r < t.num_rows(); ++r)
      for (auto [c, f] : owned) tallies[f].try_emplace(t.at(r, c) == 0 ? 0.0 : t.at(r, c), 0.0);

    auto in = dp.inputs(u, JoinTree::npos, up, down);
    dp.for_each_group(u, in, [&](const ScoreDistribution& completion, const std::vector<std::size_t>& group) {
      for (auto r : group) {
        double need = ineq.threshold - ineq.offset - dp.row_scores(u)[r];
        double n = completion.count_at_least(need) * options.fault_scale;
        if (n == 0) continue;
        for (auto [c, f] : owned) tallies[f][t.at(r, c) == 0 ? 0.0 : t.at(r, c)] += n;
      }
    });
  }
  dp.check_budget();

  CountResult result;
  result.mode = options.mode;
  result.epsilon = options.mode == CountingMode::exact ? 0.0 : options.epsilon;
  result.label = label;
  result.stats = dp.stats();
  for (std::size_t f = 0; f < spec.dimension(); ++f) {
    ColumnCounts col;
    col.attribute = spec.feature_attributes()[f];
    for (auto [v, n] : tallies[f]) {
      col.values.push_back(v);
      col.counts.push_back(n);
    }
    result.columns.push_back(std::move(col));
  }
  return result;
}

// --- Quantile ladder ---------------------------------------------------------------

LadderTargets ladder_targets(double base, double limit) {
  if (!(base > 0)) throw ConfigError("ladder base must be positive");
  LadderTargets out;
  if (limit < 1.0) {
    out.num_slots = 0;
    out.next_value = 1.0;
    return out;
  }
  const long double growth = 1.0L + static_cast<long double>(base);
  const long double log_growth = std::log(growth);
  auto target_at = [&](std::size_t k) {
    return std::floor(std::pow(growth, static_cast<long double>(k)));
  };
  std::size_t k = 0;
  long double c = 1.0L;
  for (;;) {
    out.values.push_back(static_cast<double>(c));
    out.first_slot.push_back(k);
    // Smallest k' > k with floor((1+base)^k') > c.
    auto guess = static_cast<std::size_t>(std::ceil(std::log(c + 1.0L) / log_growth));
    std::size_t next = std::max(guess, k + 1);
    while (next > k + 1 && target_at(next - 1) > c) --next;
    while (target_at(next) <= c) ++next;
    long double nc = target_at(next);
    if (nc > static_cast<long double>(limit)) {
      out.num_slots = next;
      out.next_value = static_cast<double>(nc);
      return out;
    }
    k = next;
    c = nc;
  }
}

bool ladder_base_meets(double base, double epsilon, double limit) {
  auto t = ladder_targets(base, limit);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    double next = i + 1 < t.values.size() ? t.values[i + 1] : std::min(t.next_value, std::floor(limit) + 1.0);
    if (next - 1.0 > (1.0 + epsilon) * t.values[i] * (1.0 + 1e-12)) return false;
  }
  return true;
}

double QuantileLadder::threshold(std::size_t k) const {
  if (k >= num_slots) throw std::out_of_range("ladder slot out of range");
  auto it = std::upper_bound(first_slot.begin(), first_slot.end(), k);
  return thresholds[static_cast<std::size_t>(it - first_slot.begin()) - 1];
}

double QuantileLadder::slot_count(std::size_t k) const {
  if (k >= num_slots) throw std::out_of_range("ladder slot out of range");
  auto it = std::upper_bound(first_slot.begin(), first_slot.end(), k);
  return targets[static_cast<std::size_t>(it - first_slot.begin()) - 1];
}

std::vector<double> QuantileLadder::slot_thresholds() const {
  std::vector<double> out;
  out.reserve(num_slots);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    std::size_t end = i + 1 < targets.size() ? first_slot[i + 1] : num_slots;
    for (std::size_t k = first_slot[i]; k < end; ++k) out.push_back(thresholds[i]);
  }
  return out;
}

QuantileLadder quantile_ladder(const JoinTree& tree, const AdditiveInequality& score, int label,
                               const CountingOptions& options) {
  if (!(options.epsilon > 0)) throw ConfigError("quantile ladder needs epsilon > 0");
  const double eps = options.epsilon;
  const bool sketch = options.mode == CountingMode::sketch;
  // Sketch error and slot spacing share the accuracy budget:
  // (1 + eps/2)(1 + eps/4) <= 1 + eps.
  // Upward pass only: children + 2 layers per node.
  ScoreDP dp(tree, score, label, options, sketch ? eps / 4 : 0.0,
             3 * static_cast<double>(tree.size()) + 2);
  auto up = dp.upward();
  auto dist = dp.root_distribution(up);
  if (options.fault_scale != 1.0) dist.scale_counts(options.fault_scale);
  dp.check_budget();

  QuantileLadder ladder;
  ladder.label = label;
  ladder.mode = options.mode;
  ladder.epsilon = eps;
  ladder.label_rows = dist.total();
  ladder.stats = dp.stats();
  if (sketch)
    ladder.base = eps / 4;
  else
    ladder.base = ladder_base_meets(eps, eps, ladder.label_rows) ? eps : eps / 2;

  auto targets = ladder_targets(ladder.base, ladder.label_rows);
  ladder.num_slots = targets.num_slots;
  ladder.targets = targets.values;
  ladder.first_slot = targets.first_slot;
  // H for target c: the score at which the running count first reaches c.
  const auto& entries = dist.entries();
  double running = 0.0;
  std::size_t pos = 0;
  for (double c : ladder.targets) {
    while (running < c && pos < entries.size()) running += entries[pos++].count;
    ladder.thresholds.push_back(entries[pos - 1].score + score.offset);
  }
  return ladder;
}

double approx_count_at(const QuantileLadder& ladder, double h) {
  auto it = std::partition_point(ladder.thresholds.begin(), ladder.thresholds.end(),
                                 [h](double t) { return t >= h; });
  auto n = static_cast<std::size_t>(it - ladder.thresholds.begin());
  return n == 0 ? 0.0 : ladder.targets[n - 1];
}

double ladder_positive_mass(const QuantileLadder& ladder) {
  const auto& h = ladder.thresholds;
  std::size_t count = 0;
  while (count < h.size() && h[count] >= 0) ++count;
  if (count == 0) return 0.0;
  double mass = 0.0;
  for (std::size_t i = 0; i + 1 < count; ++i) mass += ladder.targets[i] * (h[i] - h[i + 1]);
  return mass + ladder.targets[count - 1] * h[count - 1];
}

}  // namespace relsvm
