#include "relsvm/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "relsvm/errors.hpp"
#include "relsvm/join_tree.hpp"
#include "relsvm/svm.hpp"

namespace relsvm {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

int sign(double v) { return (v > 0) - (v < 0); }

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void check_epsilon(double epsilon) {
  if (!(epsilon > 0) || epsilon > 1) throw ConfigError("perturbation epsilon must lie in (0, 1]");
}

}  // namespace

DesignMatrix perturb(const DesignMatrix& x, double epsilon, const PerturbRule& rule) {
  if (rule.kind == PerturbRule::Kind::adversarial) return z_perturbation(x, rule.beta, epsilon);
  check_epsilon(epsilon);
  DesignMatrix out = x;
  std::mt19937_64 rng(rule.seed);
  std::uniform_real_distribution<double> unif(-epsilon, epsilon);
  std::bernoulli_distribution coin(0.5);
  for (auto& v : out.points) {
    double s = rule.kind == PerturbRule::Kind::uniform ? unif(rng) : (coin(rng) ? epsilon : -epsilon);
    v *= 1.0 + s;
  }
  return out;
}

DesignMatrix z_perturbation(const DesignMatrix& x, std::span<const double> beta, double epsilon,
                            bool literal_rule) {
  check_epsilon(epsilon);
  if (beta.size() != x.dimension) throw ConfigError("beta dimension does not match the data");
  DesignMatrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto p = out.point(i);
    const int y = x.labels[i];
    for (std::size_t k = 0; k < x.dimension; ++k) {
      if (literal_rule)
        p[k] *= y * beta[k] >= 0 ? 1.0 - epsilon : 1.0 + epsilon;
      else
        p[k] += epsilon * sign(y * beta[k] * p[k]) * std::abs(p[k]) * sign(p[k]);
    }
  }
  return out;
}

// --- Probe ------------------------------------------------------------------------

namespace {

struct Solved {
  ExactSolution sol;
  double gap;
};

Solved solve(const DesignMatrix& x, const ProbeConfig& c, std::uint64_t seed) {
  auto sol = solve_exact(x, c.lambda, c.solver_tolerance, c.solver_epochs, seed);
  double gap = std::max(0.0, sol.objective - sol.lower_bound);
  return {std::move(sol), gap};
}

double max_row_norm(const DesignMatrix& x) {
  double m = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) m = std::max(m, norm(x.point(i)));
  return m;
}

/// Furthest point along `dir` from `from` still within `target` at x.
std::vector<double> stretch(const DesignMatrix& x, double lambda, std::span<const double> from,
                            std::span<const double> dir, double target) {
  auto at = [&](double t) {
    std::vector<double> b(from.begin(), from.end());
    for (std::size_t k = 0; k < b.size(); ++k) b[k] += t * dir[k];
    return b;
  };
  double lo = 0, hi = 1;
  while (objective_exact(at(hi), lambda, x) <= target && hi < 1e12) {
    lo = hi;
    hi *= 2;
  }
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    (objective_exact(at(mid), lambda, x) <= target ? lo : hi) = mid;
  }
  return at(lo);
}

}  // namespace

StabilityReport stability_probe(const DesignMatrix& x, const ProbeConfig& c) {
  if (c.budget < 1) throw ConfigError("probe budget must be at least 1");
  check_epsilon(c.alpha);
  if (!(c.delta > 0) || c.delta > 1) throw ConfigError("delta must lie in (0, 1]");
  if (!(c.gamma > 0)) throw ConfigError("gamma must be positive");
  if (!(c.lambda > 0)) throw ConfigError("lambda must be positive");
  if (x.rows() == 0) throw EmptyInstance();

  StabilityReport report;
  report.config = c;
  const auto original = solve(x, c, mix(c.seed));
  report.max_solver_gap = original.gap;

  for (std::size_t s = 0; s < c.budget; ++s) {
    const std::uint64_t seed_s = mix(c.seed + 1 + s);
    const std::uint64_t seed_a = mix(seed_s ^ 0xa), seed_b = mix(seed_s ^ 0xb);
    report.sample_seeds.push_back(seed_s);
    auto rule = [&](std::uint64_t sd) {
      return s % 2 == 0 ? PerturbRule::uniform(sd) : PerturbRule::corners(sd);
    };
    const DesignMatrix xa = perturb(x, c.alpha, rule(seed_a));
    const DesignMatrix xb = perturb(x, c.alpha, rule(seed_b));
    const auto a = solve(xa, c, seed_a);
    const auto b = solve(xb, c, seed_b);
    report.max_solver_gap = std::max({report.max_solver_gap, a.gap, b.gap});
    const double dist_a = std::sqrt(a.gap / c.lambda);

    struct Target {
      const DesignMatrix* x;
      const Solved* solved;
      const char* name;
      ProbeCheck* first;
      ProbeCheck* second;
    };
    const Target targets[] = {
        {&xb, &b, "sampled", &report.first_sampled, &report.second_sampled},
        {&x, &original, "original", &report.first_original, &report.second_original},
    };

    // Candidates for the second condition: beta*_a itself, a move away from
    // the target's optimum, and random directions, each pushed to the edge of
    // the certified (1+2 delta) level set at X_a.
    const double level = (1 + 2 * c.delta) * a.sol.lower_bound;
    std::vector<std::vector<double>> candidates{a.sol.beta};
    std::mt19937_64 rng(seed_s);
    std::normal_distribution<double> gauss;
    for (const auto& t : targets) {
      std::vector<double> away(x.dimension);
      for (std::size_t k = 0; k < x.dimension; ++k) away[k] = a.sol.beta[k] - t.solved->sol.beta[k];
      if (norm(away) > 0) candidates.push_back(stretch(xa, c.lambda, a.sol.beta, away, level));
    }
    for (std::size_t r = 0; r < c.directions; ++r) {
      std::vector<double> dir(x.dimension);
      for (auto& v : dir) v = gauss(rng);
      if (norm(dir) > 0) candidates.push_back(stretch(xa, c.lambda, a.sol.beta, dir, level));
    }

    for (const auto& t : targets) {
      const double upper = t.solved->sol.objective;  // >= min F(., X_b)
      const double lower = std::max(t.solved->sol.lower_bound, 1e-300);
      // First condition: beta*_a is only known to within dist_a.
      const double fa = objective_exact(a.sol.beta, c.lambda, *t.x);
      const double lip = max_row_norm(*t.x) + 2 * c.lambda * (norm(a.sol.beta) + dist_a);
      const double certified = (fa - lip * dist_a) / upper;
      t.first->worst_ratio = std::max(t.first->worst_ratio, fa / lower);
      t.first->worst_certified = std::max(t.first->worst_certified, certified);
      if (certified > 1 + c.delta) {
        ++t.first->violations;
        if (report.violations.size() < kMaxStoredViolations) report.violations.push_back({s, seed_a, seed_b, 1, t.name, certified, a.sol.beta});
      }
      // Second condition.
      for (const auto& cand : candidates) {
        if (objective_exact(cand, c.lambda, xa) > level) continue;
        const double fb = objective_exact(cand, c.lambda, *t.x);
        t.second->worst_ratio = std::max(t.second->worst_ratio, fb / lower);
        t.second->worst_certified = std::max(t.second->worst_certified, fb / upper);
        if (fb / upper > 1 + c.gamma) {
          ++t.second->violations;
          if (report.violations.size() < kMaxStoredViolations) report.violations.push_back({s, seed_a, seed_b, 2, t.name, fb / upper, cand});
        }
      }
    }
    report.samples = s + 1;
  }
  report.counterexample = report.first_sampled.violations + report.first_original.violations +
                               report.second_sampled.violations + report.second_original.violations >
                           0;
  return report;
}

StabilityReport stability_probe(const JoinSpec& spec, const ProbeConfig& config) {
  if (config.budget < 1) throw ConfigError("probe budget must be at least 1");
  auto tree = build_join_tree(spec);
  return stability_probe(materialize_join(tree, config.cap), config);
}

// --- Generators ------------------------------------------------------------------------

JoinSpec gen_knapsack_instance(const std::vector<double>& weights, double L, long long k) {
  if (weights.empty()) throw ConfigError("knapsack needs at least one weight");
  for (double w : weights)
    if (!(w > 0) || !std::isfinite(w)) throw ConfigError("knapsack weights must be positive");
  if (!(L > 0) || !std::isfinite(L)) throw ConfigError("knapsack size L must be positive");
  if (k < 1) throw ConfigError("knapsack k must be at least 1");
  std::vector<Table> tables;
  Table v("V", {"Key", "Value", "y"});
  v.add_row(std::vector<double>{1, 1, 1});
  v.add_row(std::vector<double>{0, -static_cast<double>(k), 1});
  v.set_label_column("y");
  tables.push_back(std::move(v));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    auto idx = std::to_string(i + 1);
    Table t("T" + idx, {"Key", "E" + idx});
    t.add_row(std::vector<double>{1, 0});
    t.add_row(std::vector<double>{1, weights[i] / L});
    t.add_row(std::vector<double>{0, 0});
    tables.push_back(std::move(t));
  }
  return JoinSpec(std::move(tables), "y");
}

unsigned long long count_knapsack_subsets(const std::vector<double>& weights, double L) {
  if (weights.size() > 62) throw ConfigError("too many weights to enumerate");
  unsigned long long count = 0;
  const std::uint64_t subsets = std::uint64_t{1} << weights.size();
  for (std::uint64_t s = 0; s < subsets; ++s) {
    double total = 0;
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (s >> i & 1) total += weights[i] / L;
    // Same test the gadget row applies: 1 - sum w_i/L >= 0.
    if (1.0 - total >= 0) ++count;
  }
  return count;
}

double knapsack_g2(const JoinSpec& gadget) {
  auto tree = build_join_tree(gadget);
  auto x = materialize_join(tree);
  const auto key = gadget.feature_index(*gadget.attribute_id("Key"));
  const auto value = gadget.feature_index(*gadget.attribute_id("Value"));
  if (!key || !value) throw DataError("not a knapsack gadget: Key/Value columns missing");
  std::vector<double> beta(x.dimension, 1.0);
  beta[*key] = beta[*value] = 0.0;
  auto g = gradient_exact(beta, 0.0, x);
  return -static_cast<double>(x.rows()) * g[*value];
}

StableInstance gen_stable_instance(const StableInstanceConfig& c) {
  if (c.d < 2) throw ConfigError("stable instance needs d >= 2 (key plus one feature)");
  if (c.m < 1) throw ConfigError("stable instance needs at least one table");
  if (c.n < 1) throw ConfigError("stable instance needs at least one row per table");
  if (!(c.margin > 0) || c.margin >= 1) throw ConfigError("margin must lie in (0, 1)");
  if (c.noise < 0 || c.noise > 1) throw ConfigError("noise must lie in [0, 1]");
  const std::size_t keys = c.keys == 0 ? c.n : c.keys;
  if (keys > c.n) throw ConfigError("more keys than rows");
  if (!(c.lambda > 0) || !(c.delta > 0) || c.delta > 1 || !(c.gamma > 0))
    throw ConfigError("stable instance needs lambda > 0, 0 < delta <= 1 and gamma > 0");

  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> gauss;

  // Feature columns round-robin over the tables, starting with R0.
  std::vector<std::vector<std::string>> cols(c.m);
  for (std::size_t f = 0; f + 1 < c.d; ++f) cols[f % c.m].push_back("f" + std::to_string(f + 1));
  const std::size_t d0 = cols[0].size();

  std::vector<double> w(d0);
  for (auto& v : w) v = gauss(rng);
  double wn = norm(w);
  if (wn == 0) w[0] = wn = 1;
  for (auto& v : w) v /= wn;

  auto key_of = [&](std::size_t r) { return static_cast<double>(r % keys + 1) / static_cast<double>(keys); };

  StableInstanceMeta meta;
  std::vector<Table> tables;
  {
    std::vector<std::string> names{"k"};
    names.insert(names.end(), cols[0].begin(), cols[0].end());
    names.push_back("y");
    Table t("R0", names);
    std::bernoulli_distribution flip(c.noise);
    std::vector<double> row(names.size());
    meta.margin = 1.0;
    for (std::size_t r = 0; r < c.n; ++r) {
      double score;
      std::vector<double> x(d0);
      do {
        for (auto& v : x) v = unif(rng);
        score = dot(w, x);
      } while (std::abs(score) < c.margin);
      meta.margin = std::min(meta.margin, std::abs(score));
      int y = score > 0 ? 1 : -1;
      if (flip(rng)) {
        y = -y;
        ++meta.flipped;
      }
      row[0] = key_of(r);
      std::copy(x.begin(), x.end(), row.begin() + 1);
      row.back() = y;
      t.add_row(row);
    }
    t.set_label_column("y");
    tables.push_back(std::move(t));
  }
  for (std::size_t i = 1; i < c.m; ++i) {
    std::vector<std::string> names{"k"};
    names.insert(names.end(), cols[i].begin(), cols[i].end());
    Table t("R" + std::to_string(i), names);
    std::vector<double> row(names.size());
    for (std::size_t r = 0; r < c.n; ++r) {
      row[0] = key_of(r);
      for (std::size_t j = 1; j < row.size(); ++j) row[j] = unif(rng);
      t.add_row(row);
    }
    tables.push_back(std::move(t));
  }

  JoinSpec raw(std::move(tables), "y");
  auto scaled = rescale_features(raw);
  // beta0 in the rescaled coordinates keeps sign(beta0.x); renormalise and
  // report the margin it actually achieves.
  const auto& spec = scaled.spec;
  meta.beta0.assign(spec.dimension(), 0.0);
  for (std::size_t j = 0; j < d0; ++j) {
    auto f = *spec.feature_index(*spec.attribute_id(cols[0][j]));
    meta.beta0[f] = w[j] * scaled.factors[f];
  }
  double bn = norm(meta.beta0);
  for (auto& v : meta.beta0) v /= bn;
  meta.margin /= bn;
  meta.alpha = meta.margin / 4;
  meta.delta = c.delta;
  meta.gamma = c.gamma;
  meta.lambda = c.lambda;
  meta.epsilon = std::min(c.delta / 8, meta.alpha);
  meta.rows = static_cast<unsigned long long>(count_join_rows(build_join_tree(spec)));
  return {spec, meta};
}

}  // namespace relsvm
