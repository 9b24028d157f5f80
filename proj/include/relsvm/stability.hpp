#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "relsvm/join.hpp"
#include "relsvm/relational.hpp"

namespace relsvm {

/// Componentwise multiplicative perturbation x'_ik = (1 + s_ik) x_ik, |s_ik| <= eps.
struct PerturbRule {
  enum class Kind { uniform, corners, adversarial };
  Kind kind = Kind::uniform;
  std::uint64_t seed = 0;
  /// Hypothesis for the adversarial rule.
  std::vector<double> beta;

  /// s_ik uniform in [-eps, eps].
  static PerturbRule uniform(std::uint64_t seed) { return {Kind::uniform, seed, {}}; }
  /// s_ik uniform in {-eps, +eps}.
  static PerturbRule corners(std::uint64_t seed) { return {Kind::corners, seed, {}}; }
  /// The objective-minimizing perturbation at beta (z_perturbation).
  static PerturbRule adversarial(std::vector<double> beta) {
    return {Kind::adversarial, 0, std::move(beta)};
  }
};

DesignMatrix perturb(const DesignMatrix& x, double epsilon, const PerturbRule& rule);

/// z_ik = (1 + eps sign(y_i beta_k x_ik)) x_ik, so that
/// 1 - y beta.z = 1 - y beta.x - eps |beta|.|x| for every row.
/// With `literal_rule`, z_ik = (1 - eps) x_ik when y_i beta_k >= 0 and
/// (1 + eps) x_ik otherwise.
DesignMatrix z_perturbation(const DesignMatrix& x, std::span<const double> beta, double epsilon,
                            bool literal_rule = false);

struct ProbeConfig {
  double alpha = 0.01;
  double delta = 0.1;
  double gamma = 0.1;
  double lambda = 0.01;
  /// Number of sampled (X_a, X_b) pairs.
  std::size_t budget = 20;
  /// Extra (1+2 delta)-approximate hypotheses per sample for the second test.
  std::size_t directions = 8;
  std::uint64_t seed = 0;
  /// Duality-gap target of the inner solver (absolute, objective units).
  double solver_tolerance = 1e-10;
  std::size_t solver_epochs = 20000;
  unsigned long long cap = kDefaultOutputCap;

  bool operator==(const ProbeConfig&) const = default;
};

struct ProbeViolation {
  std::size_t sample = 0;
  std::uint64_t seed_a = 0;
  std::uint64_t seed_b = 0;
  /// 1: F(beta*_a, X_b) > (1+delta) min F(., X_b).
  /// 2: a (1+2 delta)-approximate beta_a at X_a is not (1+gamma)-approximate at X_b.
  int condition = 1;
  /// "sampled" (X_b drawn independently) or "original" (X_b = X).
  std::string target;
  /// Certified lower bound of F(beta, X_b) / min F(., X_b).
  double ratio = 0;
  std::vector<double> beta;
};

struct ProbeCheck {
  /// Largest observed F(beta, X_b) / min F(., X_b).
  double worst_ratio = 1.0;
  /// Largest certified lower bound of that ratio.
  double worst_certified = 0.0;
  std::size_t violations = 0;
};

inline constexpr std::size_t kMaxStoredViolations = 32;

struct StabilityReport {
  ProbeConfig config;
  std::size_t samples = 0;
  std::vector<std::uint64_t> sample_seeds;
  /// condition 1 / condition 2, against sampled X_b and against X_b = X.
  ProbeCheck first_sampled, first_original, second_sampled, second_original;
  bool counterexample = false;
  /// The first kMaxStoredViolations violations; the checks hold the totals.
  std::vector<ProbeViolation> violations;
  /// Largest duality gap left by the inner solver.
  double max_solver_gap = 0;
  const char* verdict() const noexcept {
    return counterexample ? "counterexample-found" : "evidence-of-stability";
  }
};

/// Samples alpha-perturbation pairs of the materialized instance and checks
/// both stability conditions. Violations are reported only when certified by
/// the solver's duality gaps.
StabilityReport stability_probe(const JoinSpec& spec, const ProbeConfig& config);
StabilityReport stability_probe(const DesignMatrix& x, const ProbeConfig& config);

/// Tables V(Key, Value, y) = {(1,1,+1), (0,-k,+1)} and
/// T_i(Key, E_i) = {(1,0), (1,w_i/L), (0,0)}.
JoinSpec gen_knapsack_instance(const std::vector<double>& weights, double L, long long k);

/// Number of subsets S with sum_{i in S} w_i <= L.
unsigned long long count_knapsack_subsets(const std::vector<double>& weights, double L);

/// -N dF/dbeta_Value at beta = (0,0,1,..,1), lambda = 0, on the materialized gadget.
double knapsack_g2(const JoinSpec& gadget);

struct StableInstanceConfig {
  /// Features, the join key included.
  std::size_t d = 4;
  /// Tables in the star join.
  std::size_t m = 3;
  /// Rows per table.
  std::size_t n = 60;
  /// Distinct key values (defaults to n: a one-to-one join).
  std::size_t keys = 0;
  double margin = 0.2;
  /// Probability of flipping each label.
  double noise = 0.0;
  std::uint64_t seed = 0;
  /// Parameters recorded in the metadata; alpha is margin/4 and epsilon is
  /// min(delta/8, alpha).
  double lambda = 0.01;
  double delta = 0.05;
  double gamma = 0.2;
};

struct StableInstanceMeta {
  /// Unit ground-truth hypothesis (zero outside the labelled table's features).
  std::vector<double> beta0;
  /// Realised min |beta0.x| over the labelled table, before label noise.
  double margin = 0;
  std::size_t flipped = 0;
  double alpha = 0;
  double delta = 0;
  double gamma = 0;
  double lambda = 0;
  double epsilon = 0;
  unsigned long long rows = 0;
};

struct StableInstance {
  JoinSpec spec;
  StableInstanceMeta meta;
};

/// Star join on key `k`: table R0(k, features.., y) carries labels
/// sign(beta0.x) computed from its own features; R1..R_{m-1}(k, features..)
/// multiply rows. Features are rescaled to max |value| = 1.
StableInstance gen_stable_instance(const StableInstanceConfig& config);

}  // namespace relsvm
