#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "relsvm/counting.hpp"
#include "relsvm/join.hpp"

namespace relsvm {

/// Step size schedules: eta_t = 1/(lambda sqrt(d t)) and the 8x smaller
/// 1/(8 lambda sqrt(d t)).
enum class StepSchedule { standard, baseline };
/// Coefficient of beta in the pseudo-gradient: 2*lambda (the gradient of the
/// regularizer) or lambda.
enum class RegGradient { two_lambda, lambda };

const char* step_schedule_name(StepSchedule s) noexcept;
StepSchedule parse_step_schedule(std::string_view name);
const char* reg_gradient_name(RegGradient r) noexcept;
RegGradient parse_reg_gradient(std::string_view name);

struct DescentConfig {
  double lambda = 0.1;
  double epsilon = 0.1;
  /// Number of iterates beta_0 .. beta_{T-1}.
  std::size_t steps = 100;
  StepSchedule schedule = StepSchedule::standard;
  RegGradient reg_gradient = RegGradient::two_lambda;
  CountingMode mode = CountingMode::exact;
  std::size_t exact_cap = 100'000;
  /// Divide every feature by its max |value| before training.
  bool rescale = true;
  /// Run the two label-counting calls concurrently when > 1.
  unsigned threads = 1;
  std::uint64_t seed = 0;
  /// Fault-injection hook forwarded to the counting calls.
  double fault_scale = 1.0;

  /// Throws ConfigError unless lambda > 0, 0 < epsilon <= 1 and steps >= 1.
  void validate() const;
  CountingOptions counting() const;
  double reg_coefficient() const { return reg_gradient == RegGradient::two_lambda ? 2 * lambda : lambda; }

  bool operator==(const DescentConfig&) const = default;
};

/// Radius of the feasible ball, sqrt(d) / (2 lambda).
double feasible_radius(std::size_t d, double lambda);

/// (1/N) sum max(0, 1 - y beta.x) + lambda ||beta||^2.
double objective_exact(std::span<const double> beta, double lambda, const DesignMatrix& x);

/// 2 lambda beta - (1/N) sum_{1 - y beta.x >= 0} y x.
std::vector<double> gradient_exact(std::span<const double> beta, double lambda,
                                   const DesignMatrix& x);

/// Far-point tests 1 - y beta.x - eps |beta|.|x| >= 0 for labels +1 and -1,
/// over the spec's global attributes (beta is in feature order).
std::pair<AdditiveInequality, AdditiveInequality> far_point_inequalities(
    const JoinSpec& spec, std::span<const double> beta, double epsilon);

struct GradientParts {
  std::vector<double> minus;  // G^-_k
  std::vector<double> plus;   // G^+_k
  double rows = 0;            // N
  CountingStats stats;
};

struct PseudoGradient {
  std::vector<double> gradient;
  GradientParts parts;
};

/// (G^- + G^+)/N + c beta from far-point row counts of both labels.
PseudoGradient pseudo_gradient(const JoinTree& tree, std::span<const double> beta,
                               const DescentConfig& cfg);

/// Projection onto the ball of radius sqrt(d)/(2 lambda).
std::vector<double> project(std::span<const double> beta, double lambda);

/// eta_t for t >= 1.
double step_size(std::size_t t, std::size_t d, double lambda, StepSchedule schedule);

/// project(beta - eta_{t+1} g).
std::vector<double> descent_step(std::span<const double> beta, std::span<const double> g,
                                 std::size_t t, const DescentConfig& cfg);

struct FhatResult {
  double value = 0;
  double loss = 0;          // value minus the regularizer
  double positive_mass = 0; // sum over tau >= 0 of N-hat, label +1
  double negative_mass = 0; // same for label -1
  double rows = 0;
  CountingStats stats;
};

/// Estimate of F(beta, Z) from the two quantile ladders of the far-point
/// score 1 - y beta.x - eps |beta|.|x|.
FhatResult fhat(const JoinTree& tree, std::span<const double> beta, double lambda,
                const CountingOptions& options, unsigned threads = 1);

struct StepRecord {
  std::size_t t = 0;
  std::vector<double> beta;
  /// Pseudo-gradient at beta and the step size used to leave it (empty/0 on
  /// the final iterate).
  std::vector<double> gradient;
  double eta = 0;
  double fhat = 0;
};

struct DescentTrace {
  std::vector<StepRecord> steps;
  std::size_t selected = 0;
  std::vector<double> beta;
  double fhat = 0;
  double rows = 0;
  std::vector<double> scale_factors;
  std::size_t peak_sketch_entries = 0;
  double max_distortion = 1.0;
  double seconds = 0;
};

/// Pseudo-gradient descent from the origin; returns the iterate with the
/// smallest F-hat.
DescentTrace train(const JoinSpec& spec, const DescentConfig& cfg);
/// Same on a prepared (already rescaled) tree.
DescentTrace train(const JoinTree& tree, const DescentConfig& cfg);

struct BaselineOptions {
  /// Stop once T >= (4 d^{3/2} / (eps lambda F(avg)))^2; unset = run all steps.
  std::optional<double> stop_epsilon;
  /// Record ||beta_t|| for each iterate.
  bool record_norms = false;
};

struct BaselineResult {
  std::vector<double> beta;  // running average of beta_0 .. beta_{T-1}
  double objective = 0;
  std::size_t iterations = 0;
  bool stopped_early = false;
  std::vector<double> norms;
};

/// Projected gradient descent with gradient_exact and eta_t = 1/(8 lambda sqrt(d t)).
BaselineResult baseline_train(const DesignMatrix& x, double lambda, std::size_t steps,
                              const BaselineOptions& options = {});

struct ExactSolution {
  std::vector<double> beta;
  double objective = 0;
  /// Certified lower bound on min_beta F (from the dual).
  double lower_bound = 0;
  std::size_t epochs = 0;
};

/// Minimizes F by dual coordinate descent until the duality gap is below
/// `tolerance` (absolute, in F units) or `max_epochs` passes.
ExactSolution solve_exact(const DesignMatrix& x, double lambda, double tolerance = 1e-10,
                          std::size_t max_epochs = 20000, std::uint64_t seed = 0);

}  // namespace relsvm
