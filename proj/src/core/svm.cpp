#include "relsvm/svm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <random>

#include "relsvm/errors.hpp"

namespace relsvm {

const char* step_schedule_name(StepSchedule s) noexcept {
  return s == StepSchedule::standard ? "standard" : "baseline";
}

StepSchedule parse_step_schedule(std::string_view name) {
  if (name == "standard") return StepSchedule::standard;
  if (name == "baseline") return StepSchedule::baseline;
  throw ConfigError("unknown step schedule '" + std::string(name) + "' (standard|baseline)");
}

const char* reg_gradient_name(RegGradient r) noexcept {
  return r == RegGradient::two_lambda ? "2lambda" : "lambda";
}

RegGradient parse_reg_gradient(std::string_view name) {
  if (name == "2lambda") return RegGradient::two_lambda;
  if (name == "lambda") return RegGradient::lambda;
  throw ConfigError("unknown regularizer gradient '" + std::string(name) + "' (2lambda|lambda)");
}

void DescentConfig::validate() const {
  if (!(lambda > 0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
  if (!(epsilon > 0) || epsilon > 1) throw ConfigError("epsilon must lie in (0, 1]");
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (exact_cap < 1) throw ConfigError("exact cap must be positive");
}

CountingOptions DescentConfig::counting() const {
  CountingOptions o;
  o.mode = mode;
  o.epsilon = epsilon;
  o.exact_cap = exact_cap;
  o.fault_scale = fault_scale;
  return o;
}

double feasible_radius(std::size_t d, double lambda) {
  return std::sqrt(static_cast<double>(d)) / (2 * lambda);
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void check_dims(std::span<const double> beta, const DesignMatrix& x) {
  if (beta.size() != x.dimension)
    throw ConfigError("beta has dimension " + std::to_string(beta.size()) + ", data has " +
                      std::to_string(x.dimension));
  if (x.rows() == 0) throw EmptyInstance();
}

template <class F>
auto maybe_parallel(unsigned threads, F&& a, F&& b) {
  if (threads > 1) {
    auto fa = std::async(std::launch::async, a);
    auto rb = b();
    return std::make_pair(fa.get(), std::move(rb));
  }
  auto ra = a();
  return std::make_pair(std::move(ra), b());
}

}  // namespace

double objective_exact(std::span<const double> beta, double lambda, const DesignMatrix& x) {
  check_dims(beta, x);
  double loss = 0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    loss += std::max(0.0, 1.0 - x.labels[i] * dot(beta, x.point(i)));
  return loss / static_cast<double>(x.rows()) + lambda * dot(beta, beta);
}

std::vector<double> gradient_exact(std::span<const double> beta, double lambda,
                                   const DesignMatrix& x) {
  check_dims(beta, x);
  std::vector<double> g(beta.size(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto p = x.point(i);
    if (1.0 - x.labels[i] * dot(beta, p) >= 0)
      for (std::size_t k = 0; k < g.size(); ++k) g[k] -= x.labels[i] * p[k];
  }
  const double n = static_cast<double>(x.rows());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = g[k] / n + 2 * lambda * beta[k];
  return g;
}

std::pair<AdditiveInequality, AdditiveInequality> far_point_inequalities(
    const JoinSpec& spec, std::span<const double> beta, double epsilon) {
  if (beta.size() != spec.dimension())
    throw ConfigError("beta has dimension " + std::to_string(beta.size()) + ", the join has " +
                      std::to_string(spec.dimension()) + " features");
  auto pos = AdditiveInequality::zeros(spec);
  auto neg = AdditiveInequality::zeros(spec);
  for (std::size_t k = 0; k < beta.size(); ++k) {
    auto a = spec.feature_attributes()[k];
    double b = beta[k], m = epsilon * std::abs(b);
    pos.positive[a] = -b - m;
    pos.negative[a] = -b + m;
    neg.positive[a] = b - m;
    neg.negative[a] = b + m;
  }
  pos.offset = neg.offset = 1.0;
  return {pos, neg};
}

PseudoGradient pseudo_gradient(const JoinTree& tree, std::span<const double> beta,
                               const DescentConfig& cfg) {
  const double n = static_cast<double>(count_join_rows(tree));
  if (n == 0) throw EmptyInstance();
  auto [ineq_pos, ineq_neg] = far_point_inequalities(tree.spec(), beta, cfg.epsilon);
  auto options = cfg.counting();
  std::function<CountResult()> count_pos = [&] { return row_counts(tree, ineq_pos, 1, options); };
  std::function<CountResult()> count_neg = [&] { return row_counts(tree, ineq_neg, -1, options); };
  auto [cp, cn] = maybe_parallel(cfg.threads, count_pos, count_neg);

  PseudoGradient out;
  auto& parts = out.parts;
  const std::size_t d = beta.size();
  parts.minus.assign(d, 0.0);
  parts.plus.assign(d, 0.0);
  parts.rows = n;
  parts.stats.peak_entries = std::max(cp.stats.peak_entries, cn.stats.peak_entries);
  parts.stats.distortion = std::max(cp.stats.distortion, cn.stats.distortion);
  for (std::size_t k = 0; k < d; ++k) {
    const auto& pc = cp.columns[k];
    const auto& nc = cn.columns[k];
    for (std::size_t i = 0; i < nc.values.size(); ++i) {
      double v = nc.values[i];
      (v < 0 ? parts.minus[k] : parts.plus[k]) += v * nc.counts[i];
    }
    for (std::size_t i = 0; i < pc.values.size(); ++i) {
      double v = pc.values[i];
      (v >= 0 ? parts.minus[k] : parts.plus[k]) -= v * pc.counts[i];
    }
  }
  out.gradient.resize(d);
  const double c = cfg.reg_coefficient();
  for (std::size_t k = 0; k < d; ++k)
    out.gradient[k] = (parts.minus[k] + parts.plus[k]) / n + c * beta[k];
  return out;
}

std::vector<double> project(std::span<const double> beta, double lambda) {
  if (!(lambda > 0)) throw ConfigError("lambda must be positive");
  std::vector<double> out(beta.begin(), beta.end());
  const double radius = feasible_radius(beta.size(), lambda);
  const double norm = std::sqrt(dot(beta, beta));
  if (norm > radius) {
    for (auto& b : out) b *= radius / norm;
    // Rounding can leave the result a few ulps outside; pull it in so that
    // projecting again is a no-op.
    while (dot(out, out) > radius * radius)
      for (auto& b : out) b *= 1 - std::numeric_limits<double>::epsilon();
  }
  return out;
}

double step_size(std::size_t t, std::size_t d, double lambda, StepSchedule schedule) {
  if (t == 0) throw ConfigError("step sizes start at t = 1");
  double eta = 1.0 / (lambda * std::sqrt(static_cast<double>(d) * static_cast<double>(t)));
  return schedule == StepSchedule::baseline ? eta / 8 : eta;
}

std::vector<double> descent_step(std::span<const double> beta, std::span<const double> g,
                                 std::size_t t, const DescentConfig& cfg) {
  const double eta = step_size(t + 1, beta.size(), cfg.lambda, cfg.schedule);
  std::vector<double> next(beta.size());
  for (std::size_t k = 0; k < beta.size(); ++k) next[k] = beta[k] - eta * g[k];
  return project(next, cfg.lambda);
}

namespace {

FhatResult fhat_with_rows(const JoinTree& tree, std::span<const double> beta, double lambda,
                          const CountingOptions& options, unsigned threads, double n) {
  auto [score_pos, score_neg] = far_point_inequalities(tree.spec(), beta, options.epsilon);
  std::function<QuantileLadder()> lp = [&] { return quantile_ladder(tree, score_pos, 1, options); };
  std::function<QuantileLadder()> ln = [&] { return quantile_ladder(tree, score_neg, -1, options); };
  auto [pos, neg] = maybe_parallel(threads, lp, ln);
  FhatResult r;
  r.rows = n;
  r.positive_mass = ladder_positive_mass(pos);
  r.negative_mass = ladder_positive_mass(neg);
  r.loss = (r.positive_mass + r.negative_mass) / n;
  r.value = r.loss + lambda * dot(beta, beta);
  r.stats.peak_entries = std::max(pos.stats.peak_entries, neg.stats.peak_entries);
  r.stats.distortion = std::max(pos.stats.distortion, neg.stats.distortion);
  return r;
}

}  // namespace

FhatResult fhat(const JoinTree& tree, std::span<const double> beta, double lambda,
                const CountingOptions& options, unsigned threads) {
  const double n = static_cast<double>(count_join_rows(tree));
  if (n == 0) throw EmptyInstance();
  return fhat_with_rows(tree, beta, lambda, options, threads, n);
}

DescentTrace train(const JoinTree& tree, const DescentConfig& cfg) {
  cfg.validate();
  auto start = std::chrono::steady_clock::now();
  const double n = static_cast<double>(count_join_rows(tree));
  if (n == 0) throw EmptyInstance();
  const std::size_t d = tree.spec().dimension();
  auto options = cfg.counting();

  DescentTrace trace;
  trace.rows = n;
  std::vector<double> beta(d, 0.0);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    StepRecord rec;
    rec.t = t;
    rec.beta = beta;
    auto f = fhat_with_rows(tree, beta, cfg.lambda, options, cfg.threads, n);
    rec.fhat = f.value;
    trace.peak_sketch_entries = std::max(trace.peak_sketch_entries, f.stats.peak_entries);
    trace.max_distortion = std::max(trace.max_distortion, f.stats.distortion);
    if (t + 1 < cfg.steps) {
      auto pg = pseudo_gradient(tree, beta, cfg);
      trace.peak_sketch_entries = std::max(trace.peak_sketch_entries, pg.parts.stats.peak_entries);
      trace.max_distortion = std::max(trace.max_distortion, pg.parts.stats.distortion);
      rec.eta = step_size(t + 1, d, cfg.lambda, cfg.schedule);
      beta = descent_step(beta, pg.gradient, t, cfg);
      rec.gradient = std::move(pg.gradient);
    }
    if (t == 0 || rec.fhat < trace.steps[trace.selected].fhat) trace.selected = t;
    trace.steps.push_back(std::move(rec));
  }
  trace.beta = trace.steps[trace.selected].beta;
  trace.fhat = trace.steps[trace.selected].fhat;
  trace.scale_factors.assign(d, 1.0);
  trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

DescentTrace train(const JoinSpec& spec, const DescentConfig& cfg) {
  cfg.validate();
  auto start = std::chrono::steady_clock::now();
  std::vector<double> factors(spec.dimension(), 1.0);
  std::shared_ptr<const JoinSpec> prepared;
  if (cfg.rescale) {
    auto r = rescale_features(spec);
    factors = std::move(r.factors);
    prepared = std::make_shared<const JoinSpec>(std::move(r.spec));
  } else {
    prepared = std::make_shared<const JoinSpec>(spec);
  }
  auto tree = build_join_tree(prepared);
  auto trace = train(tree, cfg);
  trace.scale_factors = std::move(factors);
  trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

BaselineResult baseline_train(const DesignMatrix& x, double lambda, std::size_t steps,
                              const BaselineOptions& options) {
  if (!(lambda > 0)) throw ConfigError("lambda must be positive");
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (options.stop_epsilon && !(*options.stop_epsilon > 0))
    throw ConfigError("stop epsilon must be positive");
  if (x.rows() == 0) throw EmptyInstance();
  const std::size_t d = x.dimension;
  std::vector<double> beta(d, 0.0), sum(d, 0.0), avg(d, 0.0);
  BaselineResult out;
  for (std::size_t t = 0; t < steps; ++t) {
    if (options.record_norms) out.norms.push_back(std::sqrt(dot(beta, beta)));
    for (std::size_t k = 0; k < d; ++k) sum[k] += beta[k];
    out.iterations = t + 1;
    if (options.stop_epsilon) {
      for (std::size_t k = 0; k < d; ++k) avg[k] = sum[k] / static_cast<double>(t + 1);
      double f = objective_exact(avg, lambda, x);
      double need = 4 * std::pow(static_cast<double>(d), 1.5) / (*options.stop_epsilon * lambda * f);
      if (static_cast<double>(t + 1) >= need * need) {
        out.stopped_early = t + 1 < steps;
        break;
      }
    }
    if (t + 1 == steps) break;
    auto g = gradient_exact(beta, lambda, x);
    const double eta = step_size(t + 1, d, lambda, StepSchedule::baseline);
    for (std::size_t k = 0; k < d; ++k) beta[k] -= eta * g[k];
    beta = project(beta, lambda);
  }
  out.beta.resize(d);
  for (std::size_t k = 0; k < d; ++k) out.beta[k] = sum[k] / static_cast<double>(out.iterations);
  out.objective = objective_exact(out.beta, lambda, x);
  return out;
}

ExactSolution solve_exact(const DesignMatrix& x, double lambda, double tolerance,
                          std::size_t max_epochs, std::uint64_t seed) {
  if (!(lambda > 0)) throw ConfigError("lambda must be positive");
  if (x.rows() == 0) throw EmptyInstance();
  const std::size_t n = x.rows(), d = x.dimension;
  // F = 2 lambda * (||w||^2/2 + C sum hinge) with C = 1/(2 lambda N).
  const double c = 1.0 / (2 * lambda * static_cast<double>(n));
  std::vector<double> alpha(n, 0.0), w(d, 0.0), q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = dot(x.point(i), x.point(i));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);

  ExactSolution out;
  for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) {
      auto p = x.point(i);
      const double y = x.labels[i];
      const double grad = y * dot(w, p) - 1.0;
      double next = q[i] > 0 ? std::clamp(alpha[i] - grad / q[i], 0.0, c) : (grad < 0 ? c : alpha[i]);
      if (next != alpha[i]) {
        for (std::size_t k = 0; k < d; ++k) w[k] += (next - alpha[i]) * y * p[k];
        alpha[i] = next;
      }
    }
    // Rebuild w from alpha to keep the certificate free of drift.
    std::fill(w.begin(), w.end(), 0.0);
    double alpha_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      alpha_sum += alpha[i];
      auto p = x.point(i);
      for (std::size_t k = 0; k < d; ++k) w[k] += alpha[i] * x.labels[i] * p[k];
    }
    const double primal = objective_exact(w, lambda, x);
    const double dual = 2 * lambda * (alpha_sum - 0.5 * dot(w, w));
    out.epochs = epoch;
    out.beta = w;
    out.objective = primal;
    out.lower_bound = dual;
    if (primal - dual <= tolerance) break;
  }
  return out;
}

}  // namespace relsvm
