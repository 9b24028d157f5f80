#include "relsvm/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "relsvm/errors.hpp"
#include "relsvm/stability.hpp"

namespace relsvm {

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const PropertyCheck& c) { return c.passed; });
}

namespace {

PropertyCheck check_join(const JoinTree& tree, const std::vector<std::vector<double>>& tuples) {
  PropertyCheck c{"join-count", true, 0, {}};
  const JoinSpec& spec = tree.spec();
  BigCount counted = count_join_rows(tree);
  BigCount listed = tuples.size();
  if (counted != listed) {
    c.passed = false;
    c.worst = std::abs((counted - listed).convert_to<double>());
    c.detail = "count_join_rows " + counted.str() + " vs " + listed.str() + " materialized rows";
    return c;
  }
  std::size_t dangling = 0;
  for (std::size_t t = 0; t < spec.num_tables(); ++t) {
    const Table& table = spec.tables()[t];
    const auto& attrs = spec.table_attributes(t);
    std::set<std::vector<double>> rows;
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
      auto row = table.row(r);
      rows.emplace(row.begin(), row.end());
    }
    std::vector<double> key(attrs.size());
    for (const auto& tuple : tuples) {
      for (std::size_t i = 0; i < attrs.size(); ++i) key[i] = tuple[attrs[i]];
      dangling += rows.count(key) == 0;
    }
  }
  c.worst = static_cast<double>(dangling);
  c.passed = dangling == 0;
  c.detail = counted.str() + " rows";
  if (dangling) c.detail += ", " + std::to_string(dangling) + " projections missing from their table";
  return c;
}

}  // namespace

VerifyReport verify_instance(const JoinSpec& input, const VerifyOptions& o) {
  JoinSpec spec = o.rescale ? rescale_features(input).spec : input;
  JoinTree tree = build_join_tree(std::move(spec));
  const JoinSpec& s = tree.spec();
  const std::size_t d = s.dimension();

  auto tuples = materialize_join_tuples(tree, o.cap);
  VerifyReport report;
  report.rows = tuples.size();
  report.checks.push_back(check_join(tree, tuples));

  DesignMatrix x;
  x.dimension = d;
  std::vector<double> point(d);
  for (const auto& t : tuples) {
    for (std::size_t k = 0; k < d; ++k) point[k] = t[s.feature_attributes()[k]];
    x.add(point, t[s.label_attribute()] > 0 ? 1 : -1);
  }
  if (x.rows() == 0) throw EmptyInstance();

  std::vector<std::vector<double>> betas{std::vector<double>(d, 0.0)};
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (std::size_t h = 0; h < o.hypotheses; ++h) {
    std::vector<double> b(d);
    for (auto& v : b) v = u(rng);
    betas.push_back(project(b, o.lambda));
  }

  DescentConfig cfg;
  cfg.lambda = o.lambda;
  cfg.epsilon = o.epsilon;
  cfg.mode = CountingMode::exact;
  cfg.exact_cap = o.exact_cap;
  cfg.threads = o.threads;
  cfg.fault_scale = o.fault_scale;
  cfg.validate();

  PropertyCheck grad{"pseudo-gradient", true, 0, {}};
  PropertyCheck sandwich{"fhat-sandwich", true, 0, {}};
  const double n = static_cast<double>(x.rows());
  for (const auto& beta : betas) {
    std::vector<double> expected(d);
    for (std::size_t k = 0; k < d; ++k) expected[k] = 2 * o.lambda * beta[k];
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto p = x.point(i);
      double margin = 1.0, spread = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        margin -= x.labels[i] * beta[k] * p[k];
        spread += std::abs(beta[k]) * std::abs(p[k]);
      }
      if (margin - o.epsilon * spread < 0) continue;
      for (std::size_t k = 0; k < d; ++k) expected[k] -= x.labels[i] * p[k] / n;
    }
    auto got = pseudo_gradient(tree, beta, cfg).gradient;
    for (std::size_t k = 0; k < d; ++k) {
      double dev = std::abs(got[k] - expected[k]);
      grad.worst = std::max(grad.worst, dev);
      if (dev > 1e-9 * std::max(1.0, std::abs(expected[k]))) grad.passed = false;
    }

    double f_z = objective_exact(beta, o.lambda, z_perturbation(x, beta, o.epsilon));
    double f_hat = fhat(tree, beta, o.lambda, cfg.counting(), o.threads).value;
    // Relative breach of either side; <= 0 when the sandwich holds.
    double breach = std::max(f_hat - f_z, f_z / (1 + o.epsilon) - f_hat) / std::max(1.0, f_z);
    sandwich.worst = std::max(sandwich.worst, breach);
    if (breach > 1e-9) sandwich.passed = false;
  }
  std::ostringstream gd, sd;
  gd << betas.size() << " hypotheses, max |deviation| " << grad.worst;
  sd << betas.size() << " hypotheses, worst relative breach " << sandwich.worst;
  grad.detail = gd.str();
  sandwich.detail = sd.str();
  report.checks.push_back(grad);
  report.checks.push_back(sandwich);
  return report;
}

}  // namespace relsvm
