#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "relsvm/errors.hpp"
#include "relsvm/stability.hpp"
#include "relsvm/svm.hpp"

using namespace relsvm;

namespace {

DesignMatrix random_points(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  DesignMatrix m;
  m.dimension = d;
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p(d);
    for (auto& v : p) v = u(rng);
    m.add(p, u(rng) > 0 ? 1 : -1);
  }
  return m;
}

std::vector<double> random_beta(std::mt19937_64& rng, std::size_t d) {
  std::vector<double> b(d);
  for (auto& v : b) v = std::uniform_real_distribution<double>(-3, 3)(rng);
  return b;
}

JoinSpec single_point(double x) {
  Table t("R", {"x", "y"});
  t.add_row(std::vector<double>{x, 1});
  t.set_label_column("y");
  return JoinSpec({t}, "y");
}

}  // namespace

TEST_CASE("perturb") {
  DesignMatrix zero{2, {0, 0, 0, 0}, {1, -1}};
  CHECK(perturb(zero, 0.3, PerturbRule::uniform(1)).points == zero.points);

  std::mt19937_64 rng(1);
  auto x = random_points(rng, 100, 4);
  for (double eps : {0.01, 0.5, 1.0}) {
    auto u = perturb(x, eps, PerturbRule::uniform(7));
    auto c = perturb(x, eps, PerturbRule::corners(7));
    CHECK(u.labels == x.labels);
    for (std::size_t i = 0; i < x.points.size(); ++i) {
      if (x.points[i] == 0) continue;
      CHECK(std::abs(u.points[i] / x.points[i] - 1) <= eps * (1 + 1e-12));
      CHECK(std::abs(std::abs(c.points[i] / x.points[i] - 1) - eps) <= 1e-12);
    }
    CHECK(perturb(x, eps, PerturbRule::uniform(7)).points == u.points);
  }
  CHECK_THROWS_AS(perturb(x, 0, PerturbRule::uniform(1)), ConfigError);
  CHECK_THROWS_AS(perturb(x, 1.5, PerturbRule::uniform(1)), ConfigError);
}

TEST_CASE("z perturbation") {
  DesignMatrix one{1, {1}, {1}};
  auto z = z_perturbation(one, std::vector<double>{1}, 0.1);
  CHECK(z.points[0] == doctest::Approx(1.1));
  CHECK(1 - z.points[0] < 0);

  std::mt19937_64 rng(2);
  auto x = random_points(rng, 200, 5);
  CHECK(z_perturbation(x, std::vector<double>(5, 0.0), 0.2).points == x.points);
  CHECK(perturb(x, 0.2, PerturbRule::adversarial(random_beta(rng, 5))).rows() == x.rows());

  for (int trial = 0; trial < 50; ++trial) {
    auto beta = random_beta(rng, 5);
    double eps = std::uniform_real_distribution<double>(0.01, 1)(rng);
    auto zp = z_perturbation(x, beta, eps);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double mx = 0, mz = 0, slack = 0;
      for (std::size_t k = 0; k < 5; ++k) {
        mx += beta[k] * x.point(i)[k];
        mz += beta[k] * zp.point(i)[k];
        slack += std::abs(beta[k]) * std::abs(x.point(i)[k]);
        CHECK(std::abs(zp.point(i)[k] / x.point(i)[k] - 1) <= eps * (1 + 1e-12));
      }
      CHECK(std::abs((1 - x.labels[i] * mz) - (1 - x.labels[i] * mx - eps * slack)) <= 1e-12);
    }
  }

  // The literal case rule misses the identity as soon as some x_ik < 0.
  DesignMatrix neg{1, {-1}, {1}};
  auto lit = z_perturbation(neg, std::vector<double>{1}, 0.1, true);
  CHECK(1 - lit.points[0] == doctest::Approx(1.9));
  CHECK(1 - z_perturbation(neg, std::vector<double>{1}, 0.1).points[0] == doctest::Approx(2.1 - 0.2));
}

TEST_CASE("z perturbation minimizes the objective among sampled perturbations") {
  std::mt19937_64 rng(3);
  auto x = random_points(rng, 30, 3);
  for (int trial = 0; trial < 5; ++trial) {
    auto beta = random_beta(rng, 3);
    const double eps = 0.2, lambda = 0.05;
    double fz = objective_exact(beta, lambda, z_perturbation(x, beta, eps));
    for (int s = 0; s < 10000 / 5; ++s) {
      auto rule = s % 2 ? PerturbRule::uniform(rng()) : PerturbRule::corners(rng());
      CHECK(objective_exact(beta, lambda, perturb(x, eps, rule)) >= fz - 1e-12);
    }
  }
}

TEST_CASE("knapsack gadget") {
  auto gadget = gen_knapsack_instance({1, 1}, 1, 2);
  CHECK(gadget.num_tables() == 3);
  auto tree = build_join_tree(gadget);
  auto x = materialize_join(tree);
  CHECK(x.rows() == 5);
  CHECK(count_knapsack_subsets({1, 1}, 1) == 3);
  CHECK(knapsack_g2(gadget) == 1);
  CHECK(knapsack_g2(gen_knapsack_instance({1, 1}, 1, 3)) == 0);

  std::mt19937_64 rng(4);
  for (std::size_t m = 1; m <= 12; ++m) {
    std::vector<double> w(m);
    for (auto& v : w) v = std::uniform_int_distribution<int>(1, 20)(rng);
    double L = std::uniform_int_distribution<int>(1, 60)(rng);
    auto c = count_knapsack_subsets(w, L);
    for (long long k : {1LL, static_cast<long long>(c), static_cast<long long>(c) + 1, 1LL << m}) {
      double g2 = knapsack_g2(gen_knapsack_instance(w, L, k));
      CHECK(g2 == static_cast<double>(c) - static_cast<double>(k));
    }
  }
  CHECK_THROWS_AS(gen_knapsack_instance({1, -1}, 1, 2), ConfigError);
  CHECK_THROWS_AS(gen_knapsack_instance({1}, 0, 2), ConfigError);
  CHECK_THROWS_AS(gen_knapsack_instance({1}, 1, 0), ConfigError);
}

TEST_CASE("stability probe") {
  ProbeConfig c;
  c.budget = 0;
  CHECK_THROWS_AS(stability_probe(single_point(0.5), c), ConfigError);

  // Interior optimum (lambda = 1): both conditions hold once gamma exceeds 2 delta.
  c.budget = 100;
  c.alpha = 0.01;
  c.delta = 0.1;
  c.gamma = 0.25;
  c.lambda = 1;
  auto stable = stability_probe(single_point(0.5), c);
  CHECK_FALSE(stable.counterexample);
  CHECK(std::string(stable.verdict()) == "evidence-of-stability");
  CHECK(stable.samples == 100);
  CHECK(stable.max_solver_gap <= 1e-10);
  CHECK(stable.second_sampled.worst_ratio > 1.15);  // close to 1 + 2 delta

  // gamma below 2 delta cannot hold (take X_b = X_a).
  c.gamma = 0.1;
  CHECK(stability_probe(single_point(0.5), c).second_sampled.violations > 0);

  // lambda = 0.01 puts the optimum on the hinge: the first condition fails.
  c.lambda = 0.01;
  c.gamma = 0.25;
  auto hinge = stability_probe(single_point(0.5), c);
  CHECK(hinge.counterexample);
  CHECK(hinge.first_sampled.violations > 0);
  CHECK(hinge.first_sampled.worst_certified > 1.3);

  // Knapsack gadget with C_L = k.
  ProbeConfig k;
  k.alpha = 0.01;
  k.delta = 0.01;
  k.gamma = 1;
  k.lambda = 0.01;
  k.budget = 20;
  auto gadget = stability_probe(gen_knapsack_instance({1, 1}, 1, 3), k);
  CHECK(gadget.counterexample);
  REQUIRE_FALSE(gadget.violations.empty());
  CHECK(gadget.violations.front().condition == 1);
  CHECK(gadget.violations.front().ratio > 1 + k.delta);

  // Replay: same parameters, same report.
  auto again = stability_probe(gen_knapsack_instance({1, 1}, 1, 3), k);
  CHECK(again.sample_seeds == gadget.sample_seeds);
  CHECK(again.violations.size() == gadget.violations.size());
  CHECK(again.first_sampled.worst_certified == gadget.first_sampled.worst_certified);
  CHECK(again.violations.front().beta == gadget.violations.front().beta);
}

TEST_CASE("stable instance generator") {
  StableInstanceConfig c;
  c.d = 5;
  c.m = 3;
  c.n = 30;
  c.keys = 10;
  c.margin = 0.2;
  c.seed = 9;
  auto a = gen_stable_instance(c);
  auto b = gen_stable_instance(c);
  for (std::size_t t = 0; t < a.spec.num_tables(); ++t)
    CHECK(format_table_csv(a.spec.tables()[t]) == format_table_csv(b.spec.tables()[t]));
  CHECK(a.spec.dimension() == 5);
  CHECK(a.spec.num_tables() == 3);
  CHECK(features_in_unit_box(a.spec));
  CHECK(a.meta.rows == 10 * 27);
  CHECK(a.meta.alpha == doctest::Approx(a.meta.margin / 4));
  CHECK(a.meta.epsilon == std::min(a.meta.delta / 8, a.meta.alpha));

  // Every labelled point is separated by beta0 with the recorded margin.
  auto x = materialize_join(build_join_tree(a.spec));
  CHECK(x.rows() == a.meta.rows);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0;
    for (std::size_t k = 0; k < 5; ++k) s += a.meta.beta0[k] * x.point(i)[k];
    CHECK(x.labels[i] * s >= a.meta.margin * (1 - 1e-12));
  }

  c.noise = 0.4;
  auto noisy = gen_stable_instance(c);
  CHECK(noisy.meta.flipped > 0);
  auto xn = materialize_join(build_join_tree(noisy.spec));
  auto base = baseline_train(xn, 0.01, 3000);
  auto opt = solve_exact(xn, 0.01);
  CHECK(opt.objective > 0.75);
  CHECK(base.objective >= opt.objective - 1e-9);

  c.margin = 0;
  CHECK_THROWS_AS(gen_stable_instance(c), ConfigError);
}
