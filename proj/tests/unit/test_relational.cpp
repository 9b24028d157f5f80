#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "relsvm/errors.hpp"
#include "relsvm/join.hpp"
#include "relsvm/join_tree.hpp"

using namespace relsvm;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("relsvm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Table make(std::string name, std::vector<std::string> cols, std::vector<std::vector<double>> rows) {
  Table t(std::move(name), std::move(cols));
  for (auto& r : rows) t.add_row(r);
  return t;
}

bool running_intersection(const JoinTree& tree) {
  const auto& spec = tree.spec();
  for (std::size_t a = 0; a < spec.attributes().size(); ++a) {
    std::vector<std::size_t> holders;
    for (std::size_t u = 0; u < tree.size(); ++u) {
      const auto& attrs = spec.table_attributes(u);
      if (std::find(attrs.begin(), attrs.end(), a) != attrs.end()) holders.push_back(u);
    }
    // Connected iff exactly one holder has a parent outside the holder set
    // (or no parent at all).
    std::size_t tops = 0;
    for (auto u : holders) {
      auto p = tree.parent(u);
      if (!p || std::find(holders.begin(), holders.end(), *p) == holders.end()) ++tops;
    }
    if (tops != 1) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("csv parsing") {
  auto t = parse_table_csv("a,b\n1,2\n", {{"a", "b"}, std::nullopt}, "R");
  CHECK(t.num_rows() == 1);
  CHECK(t.at(0, 0) == 1);
  CHECK(t.at(0, 1) == 2);

  CHECK_THROWS_AS(parse_table_csv("a,y\n1,0\n", {{"a", "y"}, "y"}, "R"), DataError);
  try {
    parse_table_csv("a,y\n1,0\n", {{"a", "y"}, "y"}, "R");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("invalid label") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_table_csv("a,b\n1,x\n", {}, "R"), DataError);
  CHECK_THROWS_AS(parse_table_csv("a,b\n1,inf\n", {}, "R"), DataError);
  CHECK_THROWS_AS(parse_table_csv("a,b\n1\n", {}, "R"), DataError);
  CHECK_THROWS_AS(parse_table_csv("a,c\n1,2\n", {{"a", "b"}, std::nullopt}, "R"), DataError);
}

TEST_CASE("csv round trip keeps values exactly") {
  Table t = make("R", {"a", "b"}, {{0.1, -1e-300}, {1.0 / 3, 12345.678}});
  auto back = parse_table_csv(format_table_csv(t), {}, "R");
  REQUIRE(back.num_rows() == 2);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) CHECK(back.at(r, c) == t.at(r, c));
}

TEST_CASE("join spec files round trip") {
  auto dir = temp_dir("spec");
  Table r = make("R", {"A", "B", "y"}, {{1, 2, 1}, {3, 4, -1}});
  r.set_label_column("y");
  JoinSpec spec({r, make("S", {"B", "C"}, {{2, 5}})}, "y");
  spec.scale_overrides["A"] = 4.0;
  write_join_spec(spec, dir);
  auto back = load_join_spec(dir / "spec.json");
  CHECK(back.num_tables() == 2);
  CHECK(back.attributes() == spec.attributes());
  CHECK(back.scale_overrides.at("A") == 4.0);
  CHECK(back.tables()[0].label_column() == std::optional<std::size_t>(2));
  CHECK_THROWS_AS(load_join_spec(dir / "missing.json"), ConfigError);
}

TEST_CASE("join spec validation") {
  Table r = make("R", {"A"}, {{1}});
  CHECK_THROWS_AS(JoinSpec({r}, "y"), DataError);
  Table y = make("R", {"A", "y"}, {{1, 1}});
  CHECK_THROWS_AS(JoinSpec({y, y}, "y"), DataError);
}

TEST_CASE("rescale_features") {
  Table r = make("R", {"A", "y"}, {{2, 1}, {-4, 1}, {1, -1}});
  r.set_label_column("y");
  JoinSpec spec({r}, "y");
  auto res = rescale_features(spec);
  REQUIRE(res.factors.size() == 1);
  CHECK(res.factors[0] == 4);
  CHECK(res.spec.tables()[0].at(0, 0) == 0.5);
  CHECK(res.spec.tables()[0].at(1, 0) == -1);
  CHECK(res.spec.tables()[0].at(2, 0) == 0.25);
  CHECK(res.spec.tables()[0].at(2, 1) == -1);  // label untouched

  Table unit = make("R", {"A", "y"}, {{1, 1}, {-0.5, 1}});
  unit.set_label_column("y");
  auto same = rescale_features(JoinSpec({unit}, "y"));
  CHECK(same.factors[0] == 1);
  CHECK(same.spec.tables()[0].at(1, 0) == -0.5);

  Table zero = make("R", {"A", "y"}, {{0, 1}});
  zero.set_label_column("y");
  CHECK(rescale_features(JoinSpec({zero}, "y")).factors[0] == 1);
}

TEST_CASE("rescale over random tables: max |value| is 1 and rescaling is idempotent") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    oracle::RandomSpecOptions o;
    o.continuous = true;
    auto spec = oracle::random_acyclic_spec(rng, o);
    // Stretch values so factors differ from 1.
    std::vector<Table> tables;
    for (const auto& t : spec.tables()) {
      Table s(t.name(), t.columns());
      for (std::size_t r = 0; r < t.num_rows(); ++r) {
        std::vector<double> row(t.row(r).begin(), t.row(r).end());
        for (std::size_t c = 0; c < row.size(); ++c)
          if (!t.label_column() || c != *t.label_column()) row[c] *= 3.5;
        s.add_row(row);
      }
      if (t.label_column()) s.set_label_column(t.columns()[*t.label_column()]);
      tables.push_back(std::move(s));
    }
    JoinSpec big(std::move(tables), "y");
    auto once = rescale_features(big);
    CHECK(features_in_unit_box(once.spec));
    for (std::size_t f = 0; f < big.dimension(); ++f) {
      double m = 0;
      auto a = once.spec.feature_attributes()[f];
      for (std::size_t t = 0; t < once.spec.num_tables(); ++t) {
        const auto& attrs = once.spec.table_attributes(t);
        for (std::size_t c = 0; c < attrs.size(); ++c)
          if (attrs[c] == a)
            for (std::size_t r = 0; r < once.spec.tables()[t].num_rows(); ++r)
              m = std::max(m, std::abs(once.spec.tables()[t].at(r, c)));
      }
      CHECK((m == 1.0 || m == 0.0));
    }
    auto twice = rescale_features(once.spec);
    for (std::size_t t = 0; t < once.spec.num_tables(); ++t)
      for (std::size_t r = 0; r < once.spec.tables()[t].num_rows(); ++r)
        for (std::size_t c = 0; c < once.spec.tables()[t].arity(); ++c)
          CHECK(twice.spec.tables()[t].at(r, c) == once.spec.tables()[t].at(r, c));
  }
}

TEST_CASE("build_join_tree shapes") {
  Table r = make("R", {"A", "B", "y"}, {{1, 2, 1}});
  r.set_label_column("y");
  Table s = make("S", {"B", "C"}, {{2, 3}});
  auto path = build_join_tree(JoinSpec({r, s}, "y"));
  CHECK(path.size() == 2);
  CHECK(path.edges().size() == 1);

  Table t = make("T", {"C", "A"}, {{3, 1}});
  CHECK_THROWS_AS(build_join_tree(JoinSpec({r, s, t}, "y")), CyclicQuery);

  std::vector<Table> star;
  for (int i = 0; i < 6; ++i) {
    std::vector<std::string> cols{"K", "F" + std::to_string(i)};
    if (i == 0) cols.push_back("y");
    Table ti = make("R" + std::to_string(i), cols, {});
    if (i == 0) ti.set_label_column("y");
    star.push_back(ti);
  }
  auto tree = build_join_tree(JoinSpec(star, "y"));
  auto k = *tree.spec().attribute_id("K");
  for (auto [p, c] : tree.edges()) CHECK(tree.parent_attributes(c) == std::vector<std::size_t>{k});
  for (std::size_t root = 0; root < 6; ++root) {
    auto re = tree.rerooted(root);
    CHECK(re.root() == root);
    CHECK(running_intersection(re));
  }
}

TEST_CASE("random join trees satisfy running intersection and bag = hyperedge") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto spec = std::make_shared<const JoinSpec>(oracle::random_acyclic_spec(rng));
    auto tree = build_join_tree(spec);
    CHECK(tree.size() == spec->num_tables());
    CHECK(running_intersection(tree));
    for (std::size_t u = 0; u < tree.size(); ++u)
      for (auto a : tree.parent_attributes(u)) {
        auto p = *tree.parent(u);
        const auto& pa = spec->table_attributes(p);
        CHECK(std::find(pa.begin(), pa.end(), a) != pa.end());
      }
  }
}

TEST_CASE("materialize_join and count_join_rows: small cases") {
  Table r = make("R", {"A", "B", "y"}, {{1, 2, 1}});
  r.set_label_column("y");
  auto one = build_join_tree(JoinSpec({r, make("S", {"B", "C"}, {{2, 3}})}, "y"));
  auto x = materialize_join(one);
  CHECK(x.rows() == 1);
  CHECK(x.point(0)[0] == 1);
  CHECK(x.point(0)[1] == 2);
  CHECK(x.point(0)[2] == 3);
  CHECK(count_join_rows(one) == 1);

  auto none = build_join_tree(JoinSpec({r, make("S", {"B", "C"}, {{9, 3}})}, "y"));
  CHECK(materialize_join(none).rows() == 0);
  CHECK(count_join_rows(none) == 0);
}

TEST_CASE("materialize_join equals nested-loop join on random instances") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto spec = std::make_shared<const JoinSpec>(oracle::random_acyclic_spec(rng));
    auto tree = build_join_tree(spec);
    auto expected = oracle::sorted(oracle::nested_loop_join(*spec));
    auto got = oracle::sorted(materialize_join_tuples(tree));
    CHECK(got == expected);
    CHECK(count_join_rows(tree) == expected.size());
    // No dangling tuples: every output row projects onto a row of each table.
    for (const auto& tuple : got) {
      for (std::size_t t = 0; t < spec->num_tables(); ++t) {
        const auto& table = spec->tables()[t];
        const auto& attrs = spec->table_attributes(t);
        bool found = false;
        for (std::size_t r = 0; r < table.num_rows() && !found; ++r) {
          found = true;
          for (std::size_t c = 0; c < attrs.size(); ++c) found = found && table.at(r, c) == tuple[attrs[c]];
        }
        CHECK(found);
      }
    }
  }
}

TEST_CASE("output cap and big star counts") {
  std::vector<Table> star;
  for (int i = 0; i < 6; ++i) {
    std::vector<std::string> cols{"K", "F" + std::to_string(i)};
    if (i == 0) cols.push_back("y");
    Table t("R" + std::to_string(i), cols);
    for (int r = 0; r < 1000; ++r) {
      std::vector<double> row{1.0, (r % 200) / 200.0};
      if (i == 0) row.push_back(r % 2 ? 1.0 : -1.0);
      t.add_row(row);
    }
    if (i == 0) t.set_label_column("y");
    star.push_back(std::move(t));
  }
  auto tree = build_join_tree(JoinSpec(star, "y"));
  BigCount expected = 1;
  for (int i = 0; i < 6; ++i) expected *= 1000;
  CHECK(count_join_rows(tree) == expected);
  CHECK_THROWS_AS(materialize_join(tree), OutputCapExceeded);
  try {
    materialize_join(tree, 10);
  } catch (const OutputCapExceeded& e) {
    CHECK(e.rows() == "1000000000000000000");
    CHECK(e.cap() == 10);
  }
}
