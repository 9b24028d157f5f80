#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "relsvm/relsvm.h"
#include "schema.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = RELSVM_SOURCE_DIR;
const fs::path kQuickstart = kSource / "tests/fixtures/quickstart/spec.json";

struct Str {
  char* p = nullptr;
  ~Str() { relsvm_free_string(p); }
  json parse() const { return json::parse(p); }
};

struct Handle {
  relsvm_spec* h = nullptr;
  ~Handle() { relsvm_spec_free(h); }
};

json schema(const char* name) { return oracle::read_json((kSource / "docs/schemas" / name).string()); }

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("relsvm_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(relsvm_version()).size() > 0);
  CHECK(std::string(relsvm_status_name(RELSVM_OK)) == "ok");
  CHECK(std::string(relsvm_status_name(RELSVM_ERR_CYCLIC)) != std::string(relsvm_status_name(RELSVM_ERR_DATA)));
  CHECK(std::string(relsvm_status_name(99)) == "unknown");
}

TEST_CASE("load, describe and train the quickstart fixture") {
  Handle spec;
  REQUIRE(relsvm_spec_load(kQuickstart.c_str(), &spec.h) == RELSVM_OK);
  Str info;
  REQUIRE(relsvm_spec_describe(spec.h, &info.p) == RELSVM_OK);
  auto d = info.parse();
  CHECK(d["join_rows"] == "24");
  CHECK(d["tables"].size() == 3);
  CHECK(d["edges"].size() == 2);

  Str a, b;
  double seconds = -1;
  const char* cfg = R"({"lambda": 0.1, "epsilon": 0.1, "steps": 30, "mode": "sketch"})";
  REQUIRE(relsvm_train(spec.h, cfg, &a.p, &seconds) == RELSVM_OK);
  REQUIRE(relsvm_train(spec.h, cfg, &b.p, nullptr) == RELSVM_OK);
  CHECK(seconds >= 0);
  CHECK(std::string(a.p) == std::string(b.p));
  auto trace = a.parse();
  CHECK(oracle::validate_schema(trace, schema("trace.schema.json")).empty());
  CHECK(trace["steps"].size() == 30);
  CHECK(trace["config"]["mode"] == "sketch");
}

TEST_CASE("error statuses") {
  Handle spec;
  CHECK(relsvm_spec_load("/nonexistent/spec.json", &spec.h) == RELSVM_ERR_CONFIG);
  CHECK(std::string(relsvm_last_error()).find("/nonexistent/spec.json") != std::string::npos);
  CHECK(spec.h == nullptr);
  CHECK(relsvm_spec_load(nullptr, &spec.h) == RELSVM_ERR_CONFIG);

  REQUIRE(relsvm_spec_load(kQuickstart.c_str(), &spec.h) == RELSVM_OK);
  Str out;
  CHECK(relsvm_train(spec.h, R"({"lambda": -1})", &out.p, nullptr) == RELSVM_ERR_CONFIG);
  CHECK(relsvm_train(spec.h, R"({"lamda": 1})", &out.p, nullptr) == RELSVM_ERR_CONFIG);
  CHECK(relsvm_train(spec.h, "{not json", &out.p, nullptr) == RELSVM_ERR_CONFIG);
  CHECK(relsvm_train(spec.h, R"({"steps": "many"})", &out.p, nullptr) == RELSVM_ERR_CONFIG);
  CHECK(relsvm_train(spec.h, R"({"exact_cap": 1})", &out.p, nullptr) == RELSVM_ERR_BLOWUP);
  CHECK(out.p == nullptr);
  CHECK(relsvm_oracle(spec.h, R"({"cap": 10})", &out.p, nullptr) == RELSVM_ERR_OUTPUT_CAP);
  CHECK(relsvm_count(spec.h, R"({"label": 0})", &out.p) == RELSVM_ERR_CONFIG);
  CHECK(relsvm_count(spec.h, R"({"beta": [1, 2]})", &out.p) == RELSVM_ERR_CONFIG);
  CHECK(relsvm_gen(R"({"kind": "maze"})", "/tmp", &out.p) == RELSVM_ERR_CONFIG);
}

TEST_CASE("cyclic and malformed instances") {
  auto dir = scratch("triangle");
  write(dir / "R.csv", "A,B,y\n1,2,1\n");
  write(dir / "S.csv", "B,C\n2,3\n");
  write(dir / "T.csv", "C,A\n3,1\n");
  write(dir / "spec.json", R"({"label": "y", "tables": [{"name": "R", "path": "R.csv"},
      {"name": "S", "path": "S.csv"}, {"name": "T", "path": "T.csv"}]})");
  Handle tri;
  REQUIRE(relsvm_spec_load((dir / "spec.json").c_str(), &tri.h) == RELSVM_OK);
  Str out;
  CHECK(relsvm_train(tri.h, nullptr, &out.p, nullptr) == RELSVM_ERR_CYCLIC);
  CHECK(relsvm_spec_describe(tri.h, &out.p) == RELSVM_ERR_CYCLIC);

  auto bad = scratch("badlabel");
  write(bad / "R.csv", "A,y\n1,0\n");
  write(bad / "spec.json", R"({"label": "y", "tables": [{"name": "R", "path": "R.csv"}]})");
  Handle h;
  CHECK(relsvm_spec_load((bad / "spec.json").c_str(), &h.h) == RELSVM_ERR_DATA);
}

TEST_CASE("verify passes, and fails under fault injection") {
  Handle spec;
  REQUIRE(relsvm_spec_load(kQuickstart.c_str(), &spec.h) == RELSVM_OK);
  Str good, bad;
  REQUIRE(relsvm_verify(spec.h, nullptr, &good.p) == RELSVM_OK);
  auto r = good.parse();
  CHECK(r["passed"] == true);
  CHECK(oracle::validate_schema(r, schema("verify.schema.json")).empty());
  REQUIRE(relsvm_verify(spec.h, R"({"fault_scale": 1.5})", &bad.p) == RELSVM_ERR_VERIFY);
  auto f = bad.parse();
  CHECK(f["passed"] == false);
  for (const auto& c : f["checks"])
    if (c["name"] == "fhat-sandwich") CHECK(c["passed"] == false);
}

TEST_CASE("gen, probe, count and oracle outputs validate") {
  auto dir = scratch("knapsack");
  Str gen;
  REQUIRE(relsvm_gen(R"({"kind": "knapsack", "weights": [1, 1], "L": 1, "k": 2})", dir.c_str(), &gen.p) ==
          RELSVM_OK);
  auto g = gen.parse();
  CHECK(g["subsets"] == 3);
  CHECK(g["g2"] == 1.0);
  CHECK(oracle::validate_schema(g, schema("gen.schema.json")).empty());
  for (const char* f : {"V.csv", "T1.csv", "T2.csv", "spec.json"}) CHECK(fs::exists(dir / f));

  Handle spec;
  REQUIRE(relsvm_spec_load((dir / "spec.json").c_str(), &spec.h) == RELSVM_OK);
  Str probe;
  REQUIRE(relsvm_probe(spec.h, R"({"budget": 3, "delta": 0.01})", &probe.p) == RELSVM_OK);
  CHECK(oracle::validate_schema(probe.parse(), schema("probe.schema.json")).empty());
  CHECK(relsvm_probe(spec.h, R"({"budget": 0})", &probe.p) == RELSVM_ERR_CONFIG);

  Str count, oracle_out, matrix;
  REQUIRE(relsvm_count(spec.h, R"({"ladder": true, "mode": "sketch"})", &count.p) == RELSVM_OK);
  CHECK(oracle::validate_schema(count.parse(), schema("count.schema.json")).empty());
  REQUIRE(relsvm_oracle(spec.h, R"({"steps": 50})", &oracle_out.p, &matrix.p) == RELSVM_OK);
  CHECK(oracle::validate_schema(oracle_out.parse(), schema("oracle.schema.json")).empty());
  CHECK(std::string(matrix.p).rfind("Key,Value,E1,E2,y\n", 0) == 0);

  auto sdir = scratch("stable");
  Str stable;
  REQUIRE(relsvm_gen(R"({"kind": "stable", "n": 20, "m": 2, "d": 3, "seed": 5})", sdir.c_str(), &stable.p) ==
          RELSVM_OK);
  CHECK(oracle::validate_schema(stable.parse(), schema("gen.schema.json")).empty());
}
