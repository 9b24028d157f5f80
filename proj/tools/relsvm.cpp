// relsvm: command-line front end over the C API.
//
// Exit codes: 0 ok, 1 config, 2 cyclic join, 3 data, 4 output cap exceeded,
// 5 verification failed, 6 partial-sum blowup, 7 internal.

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "relsvm/relsvm.h"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct Failure {
  int code;
  std::string message;
};

[[noreturn]] void fail(int code, std::string message) { throw Failure{code, std::move(message)}; }

void check(int status) {
  if (status != RELSVM_OK) fail(status, relsvm_last_error());
}

/// Owned C string returned by the library.
struct CString {
  char* p = nullptr;
  ~CString() { relsvm_free_string(p); }
  char** out() { return &p; }
  std::string str() const { return p ? p : ""; }
};

struct Spec {
  relsvm_spec* h = nullptr;
  ~Spec() { relsvm_spec_free(h); }
};

fs::path resolve_spec(const std::string& arg) {
  fs::path p(arg);
  if (fs::is_directory(p)) p /= "spec.json";
  if (!fs::exists(p)) fail(RELSVM_ERR_CONFIG, "spec file not found: " + p.string());
  return p;
}

void load(Spec& spec, const std::string& arg) { check(relsvm_spec_load(resolve_spec(arg).c_str(), &spec.h)); }

/// Creates the run directory; an existing non-empty one needs --force.
void prepare_out(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !force)
    fail(RELSVM_ERR_CONFIG, "output directory " + dir.string() + " already exists and is not empty (use --force)");
  fs::create_directories(dir, ec);
  if (ec) fail(RELSVM_ERR_CONFIG, "cannot create " + dir.string() + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) fail(RELSVM_ERR_CONFIG, "cannot write " + path.string());
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_meta(const fs::path& dir, const std::string& command, double seconds) {
  write_file(dir / "meta.json", dump(Json{{"command", command},
                                          {"version", relsvm_version()},
                                          {"started_utc", utc_now()},
                                          {"wall_clock_seconds", seconds}}));
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::optional<unsigned long long> env_number(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  unsigned long long n = std::strtoull(v, &end, 10);
  if (errno || *end || n == 0) fail(RELSVM_ERR_CONFIG, std::string(name) + " must be a positive integer");
  return n;
}

std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  return os.str();
}

struct Common {
  std::string spec;
  std::string out;
  bool force = false;
  int verbosity = 0;
};

void add_common(CLI::App* cmd, Common& c, bool needs_spec) {
  if (needs_spec)
    cmd->add_option("--spec", c.spec, "JoinSpec JSON file, or a directory holding spec.json")->required();
  cmd->add_option("--out", c.out, "Run directory (default: relsvm-<subcommand>)");
  cmd->add_flag("--force", c.force, "Overwrite files in an existing run directory");
  cmd->add_flag("-v,--verbose", c.verbosity, "More output (repeatable)");
}

fs::path out_dir(const Common& c, const std::string& name) {
  return c.out.empty() ? fs::path("relsvm-" + name) : fs::path(c.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relational SVM training over acyclic joins"};
  app.require_subcommand(1);
  app.set_version_flag("--version", relsvm_version());
  app.footer(
      "Exit codes: 0 ok, 1 config, 2 cyclic join, 3 data, 4 output cap, 5 verification failed, "
      "6 partial-sum blowup, 7 internal.\n"
      "Environment: RELSVM_ORACLE_CAP (default materialization cap), RELSVM_THREADS (default --threads).");

  // train
  Common train_c;
  std::string config_path;
  double lambda = 0.1, epsilon = 0.1;
  std::size_t steps = 100, exact_cap = 100000;
  std::string schedule = "standard", reg = "2lambda", mode = "exact";
  bool no_rescale = false;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  auto* train = app.add_subcommand("train", "Pseudo-gradient descent without materializing the join");
  add_common(train, train_c, true);
  auto* o_config = train->add_option("--config", config_path, "RunConfig JSON; explicit flags override it");
  auto* o_lambda = train->add_option("--lambda", lambda, "Regularization weight")->capture_default_str();
  auto* o_eps = train->add_option("--epsilon", epsilon, "Perturbation and counting accuracy")->capture_default_str();
  auto* o_steps = train->add_option("--steps", steps, "Number of iterates T")->capture_default_str();
  auto* o_sched = train->add_option("--schedule", schedule, "standard: 1/(lambda sqrt(dt)); baseline: 1/(8 lambda sqrt(dt))")
                      ->check(CLI::IsMember({"standard", "baseline"}))
                      ->capture_default_str();
  auto* o_reg = train->add_option("--reg-gradient", reg, "Regularizer gradient coefficient")
                    ->check(CLI::IsMember({"2lambda", "lambda"}))
                    ->capture_default_str();
  auto* o_mode = train->add_option("--mode", mode, "Counting mode")
                     ->check(CLI::IsMember({"exact", "sketch"}))
                     ->capture_default_str();
  auto* o_cap = train->add_option("--exact-cap", exact_cap, "Distinct partial sums allowed in exact mode")
                    ->capture_default_str();
  auto* o_norescale = train->add_flag("--no-rescale", no_rescale, "Train on raw feature values");
  auto* o_threads = train->add_option("--threads", threads, "Worker threads (default RELSVM_THREADS or 1)");
  auto* o_seed = train->add_option("--seed", seed, "Random seed (recorded)")->capture_default_str();

  // verify
  Common verify_c;
  double v_lambda = 0.1, v_eps = 0.1, fault_scale = 1.0;
  std::size_t hypotheses = 4, v_exact_cap = 100000;
  std::uint64_t v_seed = 0;
  unsigned long long v_cap = 0;
  unsigned v_threads = 0;
  bool v_no_rescale = false;
  auto* verify = app.add_subcommand("verify", "Compare the relational algorithms with the materialized join");
  add_common(verify, verify_c, true);
  verify->add_option("--lambda", v_lambda, "Regularization weight")->capture_default_str();
  verify->add_option("--epsilon", v_eps, "Perturbation accuracy")->capture_default_str();
  verify->add_option("--hypotheses", hypotheses, "Random hypotheses besides the origin")->capture_default_str();
  verify->add_option("--seed", v_seed, "Seed for the hypotheses")->capture_default_str();
  verify->add_option("--cap", v_cap, "Materialization cap (default RELSVM_ORACLE_CAP or 1000000)");
  verify->add_option("--exact-cap", v_exact_cap, "Distinct partial sums allowed")->capture_default_str();
  verify->add_option("--threads", v_threads, "Worker threads (default RELSVM_THREADS or 1)");
  verify->add_flag("--no-rescale", v_no_rescale, "Use raw feature values");
  verify->add_option("--fault-scale", fault_scale, "Test hook: multiply every count (breaks the checks)")
      ->capture_default_str();

  // gen
  Common gen_c;
  auto* gen = app.add_subcommand("gen", "Write a generated instance (CSVs + spec.json)");
  gen->require_subcommand(1);
  std::vector<double> weights;
  double L = 1.0;
  long long k = 1;
  auto* knap = gen->add_subcommand("knapsack", "Counting-knapsack gadget");
  add_common(knap, gen_c, false);
  knap->add_option("--weights", weights, "Item weights, comma separated")->delimiter(',')->required();
  knap->add_option("--L", L, "Capacity")->capture_default_str();
  knap->add_option("--k", k, "Count threshold")->capture_default_str();
  std::size_t s_d = 4, s_m = 3, s_n = 60, s_keys = 0;
  double s_margin = 0.2, s_noise = 0.0, s_lambda = 0.01, s_delta = 0.05, s_gamma = 0.2;
  std::uint64_t s_seed = 0;
  auto* stable = gen->add_subcommand("stable", "Margin-separated star join");
  add_common(stable, gen_c, false);
  stable->add_option("--d", s_d, "Features, join key included")->capture_default_str();
  stable->add_option("--m", s_m, "Tables")->capture_default_str();
  stable->add_option("--n", s_n, "Rows per table")->capture_default_str();
  stable->add_option("--keys", s_keys, "Distinct key values (0: n)")->capture_default_str();
  stable->add_option("--margin", s_margin, "Minimum |beta0.x| before noise")->capture_default_str();
  stable->add_option("--noise", s_noise, "Label flip probability")->capture_default_str();
  stable->add_option("--seed", s_seed, "Random seed")->capture_default_str();
  stable->add_option("--lambda", s_lambda, "Recorded lambda")->capture_default_str();
  stable->add_option("--delta", s_delta, "Recorded delta")->capture_default_str();
  stable->add_option("--gamma", s_gamma, "Recorded gamma")->capture_default_str();

  // probe
  Common probe_c;
  double p_alpha = 0.01, p_delta = 0.1, p_gamma = 0.1, p_lambda = 0.01;
  std::size_t p_budget = 20, p_dirs = 8;
  std::uint64_t p_seed = 0;
  unsigned long long p_cap = 0;
  auto* probe = app.add_subcommand("probe", "Sample perturbation pairs and test both stability conditions");
  add_common(probe, probe_c, true);
  probe->add_option("--alpha", p_alpha, "Perturbation size")->capture_default_str();
  probe->add_option("--delta", p_delta, "First-condition slack")->capture_default_str();
  probe->add_option("--gamma", p_gamma, "Second-condition slack")->capture_default_str();
  probe->add_option("--lambda", p_lambda, "Regularization weight")->capture_default_str();
  probe->add_option("--budget", p_budget, "Sampled pairs")->capture_default_str();
  probe->add_option("--directions", p_dirs, "Extra approximate hypotheses per sample")->capture_default_str();
  probe->add_option("--seed", p_seed, "Random seed")->capture_default_str();
  probe->add_option("--cap", p_cap, "Materialization cap (default RELSVM_ORACLE_CAP or 1000000)");

  // count
  Common count_c;
  int c_label = 1;
  std::vector<double> c_beta;
  double c_eps = 0.1;
  std::string c_mode = "exact";
  std::vector<std::string> c_columns;
  bool c_rescale = false, c_ladder = false;
  auto* count = app.add_subcommand("count", "Far-point row counts per (feature, value) for one label");
  add_common(count, count_c, true);
  count->add_option("--label", c_label, "Label, 1 or -1")->check(CLI::IsMember({1, -1}))->capture_default_str();
  count->add_option("--beta", c_beta, "Hypothesis, comma separated (default: origin)")->delimiter(',');
  count->add_option("--epsilon", c_eps, "Perturbation and counting accuracy")->capture_default_str();
  count->add_option("--mode", c_mode, "Counting mode")->check(CLI::IsMember({"exact", "sketch"}))->capture_default_str();
  count->add_option("--column", c_columns, "Only report these features (repeatable)");
  count->add_flag("--rescale", c_rescale, "Rescale features first");
  count->add_flag("--ladder", c_ladder, "Also report the quantile ladder");

  // oracle
  Common oracle_c;
  double o_lambda_v = 0.1;
  std::size_t o_steps_v = 1000;
  unsigned long long o_cap_v = 0;
  bool o_no_rescale = false, o_no_exact = false, o_matrix = false;
  auto* oracle = app.add_subcommand("oracle", "Materialize the join and run the exact-gradient baseline");
  add_common(oracle, oracle_c, true);
  oracle->add_option("--lambda", o_lambda_v, "Regularization weight")->capture_default_str();
  oracle->add_option("--steps", o_steps_v, "Baseline iterations")->capture_default_str();
  oracle->add_option("--cap", o_cap_v, "Materialization cap (default RELSVM_ORACLE_CAP or 1000000)");
  oracle->add_flag("--no-rescale", o_no_rescale, "Use raw feature values");
  oracle->add_flag("--no-exact", o_no_exact, "Skip the dual coordinate-descent solution");
  oracle->add_flag("--write-matrix", o_matrix, "Also write design.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return RELSVM_ERR_CONFIG;
  }

  auto t0 = std::chrono::steady_clock::now();
  try {
    auto cap_default = [](unsigned long long flag) -> std::optional<unsigned long long> {
      if (flag) return flag;
      return env_number("RELSVM_ORACLE_CAP");
    };
    auto threads_default = [](unsigned flag) -> unsigned {
      if (flag) return flag;
      auto env = env_number("RELSVM_THREADS");
      return env ? static_cast<unsigned>(*env) : 1u;
    };

    if (*train) {
      Json run{{"subcommand", "train"}, {"spec", train_c.spec}, {"descent", Json::object()},
               {"out", out_dir(train_c, "train").string()}, {"verbosity", train_c.verbosity}};
      if (*o_config) {
        std::ifstream in(config_path);
        if (!in) fail(RELSVM_ERR_CONFIG, "cannot open config " + config_path);
        Json file;
        try {
          file = Json::parse(in);
        } catch (const Json::exception& e) {
          fail(RELSVM_ERR_CONFIG, "config " + config_path + " is not valid JSON: " + e.what());
        }
        if (file.contains("descent")) run["descent"] = file["descent"];
      }
      Json& d = run["descent"];
      if (!d.is_object()) fail(RELSVM_ERR_CONFIG, "config field 'descent' must be an object");
      if (*o_lambda || !d.contains("lambda")) d["lambda"] = lambda;
      if (*o_eps || !d.contains("epsilon")) d["epsilon"] = epsilon;
      if (*o_steps || !d.contains("steps")) d["steps"] = steps;
      if (*o_sched || !d.contains("schedule")) d["schedule"] = schedule;
      if (*o_reg || !d.contains("reg_gradient")) d["reg_gradient"] = reg;
      if (*o_mode || !d.contains("mode")) d["mode"] = mode;
      if (*o_cap || !d.contains("exact_cap")) d["exact_cap"] = exact_cap;
      if (*o_norescale || !d.contains("rescale")) d["rescale"] = !no_rescale;
      if (*o_threads || !d.contains("threads")) d["threads"] = threads_default(*o_threads ? threads : 0);
      if (*o_seed || !d.contains("seed")) d["seed"] = seed;

      Spec spec;
      load(spec, train_c.spec);
      fs::path dir = out_dir(train_c, "train");
      prepare_out(dir, train_c.force);
      CString trace;
      double seconds = 0;
      check(relsvm_train(spec.h, d.dump().c_str(), trace.out(), &seconds));
      Json t = Json::parse(trace.str());
      run["descent"] = t["config"];  // normalized: every field, defaults filled in
      write_file(dir / "config.json", dump(run));
      write_file(dir / "trace.json", trace.str());
      write_meta(dir, "train", since(t0));

      const Json& s = t["summary"];
      if (train_c.verbosity > 0) {
        for (const auto& st : t["steps"])
          std::printf("t=%-5zu fhat=%.6g eta=%.4g\n", st["t"].get<std::size_t>(), st["fhat"].get<double>(),
                      st["eta"].get<double>());
      }
      std::printf("beta-hat: [%s]\n", join(s["beta"].get<std::vector<double>>()).c_str());
      std::printf("F-hat: %.9g (iterate %zu of %zu)\n", s["fhat"].get<double>(), s["selected"].get<std::size_t>(),
                  s["iterations"].get<std::size_t>());
      std::printf("join rows: %.17g  peak sketch entries: %zu\n", t["rows"].get<double>(),
                  s["peak_sketch_entries"].get<std::size_t>());
      std::printf("time: %.3f s  trace: %s\n", seconds, (dir / "trace.json").c_str());
      return 0;
    }

    if (*verify) {
      Json req{{"lambda", v_lambda},   {"epsilon", v_eps},          {"hypotheses", hypotheses},
               {"seed", v_seed},       {"exact_cap", v_exact_cap}, {"rescale", !v_no_rescale},
               {"threads", threads_default(v_threads)}, {"fault_scale", fault_scale}};
      if (auto cap = cap_default(v_cap)) req["cap"] = *cap;
      Spec spec;
      load(spec, verify_c.spec);
      fs::path dir = out_dir(verify_c, "verify");
      prepare_out(dir, verify_c.force);
      CString report;
      int status = relsvm_verify(spec.h, req.dump().c_str(), report.out());
      if (status != RELSVM_OK && status != RELSVM_ERR_VERIFY) check(status);
      write_file(dir / "verify.json", report.str());
      write_meta(dir, "verify", since(t0));
      Json r = Json::parse(report.str());
      for (const auto& c : r["checks"])
        std::printf("%s %-16s worst %.3g  %s\n", c["passed"].get<bool>() ? "PASS" : "FAIL",
                    c["name"].get<std::string>().c_str(), c["worst"].get<double>(),
                    c["detail"].get<std::string>().c_str());
      return status;
    }

    if (*gen) {
      Json req;
      bool is_knapsack = knap->parsed();
      if (is_knapsack) {
        req = Json{{"kind", "knapsack"}, {"weights", weights}, {"L", L}, {"k", k}};
      } else {
        req = Json{{"kind", "stable"}, {"d", s_d},         {"m", s_m},         {"n", s_n},
                   {"keys", s_keys},   {"margin", s_margin}, {"noise", s_noise}, {"seed", s_seed},
                   {"lambda", s_lambda}, {"delta", s_delta}, {"gamma", s_gamma}};
      }
      fs::path dir = out_dir(gen_c, is_knapsack ? "knapsack" : "stable");
      prepare_out(dir, gen_c.force);
      CString out;
      check(relsvm_gen(req.dump().c_str(), dir.c_str(), out.out()));
      write_file(dir / "gen.json", out.str());
      Json g = Json::parse(out.str());
      if (is_knapsack)
        std::printf("knapsack gadget: %llu subsets fit, k = %lld, G2 = %g\n", g["subsets"].get<unsigned long long>(), k,
                    g["g2"].get<double>());
      else
        std::printf("stable instance: margin %.4g, alpha %.4g, epsilon %.4g, %llu join rows\n",
                    g["meta"]["margin"].get<double>(), g["meta"]["alpha"].get<double>(),
                    g["meta"]["epsilon"].get<double>(), g["meta"]["rows"].get<unsigned long long>());
      std::printf("written to %s\n", dir.c_str());
      return 0;
    }

    if (*probe) {
      Json req{{"alpha", p_alpha}, {"delta", p_delta},  {"gamma", p_gamma},  {"lambda", p_lambda},
               {"budget", p_budget}, {"directions", p_dirs}, {"seed", p_seed}};
      if (auto cap = cap_default(p_cap)) req["cap"] = *cap;
      Spec spec;
      load(spec, probe_c.spec);
      fs::path dir = out_dir(probe_c, "probe");
      prepare_out(dir, probe_c.force);
      CString report;
      check(relsvm_probe(spec.h, req.dump().c_str(), report.out()));
      write_file(dir / "probe.json", report.str());
      write_meta(dir, "probe", since(t0));
      Json r = Json::parse(report.str());
      std::printf("verdict: %s over %zu samples\n", r["verdict"].get<std::string>().c_str(),
                  r["samples"].get<std::size_t>());
      for (const char* key : {"first_sampled", "first_original", "second_sampled", "second_original"})
        std::printf("  %-16s worst ratio %.6g, violations %zu\n", key, r[key]["worst_ratio"].get<double>(),
                    r[key]["violations"].get<std::size_t>());
      return 0;
    }

    if (*count) {
      Json req{{"label", c_label}, {"epsilon", c_eps}, {"mode", c_mode}, {"rescale", c_rescale}, {"ladder", c_ladder}};
      if (!c_beta.empty()) req["beta"] = c_beta;
      if (!c_columns.empty()) req["columns"] = c_columns;
      Spec spec;
      load(spec, count_c.spec);
      fs::path dir = out_dir(count_c, "count");
      prepare_out(dir, count_c.force);
      CString out;
      check(relsvm_count(spec.h, req.dump().c_str(), out.out()));
      write_file(dir / "count.json", out.str());
      write_meta(dir, "count", since(t0));
      Json r = Json::parse(out.str());
      for (const auto& col : r["columns"]) {
        std::printf("%s:", col["attribute"].get<std::string>().c_str());
        const auto& vals = col["values"];
        const auto& cnts = col["counts"];
        for (std::size_t i = 0; i < vals.size(); ++i)
          std::printf(" %g:%.17g", vals[i].get<double>(), cnts[i].get<double>());
        std::printf("\n");
      }
      return 0;
    }

    if (*oracle) {
      Json req{{"lambda", o_lambda_v}, {"steps", o_steps_v}, {"rescale", !o_no_rescale}, {"exact", !o_no_exact}};
      if (auto cap = cap_default(o_cap_v)) req["cap"] = *cap;
      Spec spec;
      load(spec, oracle_c.spec);
      fs::path dir = out_dir(oracle_c, "oracle");
      prepare_out(dir, oracle_c.force);
      CString out, matrix;
      check(relsvm_oracle(spec.h, req.dump().c_str(), out.out(), o_matrix ? matrix.out() : nullptr));
      write_file(dir / "oracle.json", out.str());
      if (o_matrix) write_file(dir / "design.csv", matrix.str());
      write_meta(dir, "oracle", since(t0));
      Json r = Json::parse(out.str());
      std::printf("join rows: %zu\n", r["rows"].get<std::size_t>());
      std::printf("baseline F: %.9g  beta: [%s]\n", r["baseline"]["objective"].get<double>(),
                  join(r["baseline"]["beta"].get<std::vector<double>>()).c_str());
      if (r.contains("exact"))
        std::printf("optimum F: %.9g (lower bound %.9g)\n", r["exact"]["objective"].get<double>(),
                    r["exact"]["lower_bound"].get<double>());
      return 0;
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "relsvm: error (%s): %s\n", relsvm_status_name(f.code), f.message.c_str());
    return f.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "relsvm: internal error: %s\n", e.what());
    return RELSVM_ERR_INTERNAL;
  }
  return RELSVM_ERR_CONFIG;
}
