#include "relsvm/relsvm.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "relsvm/errors.hpp"
#include "relsvm/json_io.hpp"
#include "relsvm/verify.hpp"

struct relsvm_spec {
  relsvm::JoinSpec spec;
};

namespace {

using relsvm::Json;

thread_local std::string g_last_error;

char* copy_out(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.data(), s.size() + 1);
  return p;
}

Json parse_request(const char* text) {
  if (!text || !*text) return Json::object();
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw relsvm::ConfigError(std::string("malformed JSON request: ") + e.what());
  }
}

void check_keys(const Json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw relsvm::ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw relsvm::ConfigError(std::string("unknown ") + what + " field '" + k + "'");
  }
}

template <class T>
T field(const Json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw relsvm::ConfigError("");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!it->is_number()) throw relsvm::ConfigError("");
      if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw relsvm::ConfigError("");
        if (std::is_unsigned_v<T> && !it->is_number_unsigned()) throw relsvm::ConfigError("");
      }
    }
    return it->template get<T>();
  } catch (const std::exception&) {
    throw relsvm::ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

/// Runs `body`, mapping exceptions onto status codes.
template <class F>
int guarded(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const relsvm::Error& e) {
    g_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const Json::exception& e) {
    g_last_error = e.what();
    return RELSVM_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return RELSVM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RELSVM_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) throw relsvm::ConfigError(std::string(name) + " must not be null");
}

}  // namespace

extern "C" {

const char* relsvm_version(void) { return "1.0.0"; }

const char* relsvm_status_name(int status) {
  if (status < 0 || status > RELSVM_ERR_INTERNAL) return "unknown";
  return relsvm::errc_name(static_cast<relsvm::Errc>(status));
}

const char* relsvm_last_error(void) { return g_last_error.c_str(); }

void relsvm_free_string(char* s) { std::free(s); }

int relsvm_spec_load(const char* path, relsvm_spec** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new relsvm_spec{relsvm::load_join_spec(path)};
    return RELSVM_OK;
  });
}

void relsvm_spec_free(relsvm_spec* spec) { delete spec; }

int relsvm_spec_describe(const relsvm_spec* handle, char** out_json) {
  return guarded([&] {
    require(handle, "spec");
    require(out_json, "out_json");
    const auto& spec = handle->spec;
    auto tree = relsvm::build_join_tree(spec);
    Json tables = Json::array();
    for (const auto& t : spec.tables())
      tables.push_back(Json{{"name", t.name()}, {"columns", t.columns()}, {"rows", t.num_rows()}});
    Json edges = Json::array();
    for (auto [p, c] : tree.edges())
      edges.push_back(Json::array({spec.tables()[p].name(), spec.tables()[c].name()}));
    Json j{{"tables", tables},
           {"label", spec.label()},
           {"attributes", spec.attributes()},
           {"features", spec.feature_names()},
           {"join_rows", relsvm::count_join_rows(tree).str()},
           {"root", spec.tables()[tree.root()].name()},
           {"edges", edges}};
    *out_json = copy_out(relsvm::dump(j));
    return RELSVM_OK;
  });
}

int relsvm_train(const relsvm_spec* handle, const char* config_json, char** trace_json,
                 double* seconds) {
  return guarded([&] {
    require(handle, "spec");
    require(trace_json, "trace_json");
    auto cfg = relsvm::descent_config_from_json(parse_request(config_json));
    auto trace = relsvm::train(handle->spec, cfg);
    // Feature names are the same before and after rescaling.
    *trace_json = copy_out(relsvm::dump(relsvm::trace_json(trace, cfg, handle->spec)));
    if (seconds) *seconds = trace.seconds;
    return RELSVM_OK;
  });
}

int relsvm_verify(const relsvm_spec* handle, const char* options_json, char** report_json) {
  return guarded([&] {
    require(handle, "spec");
    require(report_json, "report_json");
    Json req = parse_request(options_json);
    check_keys(req,
               {"lambda", "epsilon", "hypotheses", "seed", "cap", "exact_cap", "rescale", "threads",
                "fault_scale"},
               "verify request");
    relsvm::VerifyOptions o;
    o.lambda = field(req, "lambda", o.lambda);
    o.epsilon = field(req, "epsilon", o.epsilon);
    o.hypotheses = field(req, "hypotheses", o.hypotheses);
    o.seed = field(req, "seed", o.seed);
    o.cap = field(req, "cap", o.cap);
    o.exact_cap = field(req, "exact_cap", o.exact_cap);
    o.rescale = field(req, "rescale", o.rescale);
    o.threads = field(req, "threads", o.threads);
    o.fault_scale = field(req, "fault_scale", o.fault_scale);
    auto report = relsvm::verify_instance(handle->spec, o);
    Json checks = Json::array();
    for (const auto& c : report.checks)
      checks.push_back(Json{{"name", c.name}, {"passed", c.passed}, {"worst", c.worst}, {"detail", c.detail}});
    Json j{{"format", "relsvm-verify/1"},
           {"lambda", o.lambda},
           {"epsilon", o.epsilon},
           {"seed", o.seed},
           {"rows", report.rows},
           {"passed", report.passed()},
           {"checks", checks}};
    *report_json = copy_out(relsvm::dump(j));
    return report.passed() ? RELSVM_OK : RELSVM_ERR_VERIFY;
  });
}

int relsvm_count(const relsvm_spec* handle, const char* request_json, char** out_json) {
  return guarded([&] {
    require(handle, "spec");
    require(out_json, "out_json");
    Json req = parse_request(request_json);
    check_keys(req, {"label", "beta", "epsilon", "mode", "exact_cap", "columns", "rescale", "ladder"},
               "count request");
    int label = field(req, "label", 1);
    if (label != 1 && label != -1) throw relsvm::ConfigError("label must be 1 or -1");
    relsvm::CountingOptions o;
    o.epsilon = field(req, "epsilon", o.epsilon);
    if (!(o.epsilon > 0) || o.epsilon > 1) throw relsvm::ConfigError("epsilon must lie in (0, 1]");
    o.mode = relsvm::parse_counting_mode(field(req, "mode", std::string("exact")));
    o.exact_cap = field(req, "exact_cap", o.exact_cap);
    relsvm::JoinSpec spec =
        field(req, "rescale", false) ? relsvm::rescale_features(handle->spec).spec : handle->spec;
    std::vector<double> beta(spec.dimension(), 0.0);
    if (auto it = req.find("beta"); it != req.end()) {
      beta = it->get<std::vector<double>>();
      if (beta.size() != spec.dimension())
        throw relsvm::ConfigError("beta has " + std::to_string(beta.size()) + " entries, expected " +
                                  std::to_string(spec.dimension()));
    }
    auto tree = relsvm::build_join_tree(spec);
    auto ineqs = relsvm::far_point_inequalities(tree.spec(), beta, o.epsilon);
    const auto& ineq = label == 1 ? ineqs.first : ineqs.second;
    auto counts = relsvm::row_counts(tree, ineq, label, o);
    if (auto it = req.find("columns"); it != req.end()) {
      auto wanted = it->get<std::vector<std::string>>();
      for (const auto& name : wanted) {
        auto a = tree.spec().attribute_id(name);
        if (!a || !tree.spec().feature_index(*a)) throw relsvm::ConfigError("no feature named '" + name + "'");
      }
      std::erase_if(counts.columns, [&](const relsvm::ColumnCounts& c) {
        const auto& n = tree.spec().attributes()[c.attribute];
        return std::find(wanted.begin(), wanted.end(), n) == wanted.end();
      });
    }
    Json j = relsvm::count_json(counts, tree.spec());
    j["beta"] = beta;
    if (field(req, "ladder", false)) {
      auto ladder = relsvm::quantile_ladder(tree, ineq, label, o);
      j["ladder"] = relsvm::ladder_json(ladder);
    }
    *out_json = copy_out(relsvm::dump(j));
    return RELSVM_OK;
  });
}

int relsvm_probe(const relsvm_spec* handle, const char* config_json, char** report_json) {
  return guarded([&] {
    require(handle, "spec");
    require(report_json, "report_json");
    auto cfg = relsvm::probe_config_from_json(parse_request(config_json));
    auto report = relsvm::stability_probe(handle->spec, cfg);
    *report_json = copy_out(relsvm::dump(relsvm::probe_json(report)));
    return RELSVM_OK;
  });
}

int relsvm_oracle(const relsvm_spec* handle, const char* request_json, char** out_json,
                  char** matrix_csv) {
  return guarded([&] {
    require(handle, "spec");
    require(out_json, "out_json");
    Json req = parse_request(request_json);
    check_keys(req, {"lambda", "steps", "cap", "rescale", "exact"}, "oracle request");
    double lambda = field(req, "lambda", 0.1);
    if (!(lambda > 0)) throw relsvm::ConfigError("lambda must be positive");
    std::size_t steps = field<std::size_t>(req, "steps", 1000);
    if (steps < 1) throw relsvm::ConfigError("steps must be at least 1");
    unsigned long long cap = field(req, "cap", relsvm::kDefaultOutputCap);
    relsvm::JoinSpec spec =
        field(req, "rescale", true) ? relsvm::rescale_features(handle->spec).spec : handle->spec;
    auto tree = relsvm::build_join_tree(spec);
    auto x = relsvm::materialize_join(tree, cap);
    if (x.rows() == 0) throw relsvm::EmptyInstance();
    auto base = relsvm::baseline_train(x, lambda, steps);
    Json j{{"format", "relsvm-oracle/1"},
           {"rows", x.rows()},
           {"features", tree.spec().feature_names()},
           {"baseline", relsvm::baseline_json(base, lambda, steps)}};
    if (field(req, "exact", true)) {
      auto sol = relsvm::solve_exact(x, lambda);
      j["exact"] = Json{{"beta", sol.beta},
                        {"objective", sol.objective},
                        {"lower_bound", sol.lower_bound},
                        {"epochs", sol.epochs}};
    }
    if (matrix_csv) {
      relsvm::Table t("design", [&] {
        auto cols = tree.spec().feature_names();
        cols.push_back(tree.spec().label());
        return cols;
      }());
      std::vector<double> row(x.dimension + 1);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        auto p = x.point(i);
        std::copy(p.begin(), p.end(), row.begin());
        row.back() = x.labels[i];
        t.add_row(row);
      }
      *matrix_csv = copy_out(relsvm::format_table_csv(t));
    }
    *out_json = copy_out(relsvm::dump(j));
    return RELSVM_OK;
  });
}

int relsvm_gen(const char* request_json, const char* out_dir, char** out_json) {
  return guarded([&] {
    require(out_dir, "out_dir");
    require(out_json, "out_json");
    Json req = parse_request(request_json);
    std::string kind = field(req, "kind", std::string());
    Json j{{"format", "relsvm-gen/1"}, {"kind", kind}};
    if (kind == "knapsack") {
      check_keys(req, {"kind", "weights", "L", "k"}, "knapsack request");
      auto weights = field(req, "weights", std::vector<double>{});
      double L = field(req, "L", 1.0);
      long long k = field(req, "k", 1LL);
      if (k < 1) throw relsvm::ConfigError("k must be at least 1");
      if (!(L > 0)) throw relsvm::ConfigError("L must be positive");
      auto spec = relsvm::gen_knapsack_instance(weights, L, k);
      relsvm::write_join_spec(spec, out_dir);
      auto subsets = relsvm::count_knapsack_subsets(weights, L);
      j["weights"] = weights;
      j["L"] = L;
      j["k"] = k;
      j["subsets"] = subsets;
      j["g2"] = static_cast<double>(static_cast<long long>(subsets) - k);
    } else if (kind == "stable") {
      check_keys(req,
                 {"kind", "d", "m", "n", "keys", "margin", "noise", "seed", "lambda", "delta", "gamma"},
                 "stable request");
      relsvm::StableInstanceConfig c;
      c.d = field(req, "d", c.d);
      c.m = field(req, "m", c.m);
      c.n = field(req, "n", c.n);
      c.keys = field(req, "keys", c.keys);
      c.margin = field(req, "margin", c.margin);
      c.noise = field(req, "noise", c.noise);
      c.seed = field(req, "seed", c.seed);
      c.lambda = field(req, "lambda", c.lambda);
      c.delta = field(req, "delta", c.delta);
      c.gamma = field(req, "gamma", c.gamma);
      auto inst = relsvm::gen_stable_instance(c);
      relsvm::write_join_spec(inst.spec, out_dir);
      j["config"] = Json{{"d", c.d},           {"m", c.m},         {"n", c.n},
                         {"keys", c.keys},     {"margin", c.margin}, {"noise", c.noise},
                         {"seed", c.seed},     {"lambda", c.lambda}, {"delta", c.delta},
                         {"gamma", c.gamma}};
      j["meta"] = relsvm::to_json(inst.meta);
    } else {
      throw relsvm::ConfigError("gen kind must be 'knapsack' or 'stable'");
    }
    *out_json = copy_out(relsvm::dump(j));
    return RELSVM_OK;
  });
}

}  // extern "C"
