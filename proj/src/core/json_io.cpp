#include "relsvm/json_io.hpp"

#include <initializer_list>
#include <set>

#include "relsvm/errors.hpp"

namespace relsvm {

namespace {

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError(std::string("unknown ") + what + " field '" + k + "'");
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_integer()) throw ConfigError("");
      if (std::is_unsigned_v<T> && it->is_number_integer() && !it->is_number_unsigned() &&
          it->template get<long long>() < 0)
        throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("");
    } else {
      if (!it->is_string()) throw ConfigError("");
    }
    out = it->template get<T>();
  } catch (const ConfigError&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

Json vec(const std::vector<double>& v) { return Json(v); }

}  // namespace

Json to_json(const DescentConfig& c) {
  return Json{{"lambda", c.lambda},
              {"epsilon", c.epsilon},
              {"steps", c.steps},
              {"schedule", step_schedule_name(c.schedule)},
              {"reg_gradient", reg_gradient_name(c.reg_gradient)},
              {"mode", counting_mode_name(c.mode)},
              {"exact_cap", c.exact_cap},
              {"rescale", c.rescale},
              {"threads", c.threads},
              {"seed", c.seed},
              {"fault_scale", c.fault_scale}};
}

DescentConfig descent_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"lambda", "epsilon", "steps", "schedule", "reg_gradient", "mode", "exact_cap",
                  "rescale", "threads", "seed", "fault_scale"},
                 "descent config");
  DescentConfig c;
  read(j, "lambda", c.lambda);
  read(j, "epsilon", c.epsilon);
  read(j, "steps", c.steps);
  std::string s = step_schedule_name(c.schedule);
  read(j, "schedule", s);
  c.schedule = parse_step_schedule(s);
  s = reg_gradient_name(c.reg_gradient);
  read(j, "reg_gradient", s);
  c.reg_gradient = parse_reg_gradient(s);
  s = counting_mode_name(c.mode);
  read(j, "mode", s);
  c.mode = parse_counting_mode(s);
  read(j, "exact_cap", c.exact_cap);
  read(j, "rescale", c.rescale);
  read(j, "threads", c.threads);
  read(j, "seed", c.seed);
  read(j, "fault_scale", c.fault_scale);
  c.validate();
  return c;
}

Json to_json(const RunConfig& c) {
  return Json{{"subcommand", c.subcommand},
              {"spec", c.spec},
              {"descent", to_json(c.descent)},
              {"out", c.out},
              {"verbosity", c.verbosity}};
}

RunConfig run_config_from_json(const Json& j) {
  reject_unknown(j, {"subcommand", "spec", "descent", "out", "verbosity"}, "run config");
  RunConfig c;
  read(j, "subcommand", c.subcommand);
  read(j, "spec", c.spec);
  if (auto it = j.find("descent"); it != j.end()) c.descent = descent_config_from_json(*it);
  read(j, "out", c.out);
  read(j, "verbosity", c.verbosity);
  return c;
}

Json to_json(const CountingStats& s) {
  return Json{{"peak_entries", s.peak_entries}, {"distortion", s.distortion}};
}

Json trace_json(const DescentTrace& trace, const DescentConfig& cfg, const JoinSpec& spec) {
  Json steps = Json::array();
  for (const auto& r : trace.steps) {
    steps.push_back(Json{{"t", r.t},
                         {"beta", vec(r.beta)},
                         {"gradient", vec(r.gradient)},
                         {"eta", r.eta},
                         {"fhat", r.fhat}});
  }
  return Json{{"format", "relsvm-trace/1"},
              {"config", to_json(cfg)},
              {"reg_coefficient", cfg.reg_coefficient()},
              {"features", spec.feature_names()},
              {"rows", trace.rows},
              {"scale_factors", vec(trace.scale_factors)},
              {"steps", std::move(steps)},
              {"summary",
               Json{{"iterations", trace.steps.size()},
                    {"selected", trace.selected},
                    {"beta", vec(trace.beta)},
                    {"fhat", trace.fhat},
                    {"peak_sketch_entries", trace.peak_sketch_entries},
                    {"max_distortion", trace.max_distortion}}}};
}

Json count_json(const CountResult& counts, const JoinSpec& spec) {
  Json cols = Json::array();
  for (const auto& c : counts.columns) {
    cols.push_back(Json{{"attribute", spec.attributes()[c.attribute]},
                        {"values", vec(c.values)},
                        {"counts", vec(c.counts)}});
  }
  return Json{{"format", "relsvm-count/1"},
              {"mode", counting_mode_name(counts.mode)},
              {"epsilon", counts.epsilon},
              {"label", counts.label},
              {"columns", std::move(cols)},
              {"stats", to_json(counts.stats)}};
}

Json ladder_json(const QuantileLadder& l) {
  std::vector<double> counts;
  for (std::size_t k = 0; k < l.num_slots; ++k) counts.push_back(l.slot_count(k));
  return Json{{"label", l.label},
              {"mode", counting_mode_name(l.mode)},
              {"epsilon", l.epsilon},
              {"base", l.base},
              {"label_rows", l.label_rows},
              {"slot_counts", vec(counts)},
              {"thresholds", vec(l.slot_thresholds())},
              {"stats", to_json(l.stats)}};
}

Json to_json(const ProbeConfig& c) {
  return Json{{"alpha", c.alpha},
              {"delta", c.delta},
              {"gamma", c.gamma},
              {"lambda", c.lambda},
              {"budget", c.budget},
              {"directions", c.directions},
              {"seed", c.seed},
              {"solver_tolerance", c.solver_tolerance},
              {"solver_epochs", c.solver_epochs},
              {"cap", c.cap}};
}

ProbeConfig probe_config_from_json(const Json& j) {
  reject_unknown(j,
                 {"alpha", "delta", "gamma", "lambda", "budget", "directions", "seed",
                  "solver_tolerance", "solver_epochs", "cap"},
                 "probe config");
  ProbeConfig c;
  read(j, "alpha", c.alpha);
  read(j, "delta", c.delta);
  read(j, "gamma", c.gamma);
  read(j, "lambda", c.lambda);
  read(j, "budget", c.budget);
  read(j, "directions", c.directions);
  read(j, "seed", c.seed);
  read(j, "solver_tolerance", c.solver_tolerance);
  read(j, "solver_epochs", c.solver_epochs);
  read(j, "cap", c.cap);
  return c;
}

Json probe_json(const StabilityReport& r) {
  auto check = [](const ProbeCheck& c) {
    return Json{{"worst_ratio", c.worst_ratio},
                {"worst_certified", c.worst_certified},
                {"violations", c.violations}};
  };
  Json violations = Json::array();
  for (const auto& v : r.violations) {
    violations.push_back(Json{{"sample", v.sample},
                              {"seed_a", v.seed_a},
                              {"seed_b", v.seed_b},
                              {"condition", v.condition},
                              {"target", v.target},
                              {"ratio", v.ratio},
                              {"beta", vec(v.beta)}});
  }
  return Json{{"format", "relsvm-probe/1"},
              {"config", to_json(r.config)},
              {"samples", r.samples},
              {"sample_seeds", r.sample_seeds},
              {"verdict", r.verdict()},
              {"first_sampled", check(r.first_sampled)},
              {"first_original", check(r.first_original)},
              {"second_sampled", check(r.second_sampled)},
              {"second_original", check(r.second_original)},
              {"max_solver_gap", r.max_solver_gap},
              {"violations", std::move(violations)}};
}

Json to_json(const StableInstanceMeta& m) {
  return Json{{"beta0", vec(m.beta0)}, {"margin", m.margin},   {"flipped", m.flipped},
              {"alpha", m.alpha},      {"delta", m.delta},     {"gamma", m.gamma},
              {"lambda", m.lambda},    {"epsilon", m.epsilon}, {"rows", m.rows}};
}

Json baseline_json(const BaselineResult& r, double lambda, std::size_t steps) {
  return Json{{"lambda", lambda},
              {"steps", steps},
              {"iterations", r.iterations},
              {"stopped_early", r.stopped_early},
              {"beta", vec(r.beta)},
              {"objective", r.objective}};
}

Json meta_json(double seconds) { return Json{{"wall_clock_seconds", seconds}}; }

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace relsvm
