#pragma once

// JSON forms of configurations and results. Every writer is deterministic:
// wall-clock values never appear here (see meta_json).

#include <string>

#include "json.hpp"
#include "relsvm/counting.hpp"
#include "relsvm/stability.hpp"
#include "relsvm/svm.hpp"

namespace relsvm {

using Json = nlohmann::ordered_json;

/// One CLI invocation.
struct RunConfig {
  std::string subcommand = "train";
  std::string spec;
  DescentConfig descent;
  std::string out;
  int verbosity = 0;

  bool operator==(const RunConfig&) const = default;
};

Json to_json(const DescentConfig& cfg);
/// Missing keys keep their defaults; unknown keys and ill-typed values throw
/// ConfigError. The result is validated.
DescentConfig descent_config_from_json(const Json& j);

Json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const Json& j);

Json to_json(const CountingStats& stats);
Json trace_json(const DescentTrace& trace, const DescentConfig& cfg, const JoinSpec& spec);
Json count_json(const CountResult& counts, const JoinSpec& spec);
Json ladder_json(const QuantileLadder& ladder);
Json probe_json(const StabilityReport& report);
Json to_json(const StableInstanceMeta& meta);
Json to_json(const ProbeConfig& cfg);
ProbeConfig probe_config_from_json(const Json& j);
Json baseline_json(const BaselineResult& result, double lambda, std::size_t steps);

/// Wall-clock side record kept apart from the deterministic outputs.
Json meta_json(double seconds);

/// ordered_json dump with two-space indentation and a trailing newline.
std::string dump(const Json& j);

}  // namespace relsvm
