#pragma once

// Event-log CSV, run configuration and JSON/CSV report formats.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rds/harness.hpp"
#include "rds/inference.hpp"
#include "rds/ode_limit.hpp"
#include "rds/prevalence.hpp"
#include "rds/simulator.hpp"

namespace rds::io {

using nlohmann::json;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Rows of an event log. Seeds are kept apart from the counting process.
struct EventLog {
  std::vector<Event> events;      // sorted by (time, source_row)
  std::vector<SeedRecord> seeds;
  bool has_removals = false;
  double last_time = 0.0;
};

/// Header `time,degree,outcome,kind`. Rows may come in any order. Errors
/// carry the 1-based line number.
EventLog parse_event_log(std::istream& in);
EventLog read_event_log(const std::filesystem::path& path);

/// Seeds first (time 0), then events in stored order.
std::string format_event_log(const Trajectory& trajectory);

/// Options read from a run configuration. Every default lives here.
struct RunConfig {
  std::optional<PopulationSpec> population;  // simulation only
  std::optional<InviterMode> mode;           // unset: inferred from the log
  double gamma = 0.0;
  std::optional<std::int64_t> initial_inviters;
  std::optional<StoppingRule> stop;
  std::optional<double> tau;                 // observation horizon
  FitOptions fit;                            // m_min 10, cap factor 1e6
  double confidence = 0.95;
  std::uint64_t seed = 1;
  PrevalenceOptions prevalence;              // seed outcomes excluded
};

/// Unknown keys and wrong types are parse errors naming the JSON path.
RunConfig parse_run_config(const json& document);
RunConfig load_run_config(const std::filesystem::path& path);
/// The configuration with every default filled in.
json resolved_config(const RunConfig& config);

/// Needs population, inviters.initial and stop.
SimConfig simulation_config(const RunConfig& config);

/// Rebuilds the observed path. tau: observation.tau, else stop.max_time,
/// else the last event time. I_0: number of seed rows, else inviters.initial.
/// The inviter mode defaults to all_active, or removal_rate when the log has
/// removal rows.
Trajectory build_trajectory(const EventLog& log, const RunConfig& config);
InviterMode resolved_mode(const EventLog& log, const RunConfig& config);

/// resolved_config() with tau, I_0 and the inviter mode taken from the
/// trajectory actually analysed.
json resolved_config(const RunConfig& config, const Trajectory& trajectory,
                     InviterMode mode);

json to_json(const FitResult& fit);
json to_json(const PrevalenceEstimate& estimate);
json to_json(const LrtResult& result);
json to_json(const ExperimentReport& report);
/// Grid, recruited fractions per class and inviter density.
json to_json(const LimitPath& path);
json truth_json(const SimulatedTrajectory& simulated);

/// Adds tool name, version and the resolved configuration.
json envelope(const std::string& command, json result, json config);

ExperimentPlan parse_plan(const json& document);
ExperimentPlan load_plan(const std::filesystem::path& path);
json plan_json(const ExperimentPlan& plan);

/// Flat tables for plotting: rungs.csv, classes.csv, checks.csv and
/// replicates.csv.
void write_metric_tables(const ExperimentReport& report,
                         const std::filesystem::path& directory);

/// Two-space indented JSON followed by a newline.
std::string dump(const json& document);

std::string version();

}  // namespace rds::io
