#include "rds/rds.h"

#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "rds/error.hpp"
#include "rds/io.hpp"

struct rds_config {
  rds::io::RunConfig config;
};

struct rds_trajectory {
  rds::Trajectory trajectory;
  rds::InviterMode mode;
  std::optional<rds::SimulatedTrajectory> simulated;
};

struct rds_fit {
  rds::FitResult result;
  nlohmann::json config;
};

namespace {

thread_local std::string last_error;

rds_status status_for(rds::ErrorKind kind) {
  switch (kind) {
    case rds::ErrorKind::InvalidArgument:
      return RDS_ERR_INVALID_ARGUMENT;
    case rds::ErrorKind::Parse:
      return RDS_ERR_PARSE;
    case rds::ErrorKind::Inference:
      return RDS_ERR_INFERENCE;
    case rds::ErrorKind::Io:
      return RDS_ERR_IO;
  }
  return RDS_ERR_INTERNAL;
}

template <typename F>
rds_status guarded(F&& body) {
  try {
    body();
    return RDS_OK;
  } catch (const rds::Error& e) {
    last_error = e.what();
    return status_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return RDS_ERR_PARSE;
  } catch (const std::exception& e) {
    last_error = e.what();
    return RDS_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return RDS_ERR_INTERNAL;
  }
}

void require(const void* pointer, const char* name) {
  if (pointer == nullptr) throw rds::invalid_argument(std::string(name) + " is NULL");
}

char* duplicate(const std::string& text) {
  char* out = new char[text.size() + 1];
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

const rds::io::RunConfig& config_or_default(const rds_config* config) {
  static const rds::io::RunConfig defaults;
  return config ? config->config : defaults;
}

rds_trajectory* from_log(const rds::io::EventLog& log, const rds_config* config) {
  const auto& c = config_or_default(config);
  return new rds_trajectory{rds::io::build_trajectory(log, c), rds::io::resolved_mode(log, c),
                            std::nullopt};
}

nlohmann::json config_json(const rds_config* config, const rds_trajectory* trajectory) {
  return rds::io::resolved_config(config_or_default(config), trajectory->trajectory,
                                  trajectory->mode);
}

}  // namespace

extern "C" {

const char* rds_version(void) {
  static const std::string v = rds::io::version();
  return v.c_str();
}

const char* rds_last_error(void) { return last_error.c_str(); }

void rds_string_free(char* text) { delete[] text; }

rds_status rds_config_load(const char* path, rds_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto c = path ? rds::io::load_run_config(path) : rds::io::RunConfig{};
    *out = new rds_config{std::move(c)};
  });
}

rds_status rds_config_parse(const char* json_text, rds_config** out) {
  return guarded([&] {
    require(json_text, "json_text");
    require(out, "out");
    *out = nullptr;
    nlohmann::json document;
    try {
      document = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
      throw rds::parse_error(std::string("configuration: ") + e.what());
    }
    *out = new rds_config{rds::io::parse_run_config(document)};
  });
}

rds_status rds_config_set_seed(rds_config* config, uint64_t seed) {
  return guarded([&] {
    require(config, "config");
    config->config.seed = seed;
  });
}

rds_status rds_config_to_json(const rds_config* config, char** out) {
  return guarded([&] {
    require(out, "out");
    *out = duplicate(rds::io::dump(rds::io::resolved_config(config_or_default(config))));
  });
}

void rds_config_free(rds_config* config) { delete config; }

rds_status rds_simulate(const rds_config* config, rds_trajectory** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = nullptr;
    const auto sim_config = rds::io::simulation_config(config->config);
    auto simulated = rds::simulate(sim_config);
    *out = new rds_trajectory{simulated.trajectory, sim_config.policy.mode, simulated};
  });
}

rds_status rds_trajectory_truth_json(const rds_trajectory* trajectory, char** out) {
  return guarded([&] {
    require(trajectory, "trajectory");
    require(out, "out");
    if (!trajectory->simulated) {
      throw rds::invalid_argument("trajectory was not simulated; no ground truth");
    }
    *out = duplicate(rds::io::dump(rds::io::truth_json(*trajectory->simulated)));
  });
}

rds_status rds_trajectory_load_csv(const char* path, const rds_config* config,
                                   rds_trajectory** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    const auto log = rds::io::read_event_log(path);
    try {
      *out = from_log(log, config);
    } catch (const rds::Error& e) {
      throw rds::Error(e.kind(), std::string(path) + ": " + e.what());
    }
  });
}

rds_status rds_trajectory_parse_csv(const char* csv_text, const rds_config* config,
                                    rds_trajectory** out) {
  return guarded([&] {
    require(csv_text, "csv_text");
    require(out, "out");
    *out = nullptr;
    std::istringstream in(csv_text);
    *out = from_log(rds::io::parse_event_log(in), config);
  });
}

rds_status rds_trajectory_to_csv(const rds_trajectory* trajectory, char** out) {
  return guarded([&] {
    require(trajectory, "trajectory");
    require(out, "out");
    *out = duplicate(rds::io::format_event_log(trajectory->trajectory));
  });
}

rds_status rds_trajectory_write_csv(const rds_trajectory* trajectory, const char* path) {
  return guarded([&] {
    require(trajectory, "trajectory");
    require(path, "path");
    std::ofstream file(path, std::ios::binary);
    if (!file) throw rds::Error(rds::ErrorKind::Io, std::string("cannot write '") + path + "'");
    file << rds::io::format_event_log(trajectory->trajectory);
    if (!file) throw rds::Error(rds::ErrorKind::Io, std::string("failed writing '") + path + "'");
  });
}

size_t rds_trajectory_recruits(const rds_trajectory* trajectory) {
  return trajectory ? static_cast<size_t>(trajectory->trajectory.recruitment_count()) : 0;
}

void rds_trajectory_free(rds_trajectory* trajectory) { delete trajectory; }

rds_status rds_fit_run(const rds_trajectory* trajectory, const rds_config* config,
                       rds_fit** out) {
  return guarded([&] {
    require(trajectory, "trajectory");
    require(out, "out");
    *out = nullptr;
    auto result = rds::fit(trajectory->trajectory, config_or_default(config).fit);
    *out = new rds_fit{std::move(result), config_json(config, trajectory)};
  });
}

rds_status rds_fit_to_json(const rds_fit* fit, char** out) {
  return guarded([&] {
    require(fit, "fit");
    require(out, "out");
    *out = duplicate(
        rds::io::dump(rds::io::envelope("fit", rds::io::to_json(fit->result), fit->config)));
  });
}

size_t rds_fit_class_count(const rds_fit* fit) { return fit ? fit->result.classes.size() : 0; }

rds_status rds_fit_class(const rds_fit* fit, size_t index, int* degree, double* size,
                         double* size_se, int* ok) {
  return guarded([&] {
    require(fit, "fit");
    if (index >= fit->result.classes.size()) {
      throw rds::invalid_argument("class index " + std::to_string(index) + " out of range");
    }
    const auto& c = fit->result.classes[index];
    if (degree) *degree = c.degree;
    if (size) *size = c.size;
    if (size_se) *size_se = c.size_se;
    if (ok) *ok = c.flag == rds::EstimateFlag::Ok ? 1 : 0;
  });
}

void rds_fit_free(rds_fit* fit) { delete fit; }

rds_status rds_prevalence_json(const rds_trajectory* trajectory, const rds_config* config,
                               char** out) {
  return guarded([&] {
    require(trajectory, "trajectory");
    require(out, "out");
    const auto& c = config_or_default(config);
    const auto fitted = rds::fit(trajectory->trajectory, c.fit);
    const auto estimate =
        rds::estimate_prevalence(trajectory->trajectory, fitted, c.confidence, c.prevalence);
    nlohmann::json result = rds::io::to_json(estimate);
    result["fit"] = rds::io::to_json(fitted);
    *out = duplicate(rds::io::dump(
        rds::io::envelope("prevalence", std::move(result), config_json(config, trajectory))));
  });
}

rds_status rds_test_proportional_json(const rds_trajectory* trajectory,
                                      const rds_config* config, char** out) {
  return guarded([&] {
    require(trajectory, "trajectory");
    require(out, "out");
    const auto& c = config_or_default(config);
    const auto result = rds::lrt_proportional(trajectory->trajectory, c.fit);
    *out = duplicate(rds::io::dump(rds::io::envelope(
        "test-proportional", rds::io::to_json(result), config_json(config, trajectory))));
  });
}

rds_status rds_validate(const char* plan_path, const char* out_dir, int override_seed,
                        uint64_t seed, char** report_json, int* passed) {
  return guarded([&] {
    require(plan_path, "plan_path");
    auto plan = rds::io::load_plan(plan_path);
    if (override_seed) plan.master_seed = seed;
    const auto report = rds::run_experiment(plan);
    const std::string text = rds::io::dump(
        rds::io::envelope("validate", rds::io::to_json(report), rds::io::plan_json(plan)));
    if (out_dir) {
      rds::io::write_metric_tables(report, out_dir);
      const std::string path = std::string(out_dir) + "/report.json";
      std::ofstream file(path, std::ios::binary);
      if (!file) throw rds::Error(rds::ErrorKind::Io, "cannot write '" + path + "'");
      file << text;
    }
    if (report_json) *report_json = duplicate(text);
    if (passed) *passed = report.passed() ? 1 : 0;
  });
}

}  // extern "C"
