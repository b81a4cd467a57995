// rdscp: simulate, fit and validate respondent-driven sampling models.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rds/rds.h"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string input;
  std::string truth;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  bool strict = false;
};

int exit_code(rds_status status) {
  switch (status) {
    case RDS_OK:
      return 0;
    case RDS_ERR_PARSE:
      return 2;
    case RDS_ERR_INFERENCE:
      return 3;
    case RDS_ERR_IO:
      return 4;
    default:
      return 1;
  }
}

int fail(rds_status status) {
  std::cerr << "rdscp: " << rds_last_error() << "\n";
  return exit_code(status);
}

struct Freer {
  void operator()(rds_config* p) const { rds_config_free(p); }
  void operator()(rds_trajectory* p) const { rds_trajectory_free(p); }
  void operator()(rds_fit* p) const { rds_fit_free(p); }
  void operator()(char* p) const { rds_string_free(p); }
};

template <typename T>
using Owned = std::unique_ptr<T, Freer>;

bool write_text(const std::string& path, const char* text) {
  if (path.empty()) {
    std::fputs(text, stdout);
    return true;
  }
  std::ofstream file(path, std::ios::binary);
  file << text;
  return static_cast<bool>(file);
}

rds_status load_config(const Options& o, Owned<rds_config>& out) {
  rds_config* raw = nullptr;
  rds_status s = rds_config_load(o.config.empty() ? nullptr : o.config.c_str(), &raw);
  out.reset(raw);
  if (s == RDS_OK && o.seed) s = rds_config_set_seed(out.get(), *o.seed);
  return s;
}

rds_status load_events(const Options& o, const rds_config* config,
                       Owned<rds_trajectory>& out) {
  rds_trajectory* raw = nullptr;
  const rds_status s = rds_trajectory_load_csv(o.input.c_str(), config, &raw);
  out.reset(raw);
  return s;
}

std::string sidecar_path(const std::string& events) {
  const auto dot = events.find_last_of('.');
  const auto slash = events.find_last_of('/');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (has_ext ? events.substr(0, dot) : events) + ".truth.json";
}

int run_simulate(const Options& o) {
  Owned<rds_config> config;
  if (auto s = load_config(o, config); s != RDS_OK) return fail(s);
  rds_trajectory* raw = nullptr;
  if (auto s = rds_simulate(config.get(), &raw); s != RDS_OK) return fail(s);
  Owned<rds_trajectory> trajectory(raw);
  char* csv = nullptr;
  if (auto s = rds_trajectory_to_csv(trajectory.get(), &csv); s != RDS_OK) return fail(s);
  Owned<char> csv_owned(csv);
  if (!write_text(o.out, csv)) {
    std::cerr << "rdscp: cannot write '" << o.out << "'\n";
    return 4;
  }
  const std::string truth_path = !o.truth.empty() ? o.truth
                                 : !o.out.empty() ? sidecar_path(o.out)
                                                  : std::string();
  if (!truth_path.empty()) {
    char* truth = nullptr;
    if (auto s = rds_trajectory_truth_json(trajectory.get(), &truth); s != RDS_OK) {
      return fail(s);
    }
    Owned<char> truth_owned(truth);
    if (!write_text(truth_path, truth)) {
      std::cerr << "rdscp: cannot write '" << truth_path << "'\n";
      return 4;
    }
  }
  if (!o.quiet) {
    std::cerr << "simulated " << rds_trajectory_recruits(trajectory.get()) << " recruits\n";
  }
  return 0;
}

template <typename Producer>
int run_report(const Options& o, Producer produce) {
  Owned<rds_config> config;
  if (auto s = load_config(o, config); s != RDS_OK) return fail(s);
  Owned<rds_trajectory> trajectory;
  if (auto s = load_events(o, config.get(), trajectory); s != RDS_OK) return fail(s);
  char* text = nullptr;
  if (auto s = produce(trajectory.get(), config.get(), &text); s != RDS_OK) return fail(s);
  Owned<char> owned(text);
  if (!write_text(o.out, text)) {
    std::cerr << "rdscp: cannot write '" << o.out << "'\n";
    return 4;
  }
  return 0;
}

rds_status fit_json(const rds_trajectory* trajectory, const rds_config* config, char** out) {
  rds_fit* raw = nullptr;
  const rds_status s = rds_fit_run(trajectory, config, &raw);
  if (s != RDS_OK) return s;
  Owned<rds_fit> fit(raw);
  return rds_fit_to_json(fit.get(), out);
}

int run_validate(const Options& o) {
  char* report = nullptr;
  int passed = 0;
  const rds_status s =
      rds_validate(o.input.c_str(), o.out.empty() ? nullptr : o.out.c_str(), o.seed ? 1 : 0,
                   o.seed.value_or(0), o.out.empty() ? &report : nullptr, &passed);
  if (s != RDS_OK) return fail(s);
  if (report) {
    Owned<char> owned(report);
    std::fputs(report, stdout);
  }
  if (!o.quiet) std::cerr << (passed ? "all checks passed\n" : "some checks failed\n");
  return o.strict && !passed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Respondent-driven sampling as a counting process"};
  app.set_version_flag("--version", std::string(rds_version()));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool config) {
    if (config) sub->add_option("--config", o.config, "Run configuration (JSON)");
    sub->add_option("--out", o.out, "Output path; standard output when omitted");
    sub->add_option("--seed", o.seed, "Overrides the configured seed");
    sub->add_flag("--quiet", o.quiet, "Suppress progress messages");
  };

  auto* simulate = app.add_subcommand("simulate", "Simulate an event log");
  common(simulate, true);
  simulate->add_option("--truth", o.truth,
                       "Ground-truth sidecar (default: <out>.truth.json)");

  auto* fit = app.add_subcommand("fit", "Estimate class sizes and rates");
  fit->add_option("events", o.input, "Event log CSV")->required();
  common(fit, true);

  auto* prevalence = app.add_subcommand("prevalence", "Estimate trait prevalence");
  prevalence->add_option("events", o.input, "Event log CSV")->required();
  common(prevalence, true);

  auto* lrt = app.add_subcommand("test-proportional",
                                 "Test recruitment rates proportional to degree");
  lrt->add_option("events", o.input, "Event log CSV")->required();
  common(lrt, true);

  auto* validate = app.add_subcommand("validate", "Run a Monte Carlo validation plan");
  validate->add_option("plan", o.input, "Experiment plan (JSON)")->required();
  common(validate, false);
  validate->add_flag("--strict", o.strict, "Exit with 1 when a check fails");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (simulate->parsed()) {
    if (o.config.empty()) {
      std::cerr << "rdscp: simulate needs --config\n";
      return 2;
    }
    return run_simulate(o);
  }
  if (fit->parsed()) return run_report(o, fit_json);
  if (prevalence->parsed()) return run_report(o, rds_prevalence_json);
  if (lrt->parsed()) return run_report(o, rds_test_proportional_json);
  return run_validate(o);
}
