#include "rds/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rds/error.hpp"

#ifndef RDSCP_VERSION
#define RDSCP_VERSION "0.0.0"
#endif

namespace rds::io {

std::string version() { return RDSCP_VERSION; }

std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::string dump(const json& document) { return document.dump(2) + "\n"; }

// ---------------------------------------------------------------- event log

namespace {

const char* const kHeader = "time,degree,outcome,kind";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  for (auto& f : fields) {
    const auto first = f.find_first_not_of(" \t");
    const auto last = f.find_last_not_of(" \t");
    f = first == std::string::npos ? std::string() : f.substr(first, last - first + 1);
  }
  return fields;
}

std::string at_line(std::int64_t line) { return "line " + std::to_string(line) + ": "; }

double parse_time(const std::string& text, std::int64_t line) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto result = std::from_chars(text.data(), end, value);
  if (text.empty() || result.ec != std::errc() || result.ptr != end) {
    throw parse_error(at_line(line) + "time '" + text + "' is not a number");
  }
  if (!std::isfinite(value) || value < 0.0) {
    throw parse_error(at_line(line) + "time must be finite and non-negative");
  }
  return value;
}

int parse_degree(const std::string& text, std::int64_t line) {
  int value = 0;
  const auto* end = text.data() + text.size();
  const auto result = std::from_chars(text.data(), end, value);
  if (text.empty() || result.ec != std::errc() || result.ptr != end || value < 1) {
    throw parse_error(at_line(line) + "degree '" + text + "' is not a positive integer");
  }
  return value;
}

std::optional<bool> parse_outcome(const std::string& text, std::int64_t line) {
  if (text.empty()) return std::nullopt;
  if (text == "0") return false;
  if (text == "1") return true;
  throw parse_error(at_line(line) + "outcome '" + text + "' must be 0, 1 or empty");
}

}  // namespace

EventLog parse_event_log(std::istream& in) {
  EventLog log;
  std::string line;
  std::int64_t number = 0;
  bool header_seen = false;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (!header_seen) {
      if (line != kHeader) {
        throw parse_error(at_line(number) + "expected header '" + std::string(kHeader) +
                          "', found '" + line + "'");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw parse_error(at_line(number) + "expected 4 fields, found " +
                        std::to_string(fields.size()));
    }
    ++rows;
    const double time = parse_time(fields[0], number);
    const std::string& kind = fields[3];
    if (kind == "recruit") {
      Event e;
      e.time = time;
      e.degree = parse_degree(fields[1], number);
      e.infected = parse_outcome(fields[2], number);
      e.kind = EventKind::Recruitment;
      e.source_row = number;
      log.events.push_back(e);
    } else if (kind == "removal") {
      if (!fields[1].empty() || !fields[2].empty()) {
        throw parse_error(at_line(number) + "removal rows carry no degree or outcome");
      }
      Event e;
      e.time = time;
      e.kind = EventKind::InviterRemoval;
      e.source_row = number;
      log.events.push_back(e);
      log.has_removals = true;
    } else if (kind == "seed") {
      if (time != 0.0) throw parse_error(at_line(number) + "seed rows must have time 0");
      log.seeds.push_back({parse_degree(fields[1], number), parse_outcome(fields[2], number)});
    } else {
      throw parse_error(at_line(number) + "kind '" + kind +
                        "' must be recruit, removal or seed");
    }
  }
  if (!header_seen) throw parse_error("event log is empty");
  if (rows == 0) throw parse_error("event log has a header but no rows");
  std::stable_sort(log.events.begin(), log.events.end(), [](const Event& a, const Event& b) {
    return a.time < b.time || (a.time == b.time && a.source_row < b.source_row);
  });
  for (const auto& e : log.events) log.last_time = std::max(log.last_time, e.time);
  return log;
}

EventLog read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open event log '" + path.string() + "'");
  try {
    return parse_event_log(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string format_event_log(const Trajectory& trajectory) {
  std::string out = std::string(kHeader) + "\n";
  auto outcome = [](const std::optional<bool>& y) {
    return y ? std::string(*y ? "1" : "0") : std::string();
  };
  for (const auto& s : trajectory.seeds()) {
    out += "0," + std::to_string(s.degree) + "," + outcome(s.infected) + ",seed\n";
  }
  for (const auto& e : trajectory.events()) {
    if (e.kind == EventKind::Recruitment) {
      out += format_double(e.time) + "," + std::to_string(e.degree) + "," +
             outcome(e.infected) + ",recruit\n";
    } else {
      out += format_double(e.time) + ",,,removal\n";
    }
  }
  return out;
}

// ------------------------------------------------------------ configuration

namespace {

std::string child(const std::string& path, const std::string& key) {
  return path + "/" + key;
}

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw parse_error(path + ": expected an object");
  return j;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& path) {
  require_object(j, path.empty() ? "/" : path);
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    if (!known) throw parse_error(child(path, key) + ": unknown key");
  }
}

// Null stands for "unset", as written by resolved_config().
bool has(const json& j, const char* key) { return j.contains(key) && !j[key].is_null(); }

double number_at(const json& j, const std::string& path) {
  if (!j.is_number()) throw parse_error(path + ": expected a number");
  return j.get<double>();
}

std::int64_t integer_at(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw parse_error(path + ": expected an integer");
  return j.get<std::int64_t>();
}

std::uint64_t unsigned_at(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    throw parse_error(path + ": expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

bool bool_at(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw parse_error(path + ": expected true or false");
  return j.get<bool>();
}

std::string string_at(const json& j, const std::string& path) {
  if (!j.is_string()) throw parse_error(path + ": expected a string");
  return j.get<std::string>();
}

const json& array_at(const json& j, const std::string& path) {
  if (!j.is_array()) throw parse_error(path + ": expected an array");
  return j;
}

double positive_at(const json& j, const std::string& path) {
  const double v = number_at(j, path);
  if (!(v > 0.0) || !std::isfinite(v)) throw parse_error(path + ": must be positive");
  return v;
}

double probability_at(const json& j, const std::string& path) {
  const double v = number_at(j, path);
  if (!(v > 0.0 && v < 1.0)) throw parse_error(path + ": must lie in (0, 1)");
  return v;
}

InviterMode mode_at(const json& j, const std::string& path) {
  const auto name = string_at(j, path);
  try {
    return inviter_mode_from_string(name);
  } catch (const Error&) {
    throw parse_error(path + ": mode '" + name +
                      "' must be all_active, removal_rate or fixed_pool");
  }
}

json fit_options_json(const FitOptions& fit) {
  return {{"min_class_occupancy", fit.min_class_occupancy},
          {"size_cap_factor", fit.solver.cap_factor},
          {"size_lower_offset", fit.solver.lower_offset}};
}

FitOptions parse_fit_options(const json& j, const std::string& path) {
  check_keys(j, {"min_class_occupancy", "size_cap_factor", "size_lower_offset"}, path);
  FitOptions fit;
  if (j.contains("min_class_occupancy")) {
    fit.min_class_occupancy =
        integer_at(j["min_class_occupancy"], child(path, "min_class_occupancy"));
    if (fit.min_class_occupancy < 1) {
      throw parse_error(child(path, "min_class_occupancy") + ": must be at least 1");
    }
  }
  if (j.contains("size_cap_factor")) {
    fit.solver.cap_factor = number_at(j["size_cap_factor"], child(path, "size_cap_factor"));
    if (!(fit.solver.cap_factor > 1.0)) {
      throw parse_error(child(path, "size_cap_factor") + ": must exceed 1");
    }
  }
  if (j.contains("size_lower_offset")) {
    fit.solver.lower_offset =
        positive_at(j["size_lower_offset"], child(path, "size_lower_offset"));
  }
  return fit;
}

PopulationSpec parse_population(const json& j, const std::string& path) {
  check_keys(j, {"classes", "max_degree"}, path);
  if (!j.contains("classes")) throw parse_error(child(path, "classes") + ": missing");
  const std::string cpath = child(path, "classes");
  const auto& arr = array_at(j["classes"], cpath);
  std::vector<DegreeClass> classes;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = child(cpath, std::to_string(i));
    const auto& c = arr[i];
    check_keys(c, {"degree", "size", "beta", "infected"}, p);
    for (const char* key : {"degree", "size", "beta"}) {
      if (!c.contains(key)) throw parse_error(child(p, key) + ": missing");
    }
    DegreeClass dc;
    dc.degree = static_cast<int>(integer_at(c["degree"], child(p, "degree")));
    dc.size = integer_at(c["size"], child(p, "size"));
    dc.beta = number_at(c["beta"], child(p, "beta"));
    dc.infected = c.contains("infected") ? integer_at(c["infected"], child(p, "infected")) : 0;
    classes.push_back(dc);
  }
  const int bound = j.contains("max_degree")
                        ? static_cast<int>(integer_at(j["max_degree"], child(path, "max_degree")))
                        : kDefaultMaxDegree;
  try {
    return PopulationSpec(std::move(classes), bound);
  } catch (const Error& e) {
    throw parse_error(cpath + ": " + e.what());
  }
}

StoppingRule parse_stop(const json& j, const std::string& path) {
  check_keys(j, {"max_time", "max_sample", "min_class_exhausted"}, path);
  if (j.size() != 1) {
    throw parse_error(path + ": give exactly one of max_time, max_sample, min_class_exhausted");
  }
  if (j.contains("max_time")) return MaxTime{positive_at(j["max_time"], child(path, "max_time"))};
  if (j.contains("max_sample")) {
    const auto n = integer_at(j["max_sample"], child(path, "max_sample"));
    if (n < 0) throw parse_error(child(path, "max_sample") + ": must be non-negative");
    return MaxSample{n};
  }
  if (!bool_at(j["min_class_exhausted"], child(path, "min_class_exhausted"))) {
    throw parse_error(child(path, "min_class_exhausted") + ": only true is meaningful");
  }
  return MinClassExhausted{};
}

json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw parse_error(path.string() + ": " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  check_keys(j, {"population", "inviters", "stop", "observation", "fit", "confidence", "seed",
                 "prevalence"},
             "");
  RunConfig c;
  if (has(j, "population")) c.population = parse_population(j["population"], "/population");
  if (has(j, "inviters")) {
    const auto& inv = j["inviters"];
    check_keys(inv, {"mode", "gamma", "initial"}, "/inviters");
    if (has(inv, "mode")) c.mode = mode_at(inv["mode"], "/inviters/mode");
    if (has(inv, "gamma")) {
      c.gamma = number_at(inv["gamma"], "/inviters/gamma");
      if (!(c.gamma >= 0.0)) throw parse_error("/inviters/gamma: must be non-negative");
    }
    if (has(inv, "initial")) {
      c.initial_inviters = integer_at(inv["initial"], "/inviters/initial");
      if (*c.initial_inviters < 1) throw parse_error("/inviters/initial: must be at least 1");
    }
  }
  if (has(j, "stop")) c.stop = parse_stop(j["stop"], "/stop");
  if (has(j, "observation")) {
    check_keys(j["observation"], {"tau"}, "/observation");
    if (has(j["observation"], "tau")) {
      c.tau = positive_at(j["observation"]["tau"], "/observation/tau");
    }
  }
  if (has(j, "fit")) c.fit = parse_fit_options(j["fit"], "/fit");
  if (has(j, "confidence")) c.confidence = probability_at(j["confidence"], "/confidence");
  if (has(j, "seed")) c.seed = unsigned_at(j["seed"], "/seed");
  if (has(j, "prevalence")) {
    check_keys(j["prevalence"], {"include_seed_outcomes"}, "/prevalence");
    if (has(j["prevalence"], "include_seed_outcomes")) {
      c.prevalence.include_seed_outcomes = bool_at(j["prevalence"]["include_seed_outcomes"],
                                                   "/prevalence/include_seed_outcomes");
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const json document = parse_json_file(path);
  try {
    return parse_run_config(document);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

json resolved_config(const RunConfig& c) {
  json out = json::object();
  if (c.population) {
    json classes = json::array();
    for (const auto& k : c.population->classes()) {
      classes.push_back(
          {{"degree", k.degree}, {"size", k.size}, {"beta", k.beta}, {"infected", k.infected}});
    }
    out["population"] = {{"classes", classes}};
  }
  json inviters = {{"gamma", c.gamma}};
  inviters["mode"] = c.mode ? json(to_string(*c.mode)) : json(nullptr);
  inviters["initial"] = c.initial_inviters ? json(*c.initial_inviters) : json(nullptr);
  out["inviters"] = inviters;
  if (c.stop) {
    out["stop"] = std::visit(
        [](const auto& rule) -> json {
          using T = std::decay_t<decltype(rule)>;
          if constexpr (std::is_same_v<T, MaxTime>) return {{"max_time", rule.horizon}};
          if constexpr (std::is_same_v<T, MaxSample>) return {{"max_sample", rule.recruits}};
          if constexpr (std::is_same_v<T, MinClassExhausted>) {
            return {{"min_class_exhausted", true}};
          }
        },
        *c.stop);
  } else {
    out["stop"] = nullptr;
  }
  out["observation"] = {{"tau", c.tau ? json(*c.tau) : json(nullptr)}};
  out["fit"] = fit_options_json(c.fit);
  out["confidence"] = c.confidence;
  out["seed"] = c.seed;
  out["prevalence"] = {{"include_seed_outcomes", c.prevalence.include_seed_outcomes}};
  return out;
}

SimConfig simulation_config(const RunConfig& c) {
  if (!c.population) throw parse_error("/population: required for simulation");
  if (!c.initial_inviters) throw parse_error("/inviters/initial: required for simulation");
  if (!c.stop) throw parse_error("/stop: required for simulation");
  InviterPolicy policy{c.mode.value_or(InviterMode::AllActive), c.gamma, *c.initial_inviters};
  return SimConfig{*c.population, policy, *c.stop, c.seed};
}

InviterMode resolved_mode(const EventLog& log, const RunConfig& c) {
  return c.mode.value_or(log.has_removals ? InviterMode::RemovalRate : InviterMode::AllActive);
}

json resolved_config(const RunConfig& c, const Trajectory& trajectory, InviterMode mode) {
  json out = resolved_config(c);
  out["inviters"]["mode"] = to_string(mode);
  out["inviters"]["initial"] = trajectory.initial_inviters();
  out["observation"]["tau"] = trajectory.tau();
  return out;
}

Trajectory build_trajectory(const EventLog& log, const RunConfig& c) {
  const InviterMode mode = resolved_mode(log, c);
  if (mode == InviterMode::FixedPool && log.has_removals) {
    throw parse_error("/inviters/mode: fixed_pool cannot be combined with removal rows");
  }
  std::int64_t initial = 0;
  if (!log.seeds.empty()) {
    initial = static_cast<std::int64_t>(log.seeds.size());
    if (c.initial_inviters && *c.initial_inviters != initial) {
      throw parse_error("/inviters/initial: " + std::to_string(*c.initial_inviters) +
                        " disagrees with the " + std::to_string(initial) + " seed rows");
    }
  } else if (c.initial_inviters) {
    initial = *c.initial_inviters;
  } else {
    throw parse_error("/inviters/initial: needed when the event log has no seed rows");
  }
  double tau = log.last_time;
  std::string tau_source = "the last event time";
  if (c.tau) {
    tau = *c.tau;
    tau_source = "/observation/tau";
  } else if (c.stop && std::holds_alternative<MaxTime>(*c.stop)) {
    tau = std::get<MaxTime>(*c.stop).horizon;
    tau_source = "/stop/max_time";
  }
  if (tau < log.last_time) {
    throw parse_error(tau_source + ": " + format_double(tau) +
                      " is earlier than the last event at " + format_double(log.last_time));
  }
  if (!(tau > 0.0)) throw parse_error("observation horizon must be positive");
  std::vector<int> degrees;
  if (c.population) degrees = c.population->degrees();
  try {
    return Trajectory(log.events, log.seeds, initial, tau, accounting_for(mode),
                      std::move(degrees));
  } catch (const Error& e) {
    throw parse_error(std::string("event log: ") + e.what());
  }
}

// ------------------------------------------------------------------ results

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json interval_json(const Interval& ci) { return {{"lower", ci.lower}, {"upper", ci.upper}}; }

json summary_json(const EstimatorSummary& s) {
  return {{"truth", s.truth},
          {"mean", s.mean},
          {"bias", s.bias},
          {"bias_se", s.bias_se},
          {"empirical_variance", s.empirical_variance},
          {"mean_predicted_variance", s.mean_predicted_variance},
          {"variance_ratio", s.variance_ratio},
          {"coverage", s.coverage},
          {"count", s.count}};
}

json scenario_json(const Scenario& s) {
  json classes = json::array();
  for (const auto& c : s.classes) {
    classes.push_back({{"degree", c.degree},
                       {"density", c.density},
                       {"beta", c.beta},
                       {"prevalence", c.prevalence}});
  }
  return {{"name", s.name},
          {"classes", classes},
          {"inviters",
           {{"mode", to_string(s.mode)},
            {"gamma", s.gamma},
            {"initial_fraction", s.initial_fraction}}},
          {"horizon", s.horizon}};
}

json tolerances_json(const Tolerances& t) {
  return {{"consistency_median_rel_error", t.consistency_median_rel_error},
          {"ks_critical_coefficient", t.ks_critical_coefficient},
          {"coverage_low", t.coverage_low},
          {"coverage_high", t.coverage_high},
          {"prevalence_variance_rel", t.prevalence_variance_rel},
          {"lrt_level", t.lrt_level},
          {"lrt_size_low", t.lrt_size_low},
          {"lrt_size_high", t.lrt_size_high},
          {"lrt_power", t.lrt_power},
          {"baseline_gap_se", t.baseline_gap_se},
          {"kurtz_slope_low", t.kurtz_slope_low},
          {"kurtz_slope_high", t.kurtz_slope_high},
          {"degenerate_fraction", t.degenerate_fraction}};
}

}  // namespace

json to_json(const FitResult& fit) {
  json classes = json::array();
  for (const auto& c : fit.classes) {
    classes.push_back({{"degree", c.degree},
                       {"recruited", c.recruited},
                       {"flag", to_string(c.flag)},
                       {"size", c.size},
                       {"size_rounded", c.flag == EstimateFlag::NonIdentifiable
                                            ? json(nullptr)
                                            : json(c.rounded_size())},
                       {"size_se", c.size_se},
                       {"beta", c.beta},
                       {"beta_se", c.beta_se},
                       {"rate", c.rate},
                       {"note", c.note}});
  }
  json pooling = json::array();
  for (const auto& p : fit.pooling) {
    pooling.push_back(
        {{"from_degree", p.from_degree}, {"into_degree", p.into_degree}, {"recruits", p.recruits}});
  }
  return {{"classes", classes},
          {"pooling", pooling},
          {"all_ok", fit.all_ok()},
          {"total_size", fit.total_size},
          {"loglik", fit.loglik},
          {"parameter_order", "size_1..size_d, beta_1..beta_d"},
          {"covariance", fit.covariance ? matrix_json(*fit.covariance) : json(nullptr)},
          {"size_beta_covariance", fit.size_beta_covariance
                                       ? matrix_json(*fit.size_beta_covariance)
                                       : json(nullptr)},
          {"diagnostics", fit.diagnostics}};
}

json to_json(const PrevalenceEstimate& e) {
  json classes = json::array();
  for (const auto& c : e.classes) {
    classes.push_back({{"degree", c.degree},
                       {"sampled", c.sampled},
                       {"positives", c.positives},
                       {"p_hat", c.p_hat},
                       {"p_variance", c.p_variance},
                       {"weight", c.weight},
                       {"weight_variance", c.weight_variance}});
  }
  return {{"estimate", e.estimate},
          {"variance", e.variance},
          {"weight_term", e.weight_term},
          {"within_term", e.within_term},
          {"confidence", e.confidence},
          {"ci", interval_json(e.ci)},
          {"classes", classes},
          {"population",
           {{"size", e.population.size},
            {"variance", e.population.variance},
            {"ci", interval_json(e.population.ci)},
            {"lower_bound", e.population.lower_bound},
            {"sampled", e.population.sampled}}}};
}

json to_json(const LrtResult& r) {
  return {{"statistic", r.statistic},
          {"dof", r.dof},
          {"p_value", r.p_value},
          {"loglik_free", r.loglik_free},
          {"loglik_constrained", r.loglik_constrained},
          {"proportionality", r.proportionality},
          {"degrees", r.degrees}};
}

json to_json(const LimitPath& path) {
  json classes = json::array();
  for (std::size_t k = 0; k < path.class_count(); ++k) {
    const auto& c = path.classes()[k];
    std::vector<double> x;
    x.reserve(path.grid().size());
    for (std::size_t j = 0; j < path.grid().size(); ++j) x.push_back(path.recruited_at(k, j));
    classes.push_back(
        {{"degree", c.degree}, {"density", c.density}, {"beta", c.beta}, {"recruited", x}});
  }
  std::vector<double> inviters;
  inviters.reserve(path.grid().size());
  for (std::size_t j = 0; j < path.grid().size(); ++j) inviters.push_back(path.inviters_at(j));
  return {{"policy",
           {{"mode", to_string(path.policy().mode)},
            {"initial_density", path.policy().initial_density},
            {"gamma", path.policy().gamma}}},
          {"grid", std::vector<double>(path.grid().begin(), path.grid().end())},
          {"classes", classes},
          {"inviters", inviters}};
}

json truth_json(const SimulatedTrajectory& s) {
  json classes = json::array();
  for (std::size_t k = 0; k < s.truth.class_count(); ++k) {
    const auto& c = s.truth.at(k);
    const auto idx = s.trajectory.class_index(c.degree);
    classes.push_back({{"degree", c.degree},
                       {"size", c.size},
                       {"beta", c.beta},
                       {"infected", c.infected},
                       {"recruited", idx ? s.trajectory.final_count(*idx) : 0}});
  }
  std::int64_t infected = 0;
  for (const auto& c : s.truth.classes()) infected += c.infected;
  return {{"classes", classes},
          {"total_size", s.truth.total_size()},
          {"prevalence", static_cast<double>(infected) / static_cast<double>(s.truth.total_size())},
          {"seeds", s.trajectory.seeds().size()},
          {"recruits", s.trajectory.recruitment_count()},
          {"tau", s.trajectory.tau()},
          {"termination", to_string(s.termination)}};
}

json plan_json(const ExperimentPlan& p) {
  json scenarios = json::array();
  for (const auto& s : p.scenarios) scenarios.push_back(scenario_json(s));
  json metrics = json::array();
  for (auto m : p.metrics) metrics.push_back(to_string(m));
  return {{"name", p.name},
          {"seed", p.master_seed},
          {"ladder", p.ladder},
          {"replicates", p.replicates},
          {"confidence", p.confidence},
          {"threads", p.threads},
          {"scenarios", scenarios},
          {"metrics", metrics},
          {"fit", fit_options_json(p.fit)},
          {"tolerances", tolerances_json(p.tolerances)}};
}

json to_json(const ExperimentReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"scenario", c.scenario},
                      {"name", c.name},
                      {"value", c.value},
                      {"low", c.low},
                      {"high", std::isfinite(c.high) ? json(c.high) : json("inf")},
                      {"passed", c.passed},
                      {"detail", c.detail}});
  }
  json scenarios = json::array();
  for (const auto& s : report.scenarios) {
    json rungs = json::array();
    for (const auto& r : s.rungs) {
      json classes = json::array();
      for (const auto& c : r.classes) {
        classes.push_back({{"degree", c.degree},
                           {"true_size", c.true_size},
                           {"true_density", c.true_density},
                           {"bias", c.bias},
                           {"rmse", c.rmse},
                           {"empirical_variance", c.empirical_variance},
                           {"mean_predicted_variance", c.mean_predicted_variance},
                           {"variance_ratio", c.variance_ratio},
                           {"median_abs_rel_error", c.median_abs_rel_error},
                           {"coverage", c.coverage},
                           {"normality",
                            {{"skewness", c.normality.skewness},
                             {"excess_kurtosis", c.normality.excess_kurtosis},
                             {"ks_distance", c.normality.ks_distance},
                             {"count", c.normality.count}}}});
      }
      rungs.push_back({{"scale", r.scale},
                       {"replicates", r.replicates},
                       {"fitted", r.fitted},
                       {"all_ok", r.all_ok},
                       {"non_identifiable", r.non_identifiable},
                       {"truncated", r.truncated},
                       {"degenerate", r.degenerate},
                       {"classes", classes},
                       {"prevalence", summary_json(r.prevalence)},
                       {"population", summary_json(r.population)},
                       {"baseline", summary_json(r.baseline)},
                       {"lrt_rejection_rate", r.lrt_rejection_rate},
                       {"lrt_count", r.lrt_count},
                       {"median_sup_norm", r.median_sup_norm}});
    }
    scenarios.push_back({{"name", s.name},
                         {"proportional", s.proportional},
                         {"kurtz_slope", s.kurtz_slope},
                         {"rungs", rungs}});
  }
  return {{"passed", report.passed()},
          {"checks", checks},
          {"warnings", report.warnings},
          {"scenarios", scenarios}};
}

json envelope(const std::string& command, json result, json config) {
  return {{"tool", "rdscp"},
          {"version", version()},
          {"command", command},
          {"config", std::move(config)},
          {"result", std::move(result)}};
}

// -------------------------------------------------------------------- plans

namespace {

Scenario parse_scenario(const json& j, const std::string& path) {
  if (j.is_string()) {
    try {
      return standard_scenario(j.get<std::string>());
    } catch (const Error& e) {
      throw parse_error(path + ": " + e.what());
    }
  }
  check_keys(j, {"name", "classes", "inviters", "horizon"}, path);
  for (const char* key : {"name", "classes", "horizon"}) {
    if (!j.contains(key)) throw parse_error(child(path, key) + ": missing");
  }
  Scenario s;
  s.name = string_at(j["name"], child(path, "name"));
  s.horizon = positive_at(j["horizon"], child(path, "horizon"));
  const std::string cpath = child(path, "classes");
  const auto& arr = array_at(j["classes"], cpath);
  if (arr.empty()) throw parse_error(cpath + ": needs at least one class");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = child(cpath, std::to_string(i));
    check_keys(arr[i], {"degree", "density", "beta", "prevalence"}, p);
    for (const char* key : {"degree", "density", "beta"}) {
      if (!arr[i].contains(key)) throw parse_error(child(p, key) + ": missing");
    }
    ScenarioClass c;
    c.degree = static_cast<int>(integer_at(arr[i]["degree"], child(p, "degree")));
    c.density = positive_at(arr[i]["density"], child(p, "density"));
    c.beta = positive_at(arr[i]["beta"], child(p, "beta"));
    if (arr[i].contains("prevalence")) {
      c.prevalence = number_at(arr[i]["prevalence"], child(p, "prevalence"));
      if (c.prevalence < 0.0 || c.prevalence > 1.0) {
        throw parse_error(child(p, "prevalence") + ": must lie in [0, 1]");
      }
    }
    s.classes.push_back(c);
  }
  if (j.contains("inviters")) {
    const std::string ipath = child(path, "inviters");
    const auto& inv = j["inviters"];
    check_keys(inv, {"mode", "gamma", "initial_fraction"}, ipath);
    if (inv.contains("mode")) s.mode = mode_at(inv["mode"], child(ipath, "mode"));
    if (inv.contains("gamma")) s.gamma = number_at(inv["gamma"], child(ipath, "gamma"));
    if (inv.contains("initial_fraction")) {
      s.initial_fraction = positive_at(inv["initial_fraction"], child(ipath, "initial_fraction"));
    }
  }
  return s;
}

Tolerances parse_tolerances(const json& j, const std::string& path) {
  Tolerances t;
  const std::pair<const char*, double*> fields[] = {
      {"consistency_median_rel_error", &t.consistency_median_rel_error},
      {"ks_critical_coefficient", &t.ks_critical_coefficient},
      {"coverage_low", &t.coverage_low},
      {"coverage_high", &t.coverage_high},
      {"prevalence_variance_rel", &t.prevalence_variance_rel},
      {"lrt_level", &t.lrt_level},
      {"lrt_size_low", &t.lrt_size_low},
      {"lrt_size_high", &t.lrt_size_high},
      {"lrt_power", &t.lrt_power},
      {"baseline_gap_se", &t.baseline_gap_se},
      {"kurtz_slope_low", &t.kurtz_slope_low},
      {"kurtz_slope_high", &t.kurtz_slope_high},
      {"degenerate_fraction", &t.degenerate_fraction},
  };
  require_object(j, path);
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(std::begin(fields), std::end(fields),
                           [&](const auto& f) { return key == f.first; });
    if (it == std::end(fields)) throw parse_error(child(path, key) + ": unknown key");
    *it->second = number_at(value, child(path, key));
  }
  return t;
}

}  // namespace

ExperimentPlan parse_plan(const json& j) {
  check_keys(j, {"name", "seed", "ladder", "replicates", "confidence", "threads", "scenarios",
                 "metrics", "fit", "tolerances"},
             "");
  ExperimentPlan p;
  if (j.contains("name")) p.name = string_at(j["name"], "/name");
  if (j.contains("seed")) p.master_seed = unsigned_at(j["seed"], "/seed");
  if (j.contains("ladder")) {
    p.ladder.clear();
    const auto& arr = array_at(j["ladder"], "/ladder");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      p.ladder.push_back(positive_at(arr[i], "/ladder/" + std::to_string(i)));
    }
    if (p.ladder.empty()) throw parse_error("/ladder: needs at least one scale");
    if (!std::is_sorted(p.ladder.begin(), p.ladder.end())) {
      throw parse_error("/ladder: scales must be increasing");
    }
  }
  if (j.contains("replicates")) {
    const auto r = integer_at(j["replicates"], "/replicates");
    if (r < 2) throw parse_error("/replicates: must be at least 2");
    p.replicates = static_cast<std::size_t>(r);
  }
  if (j.contains("confidence")) p.confidence = probability_at(j["confidence"], "/confidence");
  if (j.contains("threads")) p.threads = static_cast<unsigned>(unsigned_at(j["threads"], "/threads"));
  if (j.contains("scenarios")) {
    const auto& arr = array_at(j["scenarios"], "/scenarios");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      p.scenarios.push_back(parse_scenario(arr[i], "/scenarios/" + std::to_string(i)));
    }
  } else {
    for (const auto& name : standard_scenario_names()) p.scenarios.push_back(standard_scenario(name));
  }
  if (p.scenarios.empty()) throw parse_error("/scenarios: needs at least one scenario");
  if (j.contains("metrics")) {
    p.metrics.clear();
    const auto& arr = array_at(j["metrics"], "/metrics");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = "/metrics/" + std::to_string(i);
      try {
        p.metrics.push_back(metric_from_string(string_at(arr[i], path)));
      } catch (const Error& e) {
        throw parse_error(path + ": " + e.what());
      }
    }
  }
  if (j.contains("fit")) p.fit = parse_fit_options(j["fit"], "/fit");
  if (j.contains("tolerances")) p.tolerances = parse_tolerances(j["tolerances"], "/tolerances");
  return p;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  const json document = parse_json_file(path);
  try {
    return parse_plan(document);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

// ----------------------------------------------------------------- tables

namespace {

std::string cell(double value) { return std::isfinite(value) ? format_double(value) : ""; }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

}  // namespace

void write_metric_tables(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());

  std::ostringstream rungs, classes, checks, replicates;
  rungs << "scenario,scale,replicates,fitted,all_ok,non_identifiable,truncated,degenerate,"
           "prevalence_bias,prevalence_variance_ratio,prevalence_coverage,"
           "population_coverage,baseline_bias,lrt_rejection_rate,median_sup_norm\n";
  classes << "scenario,scale,degree,true_density,bias,rmse,empirical_variance,"
             "mean_predicted_variance,variance_ratio,median_abs_rel_error,coverage,"
             "skewness,excess_kurtosis,ks_distance,count\n";
  checks << "scenario,name,value,low,high,passed\n";
  replicates << "scenario,scale,replicate,seed,termination,all_ok,prevalence,"
                "prevalence_variance,population,baseline,lrt_p_value,sup_norm";
  std::size_t max_classes = 0;
  for (const auto& s : report.scenarios) {
    for (const auto& r : s.rungs) max_classes = std::max(max_classes, r.classes.size());
  }
  for (std::size_t k = 0; k < max_classes; ++k) {
    replicates << ",size_" << k + 1 << ",size_se_" << k + 1;
  }
  replicates << "\n";

  for (const auto& s : report.scenarios) {
    for (const auto& r : s.rungs) {
      const std::string key = s.name + "," + cell(r.scale);
      rungs << key << "," << r.replicates << "," << r.fitted << "," << r.all_ok << ","
            << r.non_identifiable << "," << r.truncated << "," << (r.degenerate ? 1 : 0)
            << "," << cell(r.prevalence.bias) << "," << cell(r.prevalence.variance_ratio)
            << "," << cell(r.prevalence.coverage) << "," << cell(r.population.coverage)
            << "," << cell(r.baseline.bias) << "," << cell(r.lrt_rejection_rate) << ","
            << cell(r.median_sup_norm) << "\n";
      for (const auto& c : r.classes) {
        classes << key << "," << c.degree << "," << cell(c.true_density) << ","
                << cell(c.bias) << "," << cell(c.rmse) << "," << cell(c.empirical_variance)
                << "," << cell(c.mean_predicted_variance) << "," << cell(c.variance_ratio)
                << "," << cell(c.median_abs_rel_error) << "," << cell(c.coverage) << ","
                << cell(c.normality.skewness) << "," << cell(c.normality.excess_kurtosis)
                << "," << cell(c.normality.ks_distance) << "," << c.normality.count << "\n";
      }
      for (std::size_t i = 0; i < r.outcomes.size(); ++i) {
        const auto& o = r.outcomes[i];
        replicates << key << "," << i << "," << o.seed << "," << to_string(o.termination)
                   << "," << (o.all_ok ? 1 : 0) << ","
                   << (o.prevalence ? cell(o.prevalence->estimate) : "") << ","
                   << (o.prevalence ? cell(o.prevalence->variance) : "") << ","
                   << (o.prevalence ? cell(o.prevalence->population.size) : "") << ","
                   << cell(o.baseline) << "," << (o.lrt ? cell(o.lrt->p_value) : "") << ","
                   << cell(o.sup_norm);
        for (std::size_t k = 0; k < max_classes; ++k) {
          replicates << ","
                     << (k < o.sizes.size() ? cell(o.sizes[k]) : "") << ","
                     << (k < o.size_se.size() ? cell(o.size_se[k]) : "");
        }
        replicates << "\n";
      }
    }
  }
  for (const auto& c : report.checks) {
    checks << c.scenario << "," << c.name << "," << cell(c.value) << "," << cell(c.low) << ","
           << (std::isfinite(c.high) ? cell(c.high) : "inf") << "," << (c.passed ? 1 : 0)
           << "\n";
  }
  write_file(dir / "rungs.csv", rungs.str());
  write_file(dir / "classes.csv", classes.str());
  write_file(dir / "checks.csv", checks.str());
  write_file(dir / "replicates.csv", replicates.str());
}

}  // namespace rds::io
