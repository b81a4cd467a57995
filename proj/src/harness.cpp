#include "rds/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "parallel.hpp"
#include "rds/error.hpp"

namespace rds {

namespace {

std::int64_t scaled_count(double fraction, double scale) {
  return static_cast<std::int64_t>(std::llround(fraction * scale));
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return NAN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v) {
  if (v.size() < 2) return NAN;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return NAN;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

PopulationSpec Scenario::population(double scale) const {
  std::vector<DegreeClass> out;
  for (const auto& c : classes) {
    const auto size = std::max<std::int64_t>(1, scaled_count(c.density, scale));
    const auto infected = std::clamp<std::int64_t>(
        scaled_count(c.prevalence, static_cast<double>(size)), 0, size);
    out.push_back({c.degree, size, c.beta, infected});
  }
  return PopulationSpec(std::move(out));
}

InviterPolicy Scenario::policy(double scale) const {
  return {mode, gamma, std::max<std::int64_t>(1, scaled_count(initial_fraction, scale))};
}

SimConfig Scenario::sim_config(double scale, std::uint64_t seed) const {
  return SimConfig{population(scale), policy(scale), MaxTime{horizon}, seed};
}

bool Scenario::proportional_to_degree() const {
  if (classes.empty()) return false;
  const double ratio = classes.front().beta / classes.front().degree;
  return std::all_of(classes.begin(), classes.end(), [&](const ScenarioClass& c) {
    return std::abs(c.beta / c.degree - ratio) <= 1e-12 * ratio;
  });
}

Scenario standard_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "S1") {
    s.classes = {{2, 0.5, 1.0, 0.10}, {3, 0.3, 1.5, 0.20}, {4, 0.2, 2.0, 0.35}};
    s.horizon = 3.0;
  } else if (name == "S2") {
    s.classes = {{2, 0.5, 1.5, 0.05}, {3, 0.3, 1.5, 0.20}, {4, 0.2, 1.5, 0.40}};
    s.horizon = 3.0;
  } else if (name == "S3") {
    s.classes = {{1, 0.40, 1.5, 0.05},
                 {2, 0.25, 1.5, 0.10},
                 {4, 0.17, 1.5, 0.15},
                 {8, 0.11, 1.5, 0.25},
                 {16, 0.07, 1.5, 0.40}};
    s.horizon = 3.0;
  } else if (name == "S4") {
    s.classes = {{2, 0.5, 1.0, 0.10}, {3, 0.3, 1.5, 0.20}, {4, 0.2, 2.0, 0.35}};
    s.mode = InviterMode::RemovalRate;
    s.gamma = 0.5;
    s.horizon = 4.0;
  } else {
    throw invalid_argument("unknown standard scenario '" + name + "'");
  }
  return s;
}

std::vector<std::string> standard_scenario_names() { return {"S1", "S2", "S3", "S4"}; }

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::Estimation:
      return "estimation";
    case Metric::Prevalence:
      return "prevalence";
    case Metric::Lrt:
      return "lrt";
    case Metric::Baseline:
      return "baseline";
    case Metric::Convergence:
      return "convergence";
  }
  return "unknown";
}

Metric metric_from_string(const std::string& name) {
  for (auto m : all_metrics()) {
    if (to_string(m) == name) return m;
  }
  throw parse_error("unknown metric '" + name + "'");
}

std::vector<Metric> all_metrics() {
  return {Metric::Estimation, Metric::Prevalence, Metric::Lrt, Metric::Baseline,
          Metric::Convergence};
}

bool ExperimentPlan::wants(Metric metric) const {
  return std::find(metrics.begin(), metrics.end(), metric) != metrics.end();
}

bool ExperimentReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

double baseline_inverse_degree(const Trajectory& trajectory) {
  double numerator = 0.0;
  double denominator = 0.0;
  for (const auto& e : trajectory.events()) {
    if (e.kind != EventKind::Recruitment) continue;
    const double w = 1.0 / e.degree;
    denominator += w;
    if (e.infected.value_or(false)) numerator += w;
  }
  if (denominator == 0.0) {
    throw invalid_argument("inverse-degree estimate needs at least one recruit");
  }
  return numerator / denominator;
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw invalid_argument("slope needs at least two paired points");
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = mean_of(lx);
  const double my = mean_of(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

std::uint64_t rung_seed(std::uint64_t master, std::size_t scenario, std::size_t rung) {
  return replicate_seed(master, (static_cast<std::uint64_t>(scenario) << 20) | rung);
}

NormalitySummary normality_summary(std::vector<double> z) {
  NormalitySummary out;
  out.count = z.size();
  if (z.size() < 3) return out;
  const double m = mean_of(z);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : z) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const double n = static_cast<double>(z.size());
  m2 /= n;
  m3 /= n;
  m4 /= n;
  out.skewness = m3 / std::pow(m2, 1.5);
  out.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  std::sort(z.begin(), z.end());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double cdf = standard_normal_cdf(z[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  out.ks_distance = d;
  return out;
}

ReplicateOutcome run_replicate(const Scenario& scenario, double scale, std::uint64_t seed,
                               const ReplicateSettings& settings) {
  ReplicateOutcome out;
  out.seed = seed;
  auto sim = simulate(scenario.sim_config(scale, seed));
  out.termination = sim.termination;
  // Nothing can happen after a stall, so the observation window stays the
  // scenario horizon.
  Trajectory trajectory =
      sim.trajectory.tau() < scenario.horizon
          ? Trajectory(std::vector<Event>(sim.trajectory.events().begin(),
                                          sim.trajectory.events().end()),
                       std::vector<SeedRecord>(sim.trajectory.seeds().begin(),
                                               sim.trajectory.seeds().end()),
                       sim.trajectory.initial_inviters(), scenario.horizon,
                       sim.trajectory.accounting(), sim.truth.degrees())
          : std::move(sim.trajectory);

  const std::size_t d = scenario.classes.size();
  out.sizes.assign(d, NAN);
  out.size_se.assign(d, NAN);
  if (settings.limit) {
    out.sup_norm = sup_norm_error(trajectory, *settings.limit,
                                  static_cast<double>(sim.truth.total_size()));
  }
  if (settings.baseline && trajectory.recruitment_count() > 0) {
    out.baseline = baseline_inverse_degree(trajectory);
  }

  std::optional<FitResult> fitted;
  try {
    fitted = fit(trajectory, settings.fit);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Inference) throw;
  }
  if (fitted) {
    out.fitted = true;
    out.all_ok = fitted->all_ok() && fitted->pooling.empty();
    for (std::size_t k = 0; k < d; ++k) {
      const int degree = sim.truth.at(k).degree;
      bool pooled = false;
      for (const auto& r : fitted->pooling) {
        pooled = pooled || r.from_degree == degree || r.into_degree == degree;
      }
      if (pooled) continue;
      for (const auto& c : fitted->classes) {
        if (c.degree == degree && c.flag == EstimateFlag::Ok) {
          out.sizes[k] = c.size;
          out.size_se[k] = c.size_se;
        }
      }
    }
    if (settings.prevalence) {
      try {
        out.prevalence = estimate_prevalence(trajectory, *fitted, settings.confidence);
        out.prevalence_individual = prevalence_individual_sum(trajectory, *fitted);
      } catch (const Error&) {
        out.prevalence.reset();
      }
    }
    if (settings.lrt) {
      try {
        out.lrt = lrt_proportional(trajectory, settings.fit);
      } catch (const Error&) {
        out.lrt.reset();
      }
    }
  }
  return out;
}

namespace {

EstimatorSummary summarize(std::span<const double> values,
                           std::span<const double> predicted_variances,
                           std::span<const Interval> intervals, double truth) {
  EstimatorSummary s;
  s.truth = truth;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = mean_of(values);
  s.bias = s.mean - truth;
  s.empirical_variance = variance_of(values);
  s.bias_se = std::sqrt(s.empirical_variance / static_cast<double>(values.size()));
  if (!predicted_variances.empty()) {
    s.mean_predicted_variance = mean_of(predicted_variances);
    s.variance_ratio = s.empirical_variance / s.mean_predicted_variance;
  }
  if (!intervals.empty()) {
    std::size_t hits = 0;
    for (const auto& ci : intervals) hits += ci.contains(truth) ? 1 : 0;
    s.coverage = static_cast<double>(hits) / static_cast<double>(intervals.size());
  }
  return s;
}

}  // namespace

RungReport summarize_rung(const Scenario& scenario, double scale,
                          std::vector<ReplicateOutcome> outcomes,
                          const ExperimentPlan& plan) {
  RungReport r;
  r.scale = scale;
  r.replicates = outcomes.size();
  const PopulationSpec truth = scenario.population(scale);
  const double total = static_cast<double>(truth.total_size());
  const double z = normal_critical_value(plan.confidence);

  for (const auto& o : outcomes) {
    r.fitted += o.fitted ? 1 : 0;
    r.all_ok += o.all_ok ? 1 : 0;
    r.truncated += o.termination != Termination::StoppingRule ? 1 : 0;
  }
  r.non_identifiable = r.replicates - r.all_ok;
  r.degenerate = r.replicates == 0 ||
                 static_cast<double>(r.non_identifiable) >
                     plan.tolerances.degenerate_fraction * static_cast<double>(r.replicates);

  for (std::size_t k = 0; k < truth.class_count(); ++k) {
    ClassMetrics m;
    m.degree = truth.at(k).degree;
    m.true_size = static_cast<double>(truth.at(k).size);
    m.true_density = m.true_size / total;
    std::vector<double> densities, predicted, rel_errors, standardized;
    std::size_t hits = 0;
    for (const auto& o : outcomes) {
      if (!std::isfinite(o.sizes[k]) || !std::isfinite(o.size_se[k])) continue;
      densities.push_back(o.sizes[k] / total);
      predicted.push_back(o.size_se[k] * o.size_se[k] / (total * total));
      rel_errors.push_back(std::abs(o.sizes[k] / m.true_size - 1.0));
      standardized.push_back((o.sizes[k] - m.true_size) / o.size_se[k]);
      hits += std::abs(o.sizes[k] - m.true_size) <= z * o.size_se[k] ? 1 : 0;
    }
    if (!densities.empty()) {
      m.bias = mean_of(densities) - m.true_density;
      double sq = 0.0;
      for (double f : densities) sq += (f - m.true_density) * (f - m.true_density);
      m.rmse = std::sqrt(sq / static_cast<double>(densities.size()));
      m.empirical_variance = variance_of(densities);
      m.mean_predicted_variance = mean_of(predicted);
      m.variance_ratio = m.empirical_variance / m.mean_predicted_variance;
      m.median_abs_rel_error = median_of(rel_errors);
      m.coverage = static_cast<double>(hits) / static_cast<double>(densities.size());
      m.normality = normality_summary(std::move(standardized));
    }
    r.classes.push_back(m);
  }

  double infected_total = 0.0;
  for (const auto& c : truth.classes()) infected_total += static_cast<double>(c.infected);
  const double true_prevalence = infected_total / total;

  std::vector<double> h, h_var, n_hat, n_var, base;
  std::vector<Interval> h_ci, n_ci;
  std::size_t lrt_rejections = 0;
  std::vector<double> sup_norms;
  for (const auto& o : outcomes) {
    if (o.prevalence) {
      h.push_back(o.prevalence->estimate);
      h_var.push_back(o.prevalence->variance);
      h_ci.push_back(o.prevalence->ci);
      if (!o.prevalence->population.lower_bound && o.all_ok) {
        n_hat.push_back(o.prevalence->population.size);
        n_var.push_back(o.prevalence->population.variance);
        n_ci.push_back(o.prevalence->population.ci);
      }
    }
    if (std::isfinite(o.baseline)) base.push_back(o.baseline);
    if (o.lrt) {
      ++r.lrt_count;
      lrt_rejections += o.lrt->p_value < plan.tolerances.lrt_level ? 1 : 0;
    }
    if (std::isfinite(o.sup_norm)) sup_norms.push_back(o.sup_norm);
  }
  r.prevalence = summarize(h, h_var, h_ci, true_prevalence);
  r.population = summarize(n_hat, n_var, n_ci, total);
  r.baseline = summarize(base, {}, {}, true_prevalence);
  if (r.lrt_count > 0) {
    r.lrt_rejection_rate =
        static_cast<double>(lrt_rejections) / static_cast<double>(r.lrt_count);
  }
  r.median_sup_norm = median_of(sup_norms);
  r.outcomes = std::move(outcomes);
  return r;
}

namespace {

Check make_check(const std::string& scenario, const std::string& name, double value,
                 double low, double high, std::string detail = {}) {
  Check c{scenario, name, value, low, high, false, std::move(detail)};
  c.passed = std::isfinite(value) && value >= low && value <= high;
  return c;
}

void add_checks(const ExperimentPlan& plan, const Scenario& scenario,
                const ScenarioReport& report, ExperimentReport& out) {
  const auto& tol = plan.tolerances;
  if (report.rungs.empty()) return;
  const RungReport& top = report.rungs.back();
  const std::string& name = scenario.name;
  const std::string at = "v=" + std::to_string(static_cast<long long>(top.scale));
  if (top.degenerate) {
    out.warnings.push_back(name + " " + at +
                           ": more than half of the fits are not identifiable; "
                           "rung excluded from pass/fail");
  } else {
    if (plan.wants(Metric::Estimation)) {
      const double limit = tol.ks_critical_coefficient;
      for (const auto& c : top.classes) {
        const std::string cls = " class " + std::to_string(c.degree) + " " + at;
        out.checks.push_back(make_check(name, "consistency" + cls, c.median_abs_rel_error,
                                        0.0, tol.consistency_median_rel_error,
                                        "median |N_hat/N - 1|"));
        out.checks.push_back(make_check(
            name, "normality" + cls, c.normality.ks_distance, 0.0,
            limit / std::sqrt(static_cast<double>(std::max<std::size_t>(c.normality.count, 1))),
            "KS distance of standardized estimates"));
        out.checks.push_back(make_check(name, "coverage_f" + cls, c.coverage,
                                        tol.coverage_low, tol.coverage_high,
                                        "Wald interval coverage of f_k"));
      }
    }
    if (plan.wants(Metric::Prevalence)) {
      out.checks.push_back(make_check(
          name, "prevalence_variance " + at, top.prevalence.variance_ratio,
          1.0 - tol.prevalence_variance_rel, 1.0 + tol.prevalence_variance_rel,
          "empirical / mean delta-method variance"));
      out.checks.push_back(make_check(name, "prevalence_coverage " + at,
                                      top.prevalence.coverage, tol.coverage_low,
                                      tol.coverage_high));
      out.checks.push_back(make_check(name, "population_coverage " + at,
                                      top.population.coverage, tol.coverage_low,
                                      tol.coverage_high));
    }
    if (plan.wants(Metric::Lrt) && scenario.classes.size() >= 2) {
      if (report.proportional) {
        out.checks.push_back(make_check(name, "lrt_size " + at, top.lrt_rejection_rate,
                                        tol.lrt_size_low, tol.lrt_size_high));
      } else {
        out.checks.push_back(make_check(name, "lrt_power " + at, top.lrt_rejection_rate,
                                        tol.lrt_power, 1.0));
      }
    }
    if (plan.wants(Metric::Baseline) && !report.proportional && plan.wants(Metric::Prevalence)) {
      const double se = std::hypot(top.prevalence.bias_se, top.baseline.bias_se);
      const double gap = std::abs(top.baseline.bias) - std::abs(top.prevalence.bias);
      out.checks.push_back(make_check(name, "baseline_contrast " + at, gap / se,
                                      tol.baseline_gap_se, INFINITY,
                                      "(|bias baseline| - |bias stratified|) / MC se"));
    }
  }
  if (report.rungs.size() >= 2) {
    const RungReport& bottom = report.rungs.front();
    if (plan.wants(Metric::Estimation) && !bottom.degenerate && !top.degenerate) {
      for (std::size_t k = 0; k < top.classes.size(); ++k) {
        const double ratio = top.classes[k].rmse / bottom.classes[k].rmse;
        out.checks.push_back(make_check(
            name, "rmse_ladder class " + std::to_string(top.classes[k].degree), ratio, 0.0,
            std::nextafter(1.0, 0.0), "RMSE(top rung) / RMSE(bottom rung)"));
      }
    }
    if (plan.wants(Metric::Convergence)) {
      out.checks.push_back(make_check(name, "kurtz_slope", report.kurtz_slope,
                                      tol.kurtz_slope_low, tol.kurtz_slope_high,
                                      "log-log slope of median sup-norm error"));
    }
  }
}

}  // namespace

ExperimentReport run_experiment(const ExperimentPlan& plan) {
  if (plan.ladder.empty()) throw invalid_argument("plan needs at least one scale");
  if (plan.scenarios.empty()) throw invalid_argument("plan needs at least one scenario");
  ExperimentReport report;
  report.plan = plan;
  for (std::size_t s = 0; s < plan.scenarios.size(); ++s) {
    const Scenario& scenario = plan.scenarios[s];
    ScenarioReport sr;
    sr.name = scenario.name;
    sr.proportional = scenario.proportional_to_degree();
    for (std::size_t r = 0; r < plan.ladder.size(); ++r) {
      const double scale = plan.ladder[r];
      std::optional<LimitPath> limit;
      if (plan.wants(Metric::Convergence)) {
        const auto spec = scenario.population(scale);
        const double total = static_cast<double>(spec.total_size());
        limit = solve_limit(limit_classes(spec, total),
                            limit_policy(scenario.policy(scale), total), scenario.horizon);
      }
      ReplicateSettings settings;
      settings.fit = plan.fit;
      settings.confidence = plan.confidence;
      settings.prevalence = plan.wants(Metric::Prevalence) || plan.wants(Metric::Baseline);
      settings.lrt = plan.wants(Metric::Lrt) && scenario.classes.size() >= 2;
      settings.baseline = plan.wants(Metric::Baseline);
      settings.limit = limit ? &*limit : nullptr;

      const std::uint64_t base_seed = rung_seed(plan.master_seed, s, r);
      std::vector<ReplicateOutcome> outcomes(plan.replicates);
      detail::parallel_for(plan.replicates, plan.threads, [&](std::size_t i) {
        outcomes[i] = run_replicate(scenario, scale, replicate_seed(base_seed, i), settings);
      });
      sr.rungs.push_back(summarize_rung(scenario, scale, std::move(outcomes), plan));
    }
    if (plan.wants(Metric::Convergence) && sr.rungs.size() >= 2) {
      std::vector<double> x, y;
      for (const auto& rung : sr.rungs) {
        x.push_back(rung.scale);
        y.push_back(rung.median_sup_norm);
      }
      sr.kurtz_slope = log_log_slope(x, y);
    }
    add_checks(plan, scenario, sr, report);
    report.scenarios.push_back(std::move(sr));
  }
  return report;
}

}  // namespace rds
