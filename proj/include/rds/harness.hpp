#pragma once

// Monte Carlo validation of the estimators: simulate, fit and summarize
// across a ladder of population scales v.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rds/inference.hpp"
#include "rds/ode_limit.hpp"
#include "rds/prevalence.hpp"
#include "rds/simulator.hpp"

namespace rds {

struct ScenarioClass {
  int degree = 1;
  double density = 0.0;     // f_k; N_k = round(f_k * v)
  double beta = 1.0;
  double prevalence = 0.0;  // N_k^+ = round(p_k * N_k)
};

struct Scenario {
  std::string name;
  std::vector<ScenarioClass> classes;
  InviterMode mode = InviterMode::AllActive;
  double initial_fraction = 0.05;  // I_0 = round(initial_fraction * v)
  double gamma = 0.0;
  double horizon = 1.0;

  PopulationSpec population(double scale) const;
  InviterPolicy policy(double scale) const;
  SimConfig sim_config(double scale, std::uint64_t seed) const;
  /// True when beta_k / k is the same for every class.
  bool proportional_to_degree() const;
};

/// Shipped scenarios: S1 (3 classes, beta proportional to degree), S2 (3
/// classes, constant beta), S3 (5 classes, heavy-tailed densities, constant
/// beta), S4 (as S1 with inviters retiring at rate 0.5).
Scenario standard_scenario(const std::string& name);
std::vector<std::string> standard_scenario_names();

/// Pass/fail thresholds. All of them are fixed here and may be overridden by
/// a plan file.
struct Tolerances {
  double consistency_median_rel_error = 0.05;
  double ks_critical_coefficient = 1.628;  // 1% level: D < c / sqrt(R)
  double coverage_low = 0.925;
  double coverage_high = 0.975;
  double prevalence_variance_rel = 0.20;
  double lrt_level = 0.05;
  double lrt_size_low = 0.03;
  double lrt_size_high = 0.08;
  double lrt_power = 0.80;
  double baseline_gap_se = 3.0;
  double kurtz_slope_low = -0.65;
  double kurtz_slope_high = -0.35;
  double degenerate_fraction = 0.5;
};

enum class Metric {
  Estimation,   // bias, RMSE, variance ratio, consistency, normality, coverage
  Prevalence,
  Lrt,
  Baseline,
  Convergence,
};

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& name);
std::vector<Metric> all_metrics();

struct ExperimentPlan {
  std::string name = "validation";
  std::uint64_t master_seed = 1;
  std::vector<double> ladder{1e2, 1e3, 1e4};
  std::size_t replicates = 200;
  double confidence = 0.95;
  unsigned threads = 1;
  std::vector<Scenario> scenarios;
  std::vector<Metric> metrics = all_metrics();
  FitOptions fit;
  Tolerances tolerances;

  bool wants(Metric metric) const;
};

/// Everything recorded for one simulated replicate.
struct ReplicateOutcome {
  std::uint64_t seed = 0;
  Termination termination = Termination::StoppingRule;
  bool fitted = false;        // at least one OK class
  bool all_ok = false;
  std::vector<double> sizes;  // N_hat_k, NaN when not OK
  std::vector<double> size_se;
  std::optional<PrevalenceEstimate> prevalence;
  double prevalence_individual = NAN;
  std::optional<LrtResult> lrt;
  double baseline = NAN;
  double sup_norm = NAN;
};

struct ReplicateSettings {
  FitOptions fit;
  double confidence = 0.95;
  bool prevalence = true;
  bool lrt = true;
  bool baseline = true;
  const LimitPath* limit = nullptr;  // sup-norm distance when set
};

ReplicateOutcome run_replicate(const Scenario& scenario, double scale,
                               std::uint64_t seed, const ReplicateSettings& settings);

struct NormalitySummary {
  double skewness = NAN;
  double excess_kurtosis = NAN;
  double ks_distance = NAN;  // against the standard normal
  std::size_t count = 0;
};

NormalitySummary normality_summary(std::vector<double> standardized);

struct ClassMetrics {
  int degree = 0;
  double true_size = 0.0;
  double true_density = 0.0;
  double bias = NAN;                   // of f_hat_k = N_hat_k / v
  double rmse = NAN;
  double empirical_variance = NAN;
  double mean_predicted_variance = NAN;
  double variance_ratio = NAN;
  double median_abs_rel_error = NAN;   // |N_hat_k / N_k - 1|
  double coverage = NAN;
  NormalitySummary normality;
};

struct EstimatorSummary {
  double truth = NAN;
  double mean = NAN;
  double bias = NAN;
  double bias_se = NAN;
  double empirical_variance = NAN;
  double mean_predicted_variance = NAN;
  double variance_ratio = NAN;
  double coverage = NAN;
  std::size_t count = 0;
};

struct RungReport {
  double scale = 0.0;
  std::size_t replicates = 0;
  std::size_t fitted = 0;
  std::size_t all_ok = 0;
  std::size_t non_identifiable = 0;  // replicates with some class not OK
  std::size_t truncated = 0;
  bool degenerate = false;
  std::vector<ClassMetrics> classes;
  EstimatorSummary prevalence;
  EstimatorSummary population;
  EstimatorSummary baseline;
  double lrt_rejection_rate = NAN;
  std::size_t lrt_count = 0;
  double median_sup_norm = NAN;
  std::vector<ReplicateOutcome> outcomes;
};

struct ScenarioReport {
  std::string name;
  bool proportional = false;
  std::vector<RungReport> rungs;
  double kurtz_slope = NAN;
};

struct Check {
  std::string scenario;
  std::string name;
  double value = NAN;
  double low = -INFINITY;
  double high = INFINITY;
  bool passed = false;
  std::string detail;
};

struct ExperimentReport {
  ExperimentPlan plan;
  std::vector<ScenarioReport> scenarios;
  std::vector<Check> checks;
  std::vector<std::string> warnings;
  bool passed() const;
};

/// Summaries for one rung built from replicate outcomes.
RungReport summarize_rung(const Scenario& scenario, double scale,
                          std::vector<ReplicateOutcome> outcomes,
                          const ExperimentPlan& plan);

ExperimentReport run_experiment(const ExperimentPlan& plan);

/// Inverse-degree weighted prevalence over recruits:
/// sum_i (Y_i / d_i) / sum_i (1 / d_i).
double baseline_inverse_degree(const Trajectory& trajectory);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(std::span<const double> x, std::span<const double> y);

std::uint64_t rung_seed(std::uint64_t master, std::size_t scenario,
                        std::size_t rung);

}  // namespace rds
