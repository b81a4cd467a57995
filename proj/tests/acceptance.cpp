// Acceptance criteria 1-10. One PASS/FAIL line per criterion; exit status is
// non-zero when any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "rds/error.hpp"
#include "rds/harness.hpp"
#include "rds/inference.hpp"
#include "rds/io.hpp"
#include "rds/ode_limit.hpp"
#include "rds/rds.h"
#include "support.hpp"

using namespace rds;

namespace {

// Tolerances.
constexpr double kScoreRelError = 1e-6;
constexpr double kStationarity = 1e-8;
constexpr int kPerturbations = 200;
constexpr double kPerturbationScale = 0.20;
constexpr int kRootTuples = 1000;
constexpr double kSlopeLow = -0.65, kSlopeHigh = -0.35;
constexpr double kInformationFrobenius = 0.10;
constexpr double kBlockInverse = 1e-9;
constexpr double kConsistency = 0.05;
constexpr double kKsCoefficient = 1.628;
constexpr double kCoverageLow = 0.925, kCoverageHigh = 0.975;
constexpr double kPrevalenceVariance = 0.20;
constexpr double kFormsAgree = 1e-12;
constexpr double kLrtSizeLow = 0.03, kLrtSizeHigh = 0.08;
constexpr double kLrtPower = 0.80;
constexpr double kBaselineGapSe = 3.0;
constexpr std::size_t kLrtSizeReplicates = 500;

int failures = 0;

void report(int id, bool passed, const std::string& what) {
  std::printf("%s %2d %s\n", passed ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!passed) ++failures;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

Eigen::VectorXd flatten(const ModelParameters& p) {
  const auto d = static_cast<Eigen::Index>(p.sizes.size());
  Eigen::VectorXd v(2 * d);
  for (Eigen::Index k = 0; k < d; ++k) {
    v[k] = p.sizes[static_cast<std::size_t>(k)];
    v[d + k] = p.betas[static_cast<std::size_t>(k)];
  }
  return v;
}

ModelParameters unflatten(const Eigen::VectorXd& v, double total) {
  ModelParameters p;
  for (Eigen::Index k = 0; k < v.size() / 2; ++k) {
    p.sizes.push_back(v[k]);
    p.betas.push_back(v[v.size() / 2 + k]);
  }
  p.total = total;
  return p;
}

void score_correctness() {
  std::mt19937_64 rng(1001);
  const InviterMode modes[] = {InviterMode::AllActive, InviterMode::RemovalRate,
                               InviterMode::FixedPool};
  double worst = 0.0;
  int trajectories = 0;
  while (trajectories < 100) {
    const auto config = testing::random_small_config(rng, modes[trajectories % 3]);
    const auto traj = simulate(config).trajectory;
    if (traj.recruitment_count() < 2) continue;
    ++trajectories;
    std::uniform_real_distribution<double> extra(0.5, 30.0), beta(0.3, 3.0);
    ModelParameters p;
    for (std::size_t k = 0; k < traj.class_count(); ++k) {
      p.sizes.push_back(static_cast<double>(traj.final_count(k)) + extra(rng));
      p.betas.push_back(beta(rng));
    }
    p.total = 0.0;
    for (double s : p.sizes) p.total += s;
    const Eigen::VectorXd g = score(traj, p);
    const Eigen::VectorXd theta = flatten(p);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
      Eigen::VectorXd up = theta, down = theta;
      up[i] += h;
      down[i] -= h;
      const double fd = (loglik(traj, unflatten(up, p.total)).value -
                         loglik(traj, unflatten(down, p.total)).value) /
                        (2.0 * h);
      worst = std::max(worst, std::abs(g[i] - fd) / (1.0 + std::abs(g[i])));
    }
  }
  report(1, worst < kScoreRelError,
         "score vs central differences on 100 trajectories: max rel error " + fmt(worst) +
             " (< " + fmt(kScoreRelError) + ")");
}

void stationarity() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> factor(1.0 - kPerturbationScale,
                                                1.0 + kPerturbationScale);
  double worst_score = 0.0;
  int beaten = 0, fits = 0, skipped = 0;
  for (const char* name : {"S1", "S3"}) {
    const auto scenario = standard_scenario(name);
    int done = 0;
    while (done < 10) {
      const auto traj = simulate(scenario.sim_config(1000.0, rng())).trajectory;
      FitResult result;
      try {
        result = fit(traj);
      } catch (const Error&) {
        ++skipped;
        continue;
      }
      if (!result.all_ok() || !result.pooling.empty()) {
        ++skipped;
        continue;
      }
      ++done;
      ++fits;
      const auto p = result.parameters();
      const Eigen::VectorXd g = score(traj, p);
      const double n = static_cast<double>(traj.recruitment_count());
      worst_score =
          std::max(worst_score, g.cwiseProduct(flatten(p)).cwiseAbs().maxCoeff() / std::max(1.0, n));
      const double best = loglik(traj, p).value;
      bool all = true;
      for (int i = 0; i < kPerturbations; ++i) {
        auto sizes = p.sizes;
        auto betas = p.betas;
        for (auto& s : sizes) s *= factor(rng);
        for (auto& b : betas) b *= factor(rng);
        if (!(loglik(traj, ModelParameters::from_sizes(sizes, betas)).value < best)) all = false;
      }
      beaten += all ? 1 : 0;
    }
  }
  report(2, worst_score < kStationarity && beaten == fits,
         "stationarity on " + std::to_string(fits) + " fits (S1, S3 at v=1000; " +
             std::to_string(skipped) + " non-identifiable draws skipped): max |theta * score| / n " +
             fmt(worst_score) + " (< " + fmt(kStationarity) + "); fits beating " +
             std::to_string(kPerturbations) + " perturbations " + std::to_string(beaten) + "/" +
             std::to_string(fits));
}

void root_uniqueness() {
  std::mt19937_64 rng(3003);
  std::uniform_int_distribution<std::int64_t> count(2, 5000);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int worst = 0;
  for (int t = 0; t < kRootTuples; ++t) {
    const auto n = count(rng);
    const double a = 0.1 + 50.0 * unit(rng);
    const double m = static_cast<double>(n - 1) * unit(rng);
    const ClassStatistics s{n, a, m * a};
    int changes = 0;
    double previous = NAN;
    for (int j = 0; j <= 6000; ++j) {
      const double size = static_cast<double>(n) - 1.0 + std::pow(10.0, -8.0 + 16.0 * j / 6000.0);
      const double h = size_equation(s, size);
      if (h != 0.0 && std::isfinite(previous) && (h > 0.0) != (previous > 0.0)) ++changes;
      if (h != 0.0) previous = h;
    }
    worst = std::max(worst, changes);
  }
  int flagged = 0;
  for (int t = 0; t < kRootTuples; ++t) {
    const double a = 0.1 + 50.0 * unit(rng);
    const ClassStatistics s{1, a, a * unit(rng)};
    flagged += solve_class_size(s).flag == EstimateFlag::NonIdentifiable ? 1 : 0;
  }
  report(3, worst <= 1 && flagged == kRootTuples,
         "size equation over " + std::to_string(kRootTuples) + " tuples: max sign changes " +
             std::to_string(worst) + " (<= 1); n=1 flagged non-identifiable " +
             std::to_string(flagged) + "/" + std::to_string(kRootTuples));
}

void information_consistency() {
  const double v = 1e4;
  const auto scenario = standard_scenario("S1");
  const auto spec = scenario.population(v);
  const auto path = solve_limit(limit_classes(spec, v), limit_policy(scenario.policy(v), v),
                                scenario.horizon);
  const auto blocks = sigma_blocks(path);
  const Eigen::MatrixXd sigma = blocks.assemble();
  std::vector<double> sizes, betas;
  for (const auto& c : spec.classes()) {
    sizes.push_back(static_cast<double>(c.size));
    betas.push_back(c.beta);
  }
  const auto truth = ModelParameters::from_sizes(sizes, betas);
  const auto runs = replicate(scenario.sim_config(v, 4004), 200);
  double total_error = 0.0;
  for (const auto& r : runs) {
    const Eigen::MatrixXd info =
        density_scaled_information(observed_information(r.trajectory, truth), v);
    total_error += (info - sigma).norm() / sigma.norm();
  }
  const double mean_error = total_error / static_cast<double>(runs.size());

  // Cauchy-Schwarz and the block inverse on the four scenarios and random instances.
  bool cauchy = true;
  double inverse_abs = 0.0, inverse_rel = 0.0;
  auto examine = [&](const SigmaBlocks& b, bool absolute) {
    for (Eigen::Index k = 0; k < b.a.size(); ++k) cauchy &= b.a[k] * b.d[k] > b.b[k] * b.b[k];
    const Eigen::MatrixXd dense = b.assemble().inverse();
    const double diff = (b.block_inverse() - dense).cwiseAbs().maxCoeff();
    if (absolute) {
      inverse_abs = std::max(inverse_abs, diff);
    } else {
      inverse_rel = std::max(inverse_rel, diff / dense.cwiseAbs().maxCoeff());
    }
  };
  int instances = 0;
  for (const auto& name : standard_scenario_names()) {
    const auto s = standard_scenario(name);
    const auto sp = s.population(v);
    examine(sigma_blocks(solve_limit(limit_classes(sp, v), limit_policy(s.policy(v), v), s.horizon)),
            true);
    ++instances;
  }
  std::mt19937_64 rng(4005);
  std::uniform_int_distribution<int> count(1, 5);
  std::uniform_real_distribution<double> density(0.05, 1.0), beta(0.2, 3.0), unit(0.0, 1.0);
  while (instances < 104) {
    std::vector<LimitClass> classes;
    const int d = count(rng);
    for (int k = 0; k < d; ++k) classes.push_back({k + 1, density(rng), beta(rng)});
    const InviterMode mode = unit(rng) < 0.5 ? InviterMode::AllActive : InviterMode::RemovalRate;
    const LimitPolicy policy{mode, 0.02 + 0.3 * unit(rng), 0.8 * unit(rng)};
    try {
      examine(sigma_blocks(solve_limit(classes, policy, 0.2 + 2.0 * unit(rng))), false);
      ++instances;
    } catch (const Error&) {
    }
  }
  report(5,
         mean_error < kInformationFrobenius && cauchy && inverse_abs < kBlockInverse &&
             inverse_rel < kBlockInverse,
         "information at truth vs limit (S1, v=1e4, 200 replicates): mean rel Frobenius error " +
             fmt(mean_error) + " (< " + fmt(kInformationFrobenius) + "); a*d > b^2 on " +
             std::to_string(instances) + " instances: " + (cauchy ? "yes" : "no") +
             "; block inverse vs dense: abs " + fmt(inverse_abs) + " on scenarios, rel " +
             fmt(inverse_rel) + " on random instances (< " + fmt(kBlockInverse) + ")");
}

const ScenarioReport& scenario_of(const ExperimentReport& r, const std::string& name) {
  for (const auto& s : r.scenarios) {
    if (s.name == name) return s;
  }
  throw std::runtime_error("plan lacks scenario " + name);
}

void kurtz_convergence(const ExperimentReport& report_data) {
  const auto& s1 = scenario_of(report_data, "S1");
  report(4, s1.kurtz_slope >= kSlopeLow && s1.kurtz_slope <= kSlopeHigh,
         "median sup-norm decay on S1 over v = 1e2..1e4: log-log slope " + fmt(s1.kurtz_slope) +
             " (in [" + fmt(kSlopeLow) + ", " + fmt(kSlopeHigh) + "])");
}

void harness_criteria(const ExperimentReport& report_data) {
  const auto& top1 = scenario_of(report_data, "S1").rungs.back();
  const double v = top1.scale;

  // 6
  bool ok6 = !top1.degenerate && v == 1e4;
  std::string detail;
  const double ks_limit = kKsCoefficient / std::sqrt(static_cast<double>(top1.replicates));
  for (const auto& c : top1.classes) {
    ok6 &= c.median_abs_rel_error < kConsistency;
    ok6 &= c.normality.ks_distance < ks_limit;
    ok6 &= c.coverage >= kCoverageLow && c.coverage <= kCoverageHigh;
    detail += " k=" + std::to_string(c.degree) + ": med " + fmt(c.median_abs_rel_error) +
              ", KS " + fmt(c.normality.ks_distance) + ", cov " + fmt(c.coverage) + ";";
  }
  report(6, ok6,
         "S1 at v=" + fmt(v) + ", " + std::to_string(top1.replicates) +
             " replicates (median < " + fmt(kConsistency) + ", KS < " + fmt(ks_limit) +
             ", coverage in [" + fmt(kCoverageLow) + ", " + fmt(kCoverageHigh) + "]):" + detail);

  // 7
  const auto& prev = top1.prevalence;
  double forms = 0.0;
  std::size_t compared = 0;
  for (const auto& s : report_data.scenarios) {
    for (const auto& r : s.rungs) {
      for (const auto& o : r.outcomes) {
        if (!o.prevalence || !std::isfinite(o.prevalence_individual)) continue;
        forms = std::max(forms, std::abs(o.prevalence->estimate - o.prevalence_individual));
        ++compared;
      }
    }
  }
  const bool ok7 = std::abs(prev.variance_ratio - 1.0) <= kPrevalenceVariance &&
                   prev.coverage >= kCoverageLow && prev.coverage <= kCoverageHigh &&
                   forms < kFormsAgree && compared > 0;
  report(7, ok7,
         "S1 prevalence at v=" + fmt(v) + ": variance ratio " + fmt(prev.variance_ratio) +
             " (within " + fmt(kPrevalenceVariance) + " of 1), coverage " + fmt(prev.coverage) +
             " over " + std::to_string(prev.count) + "; class-sum vs individual-sum max diff " +
             fmt(forms) + " over " + std::to_string(compared) + " estimates (< " +
             fmt(kFormsAgree) + ")");

  // 8
  const auto& s3 = scenario_of(report_data, "S3").rungs.back();
  const bool ok8 = top1.lrt_count >= kLrtSizeReplicates &&
                   top1.lrt_rejection_rate >= kLrtSizeLow &&
                   top1.lrt_rejection_rate <= kLrtSizeHigh && s3.scale == 1e4 &&
                   s3.lrt_rejection_rate > kLrtPower;
  report(8, ok8,
         "LRT size on S1 " + fmt(top1.lrt_rejection_rate) + " over " +
             std::to_string(top1.lrt_count) + " (in [" + fmt(kLrtSizeLow) + ", " +
             fmt(kLrtSizeHigh) + "]); power on S3 at v=" + fmt(s3.scale) + " " +
             fmt(s3.lrt_rejection_rate) + " (> " + fmt(kLrtPower) + ")");

  // 9
  const auto& s2 = scenario_of(report_data, "S2").rungs.back();
  const double ours = std::abs(s2.prevalence.bias);
  const double theirs = std::abs(s2.baseline.bias);
  const double se = std::hypot(s2.prevalence.bias_se, s2.baseline.bias_se);
  const double gap = (theirs - ours) / se;
  report(9, ours < theirs && gap > kBaselineGapSe,
         "S2 at v=" + fmt(s2.scale) + ": |bias| " + fmt(ours) + " vs inverse-degree " +
             fmt(theirs) + ", gap " + fmt(gap) + " MC SE (> " + fmt(kBaselineGapSe) + ")");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism(const std::string& plan) {
  const auto root = std::filesystem::temp_directory_path() / "rdscp_acceptance";
  std::filesystem::remove_all(root);
  bool ok = true;
  std::string detail;
  for (const char* run : {"a", "b"}) {
    char* json = nullptr;
    int passed = 0;
    const auto status =
        rds_validate(plan.c_str(), (root / run).c_str(), 0, 0, &json, &passed);
    if (status != RDS_OK) {
      ok = false;
      detail = std::string(" validate failed: ") + rds_last_error();
    }
    rds_string_free(json);
  }
  std::size_t bytes = 0;
  if (ok) {
    for (const char* file : {"report.json", "rungs.csv", "classes.csv", "checks.csv",
                             "replicates.csv"}) {
      const auto a = slurp(root / "a" / file);
      const auto b = slurp(root / "b" / file);
      ok &= !a.empty() && a == b;
      bytes += a.size();
    }
  }
  std::filesystem::remove_all(root);
  report(10, ok,
         "two validate runs on the shipped plan: outputs byte-identical (" +
             std::to_string(bytes) + " bytes compared)" + detail);
}

}  // namespace

int main(int argc, char** argv) {
  std::string plan_path = RDSCP_DEFAULT_PLAN;
  if (argc > 1) plan_path = argv[1];
  try {
    score_correctness();
    stationarity();
    root_uniqueness();
    const auto plan = io::load_plan(plan_path);
    const auto experiment = run_experiment(plan);
    kurtz_convergence(experiment);
    information_consistency();
    harness_criteria(experiment);
    determinism(plan_path);
  } catch (const std::exception& e) {
    std::printf("FAIL    aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
