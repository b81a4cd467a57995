#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "rds/error.hpp"
#include "rds/prevalence.hpp"
#include "rds/simulator.hpp"
#include "support.hpp"

using namespace rds;
using rds::testing::path_of;
using rds::testing::Recruit;

namespace {

ClassEstimate estimate(int degree, std::int64_t recruited, double size, double se,
                       EstimateFlag flag = EstimateFlag::Ok) {
  ClassEstimate c;
  c.degree = degree;
  c.recruited = recruited;
  c.size = size;
  c.size_se = se;
  c.flag = flag;
  return c;
}

FitResult fit_of(std::vector<ClassEstimate> classes) {
  FitResult r;
  r.classes = std::move(classes);
  for (const auto& c : r.classes) {
    if (c.flag == EstimateFlag::Ok) r.total_size += c.size;
  }
  return r;
}

/// `positives` of `count` recruits of one degree, spaced through (start, start + 1).
void add(std::vector<Recruit>& out, int degree, int count, int positives, double start) {
  for (int i = 0; i < count; ++i) {
    out.push_back({start + (i + 1.0) / (count + 1.0), degree, i < positives ? 1 : 0});
  }
}

}  // namespace

TEST_CASE("normal critical value") {
  CHECK(normal_critical_value(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_critical_value(0.9) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK_THROWS(normal_critical_value(1.0));
}

TEST_CASE("two-class weight covariance matches the hand derivation") {
  const double n1 = 300.0, n2 = 700.0, v1 = 400.0, v2 = 900.0;
  Eigen::VectorXd sizes(2), vars(2);
  sizes << n1, n2;
  vars << v1, v2;
  const auto cov = normalized_weight_covariance(sizes, vars);
  const double t = n1 + n2;
  const double var_f1 = (n2 * n2 * v1 + n1 * n1 * v2) / std::pow(t, 4);
  CHECK(cov(0, 0) == doctest::Approx(var_f1).epsilon(1e-13));
  CHECK(cov(1, 1) == doctest::Approx(var_f1).epsilon(1e-13));
  CHECK(cov(0, 1) == doctest::Approx(-var_f1).epsilon(1e-13));
}

TEST_CASE("weight covariance rows sum to zero") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(1.0, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd sizes(4), vars(4);
    for (int k = 0; k < 4; ++k) {
      sizes[k] = u(rng);
      vars[k] = u(rng);
    }
    const auto cov = normalized_weight_covariance(sizes, vars);
    CHECK(cov.rowwise().sum().cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("diagonal weight covariance gives the two-sum form") {
  Eigen::VectorXd f(3), p(3), pv(3);
  f << 0.5, 0.3, 0.2;
  p << 0.1, 0.2, 0.35;
  pv << 1e-3, 2e-3, 3e-3;
  Eigen::VectorXd fv(3);
  fv << 4e-4, 5e-4, 6e-4;
  double expected = 0.0;
  for (int k = 0; k < 3; ++k) expected += p[k] * p[k] * fv[k] + f[k] * f[k] * pv[k];
  CHECK(compose_prevalence_variance(f, p, fv.asDiagonal().toDenseMatrix(), pv) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("census: no sampling variance within classes") {
  std::vector<Recruit> r;
  add(r, 1, 20, 5, 0.0);
  add(r, 2, 30, 12, 1.0);
  const auto traj = path_of(r, 3, 3.0);
  const auto est = estimate_prevalence(traj, fit_of({estimate(1, 20, 20.0, 2.0),
                                                     estimate(2, 30, 30.0, 3.0)}),
                                       0.95);
  for (const auto& c : est.classes) CHECK(c.p_variance == 0.0);
  CHECK(est.within_term == 0.0);
  CHECK(est.estimate == doctest::Approx((5.0 + 12.0) / 50.0));
}

TEST_CASE("all positive: prevalence is one with no weight term") {
  std::vector<Recruit> r;
  add(r, 1, 15, 15, 0.0);
  add(r, 3, 25, 25, 1.0);
  const auto est = estimate_prevalence(path_of(r, 3, 3.0),
                                       fit_of({estimate(1, 15, 60.0, 9.0),
                                               estimate(3, 25, 45.0, 7.0)}),
                                       0.95);
  CHECK(est.estimate == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(est.weight_term) < 1e-18);
  CHECK(est.within_term == 0.0);
}

TEST_CASE("class-sum and individual-sum forms agree and stay within class bounds") {
  std::mt19937_64 rng(12);
  const PopulationSpec spec({{2, 500, 1.0, 50}, {3, 300, 1.5, 60}, {4, 200, 2.0, 70}});
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const auto sim = simulate({spec, {InviterMode::AllActive, 0.0, 50}, MaxTime{3.0}, rng()});
    FitResult result;
    try {
      result = fit(sim.trajectory);
    } catch (const Error&) {
      continue;
    }
    PrevalenceEstimate est;
    try {
      est = estimate_prevalence(sim.trajectory, result, 0.95);
    } catch (const std::exception&) {
      continue;
    }
    ++checked;
    CHECK(prevalence_individual_sum(sim.trajectory, result) ==
          doctest::Approx(est.estimate).epsilon(1e-12));
    double lo = 1.0, hi = 0.0;
    for (const auto& c : est.classes) {
      lo = std::min(lo, c.p_hat);
      hi = std::max(hi, c.p_hat);
    }
    CHECK(est.estimate >= lo - 1e-15);
    CHECK(est.estimate <= hi + 1e-15);
    CHECK(est.ci.contains(est.estimate));
    CHECK(est.variance == doctest::Approx(est.weight_term + est.within_term));
  }
  CHECK(checked >= 25);
}

TEST_CASE("scaling every size leaves the estimate and weight term unchanged") {
  std::vector<Recruit> r;
  add(r, 1, 20, 4, 0.0);
  add(r, 2, 30, 18, 1.0);
  const auto traj = path_of(r, 3, 3.0);
  const auto a = estimate_prevalence(
      traj, fit_of({estimate(1, 20, 80.0, 10.0), estimate(2, 30, 120.0, 20.0)}), 0.95);
  const auto b = estimate_prevalence(
      traj, fit_of({estimate(1, 20, 800.0, 100.0), estimate(2, 30, 1200.0, 200.0)}), 0.95);
  CHECK(b.estimate == doctest::Approx(a.estimate).epsilon(1e-14));
  CHECK(b.weight_term == doctest::Approx(a.weight_term).epsilon(1e-12));
}

TEST_CASE("exact sizes: variance is the within-class term alone") {
  std::vector<Recruit> r;
  add(r, 1, 20, 4, 0.0);
  add(r, 2, 30, 18, 1.0);
  const auto est = estimate_prevalence(
      path_of(r, 3, 3.0), fit_of({estimate(1, 20, 80.0, 0.0), estimate(2, 30, 120.0, 0.0)}),
      0.95);
  CHECK(est.weight_term == 0.0);
  CHECK(est.variance == est.within_term);
  const double p1 = 0.2, p2 = 0.6;
  const double within = 0.16 * p1 * (1 - p1) / 20 * (60.0 / 79.0) +
                        0.36 * p2 * (1 - p2) / 30 * (90.0 / 119.0);
  CHECK(est.within_term == doctest::Approx(within).epsilon(1e-13));
}

TEST_CASE("single class: the interval is the hypergeometric one") {
  std::vector<Recruit> r;
  add(r, 2, 40, 10, 0.0);
  const auto est =
      estimate_prevalence(path_of(r, 3, 2.0), fit_of({estimate(2, 40, 100.0, 15.0)}), 0.95);
  const double var = 0.25 * 0.75 / 40.0 * (60.0 / 99.0);
  CHECK(est.classes[0].weight == 1.0);
  CHECK(est.weight_term == doctest::Approx(0.0));
  CHECK(est.variance == doctest::Approx(var).epsilon(1e-13));
  const double half = 1.959963984540054 * std::sqrt(var);
  CHECK(est.ci.lower == doctest::Approx(0.25 - half).epsilon(1e-12));
  CHECK(est.ci.upper == doctest::Approx(0.25 + half).epsilon(1e-12));
}

TEST_CASE("population total: unidentified classes count their recruits") {
  const auto result = fit_of({estimate(1, 30, 120.0, 10.0),
                              estimate(2, 7, INFINITY, NAN, EstimateFlag::NonIdentifiable),
                              estimate(3, 40, 90.0, 5.0)});
  const auto pop = estimate_population(result, 0.95);
  CHECK(pop.lower_bound);
  CHECK(pop.size == 120.0 + 90.0 + 7.0);
  CHECK(pop.sampled == 77);
  CHECK(pop.ci.lower >= 77.0);
  CHECK(pop.ci.upper == doctest::Approx(217.0 + 1.959963984540054 * std::sqrt(125.0)));
}

TEST_CASE("prevalence rejects degenerate inputs") {
  std::vector<Recruit> r;
  add(r, 1, 1, 1, 0.0);
  CHECK_THROWS(estimate_prevalence(path_of(r, 3, 2.0), fit_of({estimate(1, 1, 1.0, 0.5)}), 0.95));
  CHECK_THROWS_AS(
      estimate_prevalence(path_of(r, 3, 2.0),
                          fit_of({estimate(1, 1, INFINITY, NAN, EstimateFlag::NonIdentifiable)}),
                          0.95),
      Error);
  const auto missing = path_of({{0.5, 1}}, 3, 2.0);
  CHECK_THROWS(estimate_prevalence(missing, fit_of({estimate(1, 1, 5.0, 1.0)}), 0.95));
}

TEST_CASE("seed outcomes enter only on request") {
  std::vector<Event> events;
  for (int i = 0; i < 10; ++i) events.push_back({0.1 * (i + 1), 1, i < 2, EventKind::Recruitment, i});
  std::vector<SeedRecord> seeds(4, SeedRecord{1, true});
  const Trajectory traj(events, seeds, 4, 2.0);
  const auto result = fit_of({estimate(1, 10, 50.0, 5.0)});
  CHECK(estimate_prevalence(traj, result, 0.95).estimate == doctest::Approx(0.2));
  PrevalenceOptions with_seeds;
  with_seeds.include_seed_outcomes = true;
  CHECK(estimate_prevalence(traj, result, 0.95, with_seeds).estimate ==
        doctest::Approx(6.0 / 14.0));
  CHECK(prevalence_individual_sum(traj, result, with_seeds) == doctest::Approx(6.0 / 14.0));
}
