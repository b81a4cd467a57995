#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>

#include "rds/error.hpp"
#include "rds/model.hpp"
#include "support.hpp"

using namespace rds;
using rds::testing::path_of;

TEST_CASE("intensity examples") {
  // N = 100 over two classes so beta / N uses the population total.
  const PopulationSpec spec({{1, 80, 1.0, 0}, {2, 20, 1.0, 0}});
  CHECK(intensity(spec, 1, 20, 10) == 0.0);
  CHECK(intensity(spec, 1, 0, 0) == 0.0);

  const PopulationSpec spec2({{1, 70, 1.0, 0}, {2, 30, 2.0, 0}});
  CHECK(intensity(spec2, 1, 10, 5) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("intensity rejects corrupt state") {
  const PopulationSpec spec({{2, 20, 1.0, 0}});
  CHECK_THROWS_AS(intensity(spec, 0, 21, 1), Error);
  CHECK_THROWS_AS(intensity(spec, 0, -1, 1), Error);
  CHECK_THROWS_AS(intensity(spec, 0, 0, -1), Error);
}

TEST_CASE("intensity is non-negative and vanishes at exhaustion") {
  std::mt19937_64 rng(3);
  const PopulationSpec spec({{1, 15, 0.7, 0}, {3, 9, 1.9, 0}, {5, 4, 3.1, 0}});
  std::uniform_int_distribution<std::int64_t> inv(0, 50);
  for (int trial = 0; trial < 500; ++trial) {
    double total = 0.0;
    for (std::size_t k = 0; k < spec.class_count(); ++k) {
      std::uniform_int_distribution<std::int64_t> n(0, spec.at(k).size);
      const double value = intensity(spec, k, n(rng), inv(rng));
      CHECK(value >= 0.0);
      total += value;
    }
    CHECK(total >= 0.0);
  }
  double exhausted = 0.0;
  for (std::size_t k = 0; k < spec.class_count(); ++k) {
    exhausted += intensity(spec, k, spec.at(k).size, 40);
  }
  CHECK(exhausted == 0.0);
}

TEST_CASE("population spec invariants") {
  const PopulationSpec spec({{4, 10, 1.0, 3}, {1, 30, 2.0, 0}, {2, 5, 0.5, 5}});
  CHECK(spec.total_size() == 45);
  CHECK(spec.max_degree() == 4);
  CHECK(spec.min_class_size() == 5);
  CHECK(spec.degrees() == std::vector<int>{1, 2, 4});
  CHECK(spec.find(2).value() == 1);
  CHECK_FALSE(spec.find(3).has_value());

  CHECK_THROWS(PopulationSpec({}));
  CHECK_THROWS(PopulationSpec({{1, 10, 1.0, 11}}));
  CHECK_THROWS(PopulationSpec({{1, 10, 1.0, -1}}));
  CHECK_THROWS(PopulationSpec({{1, 10, 0.0, 0}}));
  CHECK_THROWS(PopulationSpec({{0, 10, 1.0, 0}}));
  CHECK_THROWS(PopulationSpec({{1, 0, 1.0, 0}}));
  CHECK_THROWS(PopulationSpec({{1, 10, 1.0, 0}, {1, 5, 1.0, 0}}));
  CHECK_THROWS(PopulationSpec({{50, 10, 1.0, 0}}, 20));
}

TEST_CASE("inviter mode names round trip") {
  for (auto mode : {InviterMode::AllActive, InviterMode::RemovalRate, InviterMode::FixedPool}) {
    CHECK(inviter_mode_from_string(to_string(mode)) == mode);
  }
  CHECK_THROWS(inviter_mode_from_string("sometimes"));
  CHECK(accounting_for(InviterMode::FixedPool) == InviterAccounting::Fixed);
  CHECK(accounting_for(InviterMode::RemovalRate) == InviterAccounting::Growing);
}

TEST_CASE("path integrals: no events") {
  const auto traj = path_of({}, 3, 2.0, InviterAccounting::Growing, {2});
  const auto p = path_integrals(traj);
  CHECK(p.inviter_time == 6.0);
  REQUIRE(p.count_inviter_time.size() == 1);
  CHECK(p.count_inviter_time[0] == 0.0);
}

TEST_CASE("path integrals: one recruitment under all-active") {
  const auto traj = path_of({{1.0, 2}}, 1, 2.0);
  const auto p = path_integrals(traj);
  CHECK(p.inviter_time == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(p.count_inviter_time[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(p.final_counts[0] == 1);
}

TEST_CASE("path integrals: fixed pool") {
  const auto traj = path_of({{0.3, 1}, {0.9, 2}, {1.7, 1}}, 7, 2.5, InviterAccounting::Fixed);
  CHECK(path_integrals(traj).inviter_time == doctest::Approx(7.0 * 2.5).epsilon(1e-15));
}

TEST_CASE("step functions are right-continuous") {
  std::vector<Event> events;
  events.push_back({0.5, 1, true, EventKind::Recruitment, 1});
  events.push_back({1.0, 0, std::nullopt, EventKind::InviterRemoval, 2});
  events.push_back({1.5, 1, false, EventKind::Recruitment, 3});
  const Trajectory traj(events, {}, 2, 2.0);
  CHECK(traj.count(0, 0.49) == 0);
  CHECK(traj.count(0, 0.5) == 1);
  CHECK(traj.inviters(0.0) == 2);
  CHECK(traj.inviters(0.5) == 3);
  CHECK(traj.inviters(1.0) == 2);
  CHECK(traj.inviters(1.5) == 3);
  const auto p = path_integrals(traj);
  CHECK(p.inviter_time == doctest::Approx(2 * 0.5 + 3 * 0.5 + 2 * 0.5 + 3 * 0.5));
  CHECK(p.count_inviter_time[0] == doctest::Approx(3 * 0.5 + 2 * 0.5 + 2 * 3 * 0.5));
}

TEST_CASE("trajectory validation") {
  CHECK_THROWS(path_of({{2.5, 1}}, 1, 2.0));
  CHECK_THROWS(path_of({{-0.1, 1}}, 1, 2.0));
  CHECK_THROWS(path_of({{0.1, 0}}, 1, 2.0));
  std::vector<Event> events{{0.1, 0, std::nullopt, EventKind::InviterRemoval, 0},
                            {0.2, 0, std::nullopt, EventKind::InviterRemoval, 1}};
  CHECK_THROWS(Trajectory(events, {}, 1, 1.0));
  CHECK_NOTHROW(Trajectory(events, {}, 1, 1.0, InviterAccounting::Fixed));
}

TEST_CASE("path integrals are additive at a cut point") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto config = rds::testing::random_small_config(rng, InviterMode::RemovalRate);
    const auto traj = simulate(config).trajectory;
    std::uniform_real_distribution<double> cut_dist(0.0, traj.tau());
    const double cut = cut_dist(rng);
    const auto whole = path_integrals(traj);
    const auto left = path_integrals(traj, 0.0, cut);
    const auto right = path_integrals(traj, cut, traj.tau());
    CHECK(rds::testing::relative_error(left.inviter_time + right.inviter_time,
                                       whole.inviter_time) < 1e-13);
    for (std::size_t k = 0; k < traj.class_count(); ++k) {
      CHECK(rds::testing::relative_error(
                left.count_inviter_time[k] + right.count_inviter_time[k],
                whole.count_inviter_time[k]) < 1e-13);
    }
  }
}

TEST_CASE("tied events: reordering by source row leaves integrals unchanged") {
  std::vector<Event> events;
  for (int i = 0; i < 6; ++i) {
    events.push_back({0.5 * (i / 2 + 1), 1 + i % 3, std::nullopt, EventKind::Recruitment, i});
  }
  const Trajectory a(events, {}, 2, 3.0);
  auto shuffled = events;
  for (std::size_t i = 0; i + 1 < shuffled.size(); i += 2) {
    std::swap(shuffled[i].source_row, shuffled[i + 1].source_row);
  }
  std::reverse(shuffled.begin(), shuffled.end());
  const Trajectory b(shuffled, {}, 2, 3.0);
  const auto pa = path_integrals(a);
  const auto pb = path_integrals(b);
  CHECK(pa.inviter_time == pb.inviter_time);
  CHECK(pa.count_inviter_time == pb.count_inviter_time);
  CHECK(pa.final_counts == pb.final_counts);
}

TEST_CASE("trajectory transforms") {
  const auto traj = path_of({{0.2, 1}, {0.4, 3}, {0.9, 1}}, 2, 1.0);
  const auto scaled = traj.rescaled(2.0);
  CHECK(scaled.tau() == 2.0);
  CHECK(path_integrals(scaled).inviter_time ==
        doctest::Approx(2.0 * path_integrals(traj).inviter_time));

  const std::pair<int, int> merge[] = {{3, 1}};
  const auto relabeled = traj.relabeled(merge);
  REQUIRE(relabeled.class_count() == 1);
  CHECK(relabeled.final_count(0) == 3);

  const auto cut = traj.truncated(0.5);
  CHECK(cut.recruitment_count() == 2);
  CHECK(cut.tau() == 0.5);
  CHECK_THROWS(traj.truncated(1.5));
}

TEST_CASE("class statistics match path integrals") {
  const auto traj = path_of({{0.2, 1}, {0.4, 3}, {0.9, 1}}, 2, 1.0);
  const auto stats = class_statistics(traj);
  const auto p = path_integrals(traj);
  REQUIRE(stats.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(stats[k].recruited == p.final_counts[k]);
    CHECK(stats[k].inviter_time == p.inviter_time);
    CHECK(stats[k].count_inviter_time == p.count_inviter_time[k]);
  }
}
