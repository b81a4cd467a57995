#pragma once

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "rds/model.hpp"
#include "rds/simulator.hpp"

namespace rds::testing {

struct Recruit {
  double time;
  int degree;
  int outcome = -1;  // -1: no outcome
};

inline Trajectory path_of(const std::vector<Recruit>& recruits, std::int64_t initial,
                          double tau,
                          InviterAccounting accounting = InviterAccounting::Growing,
                          std::vector<int> degrees = {}) {
  std::vector<Event> events;
  std::int64_t row = 0;
  for (const auto& r : recruits) {
    Event e;
    e.time = r.time;
    e.degree = r.degree;
    if (r.outcome >= 0) e.infected = r.outcome == 1;
    e.source_row = row++;
    events.push_back(e);
  }
  return Trajectory(std::move(events), {}, initial, tau, accounting, std::move(degrees));
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Small random population for property tests.
inline SimConfig random_small_config(std::mt19937_64& rng, InviterMode mode = InviterMode::AllActive) {
  std::uniform_int_distribution<int> classes(1, 3);
  std::uniform_int_distribution<std::int64_t> size(8, 40);
  std::uniform_real_distribution<double> beta(0.5, 2.0);
  std::vector<DegreeClass> cls;
  const int d = classes(rng);
  for (int k = 0; k < d; ++k) {
    const auto n = size(rng);
    cls.push_back({k + 1, n, beta(rng), n / 3});
  }
  PopulationSpec spec(cls);
  const auto initial = std::max<std::int64_t>(1, spec.total_size() / 10);
  return SimConfig{spec, {mode, 0.3, initial}, MaxTime{1.0}, rng()};
}

}  // namespace rds::testing
