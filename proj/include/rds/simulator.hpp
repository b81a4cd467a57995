#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "rds/model.hpp"

namespace rds {

struct MaxTime {
  double horizon = 1.0;
};
struct MaxSample {
  std::int64_t recruits = 0;
};
/// Stops once the total number of recruits equals the smallest class size.
struct MinClassExhausted {};

using StoppingRule = std::variant<MaxTime, MaxSample, MinClassExhausted>;

struct SimConfig {
  PopulationSpec population;
  InviterPolicy policy;
  StoppingRule stop = MaxTime{};
  std::uint64_t seed = 0;
};

enum class Termination {
  StoppingRule,
  Exhausted,     // every class fully recruited
  NoInviters,    // total rate hit zero because the inviter pool emptied
};

std::string to_string(Termination termination);

struct SimulatedTrajectory {
  Trajectory trajectory;
  PopulationSpec truth;
  Termination termination = Termination::StoppingRule;
  bool truncated() const { return termination != Termination::StoppingRule; }
};

/// Exact event-driven simulation. Between jumps every intensity is constant,
/// so the waiting time is exponential in the total rate and the event type is
/// drawn proportionally to the competing rates. Seeds are drawn from the
/// degree distribution but sit outside the recruitable pool.
SimulatedTrajectory simulate(const SimConfig& config);

/// Replicate i uses a stream seeded from (config.seed, i); the output does
/// not depend on `threads`. threads == 0 picks the hardware concurrency.
std::vector<SimulatedTrajectory> replicate(const SimConfig& config,
                                           std::size_t count,
                                           unsigned threads = 1);

std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index);

}  // namespace rds
