#include "rds/simulator.hpp"

#include <cmath>
#include <random>

#include "parallel.hpp"
#include "rds/error.hpp"

namespace rds {

std::string to_string(Termination termination) {
  switch (termination) {
    case Termination::StoppingRule:
      return "stopping_rule";
    case Termination::Exhausted:
      return "exhausted";
    case Termination::NoInviters:
      return "no_inviters";
  }
  return "unknown";
}

std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master),
                    static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

namespace {

std::size_t draw_categorical(std::mt19937_64& rng, const std::vector<double>& weights,
                             double total) {
  std::uniform_real_distribution<double> uniform(0.0, total);
  const double u = uniform(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;  // u landed on the rounding slack at the top
}

}  // namespace

SimulatedTrajectory simulate(const SimConfig& config) {
  const auto& spec = config.population;
  const auto& policy = config.policy;
  if (policy.initial < 1) throw invalid_argument("at least one seed is required");
  if (policy.mode == InviterMode::RemovalRate &&
      (!(policy.gamma >= 0.0) || !std::isfinite(policy.gamma))) {
    throw invalid_argument("removal rate gamma must be finite and >= 0");
  }
  if (const auto* t = std::get_if<MaxTime>(&config.stop);
      t && !(t->horizon >= 0.0)) {
    throw invalid_argument("max_time horizon must be >= 0");
  }
  if (const auto* s = std::get_if<MaxSample>(&config.stop); s && s->recruits < 0) {
    throw invalid_argument("max_sample must be >= 0");
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t d = spec.class_count();
  const double total = static_cast<double>(spec.total_size());

  std::vector<double> sizes(d);
  for (std::size_t k = 0; k < d; ++k) sizes[k] = static_cast<double>(spec.at(k).size);
  std::vector<SeedRecord> seeds;
  seeds.reserve(static_cast<std::size_t>(policy.initial));
  for (std::int64_t s = 0; s < policy.initial; ++s) {
    const auto k = draw_categorical(rng, sizes, total);
    const auto& c = spec.at(k);
    const double p = static_cast<double>(c.infected) / static_cast<double>(c.size);
    seeds.push_back({c.degree, unit(rng) < p});
  }

  std::vector<std::int64_t> remaining(d), infected_remaining(d);
  for (std::size_t k = 0; k < d; ++k) {
    remaining[k] = spec.at(k).size;
    infected_remaining[k] = spec.at(k).infected;
  }
  std::int64_t inviters = policy.initial;
  std::int64_t recruits = 0;
  double t = 0.0;
  double tau = 0.0;
  Termination termination = Termination::StoppingRule;
  std::vector<Event> events;
  std::vector<double> rates(d + 1, 0.0);

  const std::int64_t sample_target =
      std::holds_alternative<MaxSample>(config.stop)
          ? std::get<MaxSample>(config.stop).recruits
          : std::holds_alternative<MinClassExhausted>(config.stop)
                ? spec.min_class_size()
                : -1;
  const double time_limit = std::holds_alternative<MaxTime>(config.stop)
                                ? std::get<MaxTime>(config.stop).horizon
                                : INFINITY;

  for (;;) {
    if (recruits == sample_target) {
      tau = t;
      break;
    }
    double rate_total = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      rates[k] = spec.at(k).beta / total * static_cast<double>(inviters) *
                 static_cast<double>(remaining[k]);
      rate_total += rates[k];
    }
    rates[d] = policy.mode == InviterMode::RemovalRate
                   ? policy.gamma * static_cast<double>(inviters)
                   : 0.0;
    rate_total += rates[d];

    if (!(rate_total > 0.0)) {
      bool all_recruited = true;
      for (auto r : remaining) all_recruited = all_recruited && r == 0;
      termination = all_recruited ? Termination::Exhausted : Termination::NoInviters;
      tau = t;
      break;
    }
    const double wait = -std::log1p(-unit(rng)) / rate_total;
    if (t + wait > time_limit) {
      tau = time_limit;
      break;
    }
    t += wait;
    const std::size_t which = draw_categorical(rng, rates, rate_total);
    Event e;
    e.time = t;
    e.source_row = static_cast<std::int64_t>(events.size()) + 1;
    if (which == d) {
      e.kind = EventKind::InviterRemoval;
      --inviters;
    } else {
      const auto& c = spec.at(which);
      const double p = static_cast<double>(infected_remaining[which]) /
                       static_cast<double>(remaining[which]);
      const bool infected = unit(rng) < p;
      if (infected) --infected_remaining[which];
      --remaining[which];
      e.kind = EventKind::Recruitment;
      e.degree = c.degree;
      e.infected = infected;
      ++recruits;
      if (policy.mode != InviterMode::FixedPool) ++inviters;
    }
    events.push_back(e);
  }

  Trajectory trajectory(std::move(events), std::move(seeds), policy.initial, tau,
                        accounting_for(policy.mode), spec.degrees());
  return SimulatedTrajectory{std::move(trajectory), spec, termination};
}

std::vector<SimulatedTrajectory> replicate(const SimConfig& config,
                                           std::size_t count, unsigned threads) {
  std::vector<std::optional<SimulatedTrajectory>> slots(count);
  detail::parallel_for(count, threads, [&](std::size_t i) {
    SimConfig local = config;
    local.seed = replicate_seed(config.seed, i);
    slots[i].emplace(simulate(local));
  });
  std::vector<SimulatedTrajectory> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace rds
