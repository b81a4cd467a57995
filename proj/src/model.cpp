#include "rds/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rds/error.hpp"

namespace rds {

PopulationSpec::PopulationSpec(std::vector<DegreeClass> classes,
                               int max_degree_bound)
    : classes_(std::move(classes)) {
  if (classes_.empty()) {
    throw invalid_argument("population needs at least one degree class");
  }
  std::sort(classes_.begin(), classes_.end(),
            [](const DegreeClass& a, const DegreeClass& b) {
              return a.degree < b.degree;
            });
  min_size_ = classes_.front().size;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& c = classes_[i];
    const std::string where = "class with degree " + std::to_string(c.degree);
    if (c.degree < 1) throw invalid_argument(where + ": degree must be >= 1");
    if (c.degree > max_degree_bound) {
      throw invalid_argument(where + ": degree exceeds the bound " +
                             std::to_string(max_degree_bound));
    }
    if (i > 0 && classes_[i - 1].degree == c.degree) {
      throw invalid_argument(where + ": duplicate degree");
    }
    if (c.size < 1) throw invalid_argument(where + ": size must be >= 1");
    if (!(c.beta > 0.0) || !std::isfinite(c.beta)) {
      throw invalid_argument(where + ": beta must be finite and > 0");
    }
    if (c.infected < 0 || c.infected > c.size) {
      throw invalid_argument(where + ": infected must lie in [0, size]");
    }
    total_ += c.size;
    min_size_ = std::min(min_size_, c.size);
  }
}

std::optional<std::size_t> PopulationSpec::find(int degree) const {
  auto it = std::lower_bound(
      classes_.begin(), classes_.end(), degree,
      [](const DegreeClass& c, int d) { return c.degree < d; });
  if (it == classes_.end() || it->degree != degree) return std::nullopt;
  return static_cast<std::size_t>(it - classes_.begin());
}

std::vector<int> PopulationSpec::degrees() const {
  std::vector<int> out;
  out.reserve(classes_.size());
  for (const auto& c : classes_) out.push_back(c.degree);
  return out;
}

std::string to_string(InviterMode mode) {
  switch (mode) {
    case InviterMode::AllActive:
      return "all_active";
    case InviterMode::RemovalRate:
      return "removal_rate";
    case InviterMode::FixedPool:
      return "fixed_pool";
  }
  return "unknown";
}

InviterMode inviter_mode_from_string(const std::string& name) {
  if (name == "all_active") return InviterMode::AllActive;
  if (name == "removal_rate") return InviterMode::RemovalRate;
  if (name == "fixed_pool") return InviterMode::FixedPool;
  throw parse_error("unknown inviter mode '" + name +
                    "' (expected all_active, removal_rate or fixed_pool)");
}

InviterAccounting accounting_for(InviterMode mode) {
  return mode == InviterMode::FixedPool ? InviterAccounting::Fixed
                                        : InviterAccounting::Growing;
}

Trajectory::Trajectory(std::vector<Event> events, std::vector<SeedRecord> seeds,
                       std::int64_t initial_inviters, double tau,
                       InviterAccounting accounting,
                       std::vector<int> class_degrees)
    : events_(std::move(events)),
      seeds_(std::move(seeds)),
      initial_inviters_(initial_inviters),
      tau_(tau),
      accounting_(accounting) {
  if (initial_inviters_ < 0) {
    throw invalid_argument("initial inviter count must be non-negative");
  }
  if (!std::isfinite(tau_) || tau_ < 0.0) {
    throw invalid_argument("observation horizon must be finite and >= 0");
  }
  std::stable_sort(events_.begin(), events_.end(),
                   [](const Event& a, const Event& b) {
                     if (a.time != b.time) return a.time < b.time;
                     return a.source_row < b.source_row;
                   });

  std::set<int> degrees(class_degrees.begin(), class_degrees.end());
  for (const auto& e : events_) {
    const std::string where = "event at row " + std::to_string(e.source_row);
    if (!std::isfinite(e.time) || e.time < 0.0 || e.time > tau_) {
      throw invalid_argument(where + ": time outside [0, tau]");
    }
    if (e.kind == EventKind::Recruitment) {
      if (e.degree < 1) throw invalid_argument(where + ": degree must be >= 1");
      degrees.insert(e.degree);
    }
  }
  for (int d : degrees) {
    if (d < 1) throw invalid_argument("class degrees must be >= 1");
  }
  degrees_.assign(degrees.begin(), degrees.end());
  class_times_.resize(degrees_.size());

  event_class_.reserve(events_.size());
  inviters_after_.reserve(events_.size());
  std::int64_t inviters = initial_inviters_;
  for (const auto& e : events_) {
    if (e.kind == EventKind::Recruitment) {
      const std::size_t k = *class_index(e.degree);
      event_class_.push_back(k);
      class_times_[k].push_back(e.time);
      ++recruitments_;
      if (accounting_ == InviterAccounting::Growing) ++inviters;
    } else {
      event_class_.push_back(0);
      if (accounting_ == InviterAccounting::Growing) {
        if (inviters == 0) {
          throw invalid_argument("removal at row " +
                                 std::to_string(e.source_row) +
                                 " leaves a negative inviter count");
        }
        --inviters;
      }
    }
    inviters_after_.push_back(inviters);
  }
}

std::optional<std::size_t> Trajectory::class_index(int degree) const {
  auto it = std::lower_bound(degrees_.begin(), degrees_.end(), degree);
  if (it == degrees_.end() || *it != degree) return std::nullopt;
  return static_cast<std::size_t>(it - degrees_.begin());
}

std::int64_t Trajectory::count(std::size_t class_index, double t) const {
  const auto& times = class_times_.at(class_index);
  return std::upper_bound(times.begin(), times.end(), t) - times.begin();
}

std::int64_t Trajectory::inviters(double t) const {
  auto it = std::upper_bound(
      events_.begin(), events_.end(), t,
      [](double value, const Event& e) { return value < e.time; });
  if (it == events_.begin()) return initial_inviters_;
  return inviters_after_[static_cast<std::size_t>(it - events_.begin()) - 1];
}

Trajectory Trajectory::with_accounting(InviterAccounting accounting) const {
  return Trajectory(events_, seeds_, initial_inviters_, tau_, accounting,
                    degrees_);
}

Trajectory Trajectory::rescaled(double factor) const {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw invalid_argument("time rescaling factor must be positive");
  }
  auto events = events_;
  for (auto& e : events) e.time *= factor;
  return Trajectory(std::move(events), seeds_, initial_inviters_,
                    tau_ * factor, accounting_, degrees_);
}

Trajectory Trajectory::relabeled(
    std::span<const std::pair<int, int>> mapping) const {
  auto map_degree = [&](int d) {
    for (const auto& [from, to] : mapping) {
      if (from == d) return to;
    }
    return d;
  };
  auto events = events_;
  for (auto& e : events) {
    if (e.kind == EventKind::Recruitment) e.degree = map_degree(e.degree);
  }
  auto seeds = seeds_;
  for (auto& s : seeds) s.degree = map_degree(s.degree);
  std::vector<int> degrees;
  for (int d : degrees_) degrees.push_back(map_degree(d));
  return Trajectory(std::move(events), std::move(seeds), initial_inviters_,
                    tau_, accounting_, std::move(degrees));
}

Trajectory Trajectory::truncated(double horizon) const {
  if (!(horizon >= 0.0) || horizon > tau_) {
    throw invalid_argument("truncation horizon must lie in [0, tau]");
  }
  std::vector<Event> events;
  for (const auto& e : events_) {
    if (e.time <= horizon) events.push_back(e);
  }
  return Trajectory(std::move(events), seeds_, initial_inviters_, horizon,
                    accounting_, degrees_);
}

double intensity(const PopulationSpec& spec, std::size_t class_index,
                 std::int64_t recruited, std::int64_t inviters) {
  const auto& c = spec.at(class_index);
  if (recruited < 0 || recruited > c.size) {
    throw invalid_argument("class " + std::to_string(c.degree) +
                           ": recruited count " + std::to_string(recruited) +
                           " exceeds class size " + std::to_string(c.size));
  }
  if (inviters < 0) throw invalid_argument("inviter count must be >= 0");
  return c.beta / static_cast<double>(spec.total_size()) *
         static_cast<double>(inviters) *
         static_cast<double>(c.size - recruited);
}

PathIntegrals path_integrals(const Trajectory& trajectory) {
  return path_integrals(trajectory, 0.0, trajectory.tau());
}

PathIntegrals path_integrals(const Trajectory& trajectory, double from,
                             double to) {
  if (!(from >= 0.0) || !(to >= from) || to > trajectory.tau()) {
    throw invalid_argument("integration window must satisfy 0 <= from <= to <= tau");
  }
  const std::size_t d = trajectory.class_count();
  PathIntegrals out;
  out.count_inviter_time.assign(d, 0.0);
  out.final_counts.assign(d, 0);

  std::vector<std::int64_t> counts(d, 0);
  std::int64_t inviters = trajectory.initial_inviters();
  double previous = 0.0;
  auto accumulate = [&](double until) {
    const double length = std::min(until, to) - std::max(previous, from);
    if (length > 0.0) {
      const double weight = static_cast<double>(inviters) * length;
      out.inviter_time += weight;
      for (std::size_t k = 0; k < d; ++k) {
        out.count_inviter_time[k] += static_cast<double>(counts[k]) * weight;
      }
    }
  };

  const auto events = trajectory.events();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.time > to) break;
    accumulate(e.time);
    if (e.kind == EventKind::Recruitment) ++counts[trajectory.event_class(i)];
    inviters = trajectory.inviters_after(i);
    previous = e.time;
  }
  accumulate(to);
  out.final_counts = counts;
  return out;
}

std::vector<ClassStatistics> class_statistics(const Trajectory& trajectory) {
  const auto integrals = path_integrals(trajectory);
  std::vector<ClassStatistics> out(trajectory.class_count());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].recruited = integrals.final_counts[k];
    out[k].inviter_time = integrals.inviter_time;
    out[k].count_inviter_time = integrals.count_inviter_time[k];
  }
  return out;
}

}  // namespace rds
