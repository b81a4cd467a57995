#pragma once

// Domain types for respondent-driven sampling viewed as a multivariate
// counting process. Class k holds N_k individuals; while I inviters are
// active and n_k members of the class have been recruited, class-k
// recruitments arrive with intensity (beta_k / N) * I * (N_k - n_k).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rds {

inline constexpr int kDefaultMaxDegree = 10000;

struct DegreeClass {
  int degree = 1;
  std::int64_t size = 1;
  double beta = 1.0;  // rate per inviter per susceptible, scaled by 1/N
  std::int64_t infected = 0;
};

/// Ground truth population: classes ordered by degree, degrees distinct.
class PopulationSpec {
 public:
  explicit PopulationSpec(std::vector<DegreeClass> classes,
                          int max_degree_bound = kDefaultMaxDegree);

  std::span<const DegreeClass> classes() const { return classes_; }
  const DegreeClass& at(std::size_t index) const { return classes_.at(index); }
  std::size_t class_count() const { return classes_.size(); }

  std::int64_t total_size() const { return total_; }
  int max_degree() const { return classes_.back().degree; }
  std::int64_t min_class_size() const { return min_size_; }

  std::optional<std::size_t> find(int degree) const;
  std::vector<int> degrees() const;

 private:
  std::vector<DegreeClass> classes_;
  std::int64_t total_ = 0;
  std::int64_t min_size_ = 0;
};

enum class InviterMode { AllActive, RemovalRate, FixedPool };

struct InviterPolicy {
  InviterMode mode = InviterMode::AllActive;
  double gamma = 0.0;  // per-inviter retirement rate, RemovalRate only
  std::int64_t initial = 1;
};

std::string to_string(InviterMode mode);
InviterMode inviter_mode_from_string(const std::string& name);

enum class EventKind { Recruitment, InviterRemoval };

struct Event {
  double time = 0.0;
  int degree = 0;                 // 0 for removals
  std::optional<bool> infected;   // empty for removals
  EventKind kind = EventKind::Recruitment;
  std::int64_t source_row = 0;    // tiebreak for equal times
};

struct SeedRecord {
  int degree = 0;
  std::optional<bool> infected;
};

/// How the inviter count is rebuilt from an event log.
///   Growing: I_t = I_0 + recruits - removals (AllActive and RemovalRate).
///   Fixed:   I_t = I_0 regardless of events (FixedPool).
enum class InviterAccounting { Growing, Fixed };

InviterAccounting accounting_for(InviterMode mode);

/// Observed recruitment path on [0, tau]. Events are kept sorted by
/// (time, source_row); class-indexed queries use the position of the degree
/// in degrees().
class Trajectory {
 public:
  Trajectory(std::vector<Event> events, std::vector<SeedRecord> seeds,
             std::int64_t initial_inviters, double tau,
             InviterAccounting accounting = InviterAccounting::Growing,
             std::vector<int> class_degrees = {});

  std::span<const Event> events() const { return events_; }
  std::span<const SeedRecord> seeds() const { return seeds_; }
  std::int64_t initial_inviters() const { return initial_inviters_; }
  double tau() const { return tau_; }
  InviterAccounting accounting() const { return accounting_; }

  /// Sorted distinct degrees: every recruited degree plus any declared ones.
  std::span<const int> degrees() const { return degrees_; }
  std::size_t class_count() const { return degrees_.size(); }
  std::optional<std::size_t> class_index(int degree) const;

  /// Right-continuous n_{k,t}.
  std::int64_t count(std::size_t class_index, double t) const;
  /// Right-continuous I_t.
  std::int64_t inviters(double t) const;
  std::int64_t final_count(std::size_t class_index) const {
    return class_times_[class_index].size();
  }
  std::int64_t recruitment_count() const { return recruitments_; }

  /// Inviter count just after events_[i] (ties applied in stored order).
  std::int64_t inviters_after(std::size_t event_index) const {
    return inviters_after_[event_index];
  }
  /// Class index of events_[i]; meaningless for removals.
  std::size_t event_class(std::size_t event_index) const {
    return event_class_[event_index];
  }

  Trajectory with_accounting(InviterAccounting accounting) const;
  /// Multiplies every time (and tau) by factor > 0.
  Trajectory rescaled(double factor) const;
  /// Relabels degrees via (from, to) pairs; unlisted degrees are kept.
  Trajectory relabeled(std::span<const std::pair<int, int>> mapping) const;
  /// Restricts observation to [0, horizon], horizon <= tau.
  Trajectory truncated(double horizon) const;

 private:
  std::vector<Event> events_;
  std::vector<SeedRecord> seeds_;
  std::int64_t initial_inviters_;
  double tau_;
  InviterAccounting accounting_;
  std::vector<int> degrees_;
  std::vector<std::size_t> event_class_;
  std::vector<std::int64_t> inviters_after_;
  std::vector<std::vector<double>> class_times_;
  std::int64_t recruitments_ = 0;
};

/// (beta_k / N) * I * (N_k - n_k), evaluated on pre-jump (left-limit) state.
double intensity(const PopulationSpec& spec, std::size_t class_index,
                 std::int64_t recruited, std::int64_t inviters);

/// Exact Lebesgue integrals of the step functions over [from, to].
struct PathIntegrals {
  double inviter_time = 0.0;                // integral of I_t dt
  std::vector<double> count_inviter_time;   // integral of n_{k,t} I_t dt
  std::vector<std::int64_t> final_counts;   // n_{k,to}
};

PathIntegrals path_integrals(const Trajectory& trajectory);
PathIntegrals path_integrals(const Trajectory& trajectory, double from,
                             double to);

/// Per-class sufficient statistics for the size equation.
struct ClassStatistics {
  std::int64_t recruited = 0;      // n_{k,tau}
  double inviter_time = 0.0;       // integral of I_t dt
  double count_inviter_time = 0.0; // integral of n_{k,t} I_t dt
};

std::vector<ClassStatistics> class_statistics(const Trajectory& trajectory);

}  // namespace rds
