#pragma once

// Maximum-likelihood inference for the recruitment counting process.
//
// The log-likelihood of a path observed on [0, tau] is
//
//   C = sum_events log(beta_k / N * I_{t-} * (N_k - n_{k,t-}))
//       - sum_k beta_k / N * (N_k * int I dt - int n_k I dt).
//
// With the rate rho_k = beta_k / N held per class, every class separates:
// rho_k has a closed-form stationary point and N_k solves a one-dimensional
// equation in the sufficient statistics (n_k, int I dt, int n_k I dt).

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rds/model.hpp"

namespace rds {

/// Per-class (N_k, beta_k) aligned with Trajectory::degrees(); `total` is the
/// population size N in beta_k / N and is held fixed under differentiation.
struct ModelParameters {
  std::vector<double> sizes;
  std::vector<double> betas;
  double total = 0.0;

  static ModelParameters from_sizes(std::vector<double> sizes,
                                    std::vector<double> betas);
  std::size_t class_count() const { return sizes.size(); }
};

struct LogLikelihood {
  double value = 0.0;
  std::string diagnostic;  // set when value is -inf
  bool finite() const { return std::isfinite(value); }
};

LogLikelihood loglik(const Trajectory& trajectory, const ModelParameters& params);

/// Gradient ordered (dC/dN_1..dC/dN_d, dC/dbeta_1..dC/dbeta_d).
Eigen::VectorXd score(const Trajectory& trajectory, const ModelParameters& params);

/// Minus the Hessian of C in the same ordering. The N-N, beta-beta and N-beta
/// blocks are diagonal; the beta-beta block does not depend on the sizes.
Eigen::MatrixXd observed_information(const Trajectory& trajectory,
                                     const ModelParameters& params);

/// Re-expresses an information matrix in densities f_k = N_k / scale (with
/// N = scale) and divides by scale, for comparison against the limit.
Eigen::MatrixXd density_scaled_information(const Eigen::MatrixXd& information,
                                           double scale);

enum class EstimateFlag { Ok, NonIdentifiable, BoundaryHit };
std::string to_string(EstimateFlag flag);

struct SizeSolverOptions {
  double lower_offset = 1e-6;  // search starts at max(n - 1, m) + offset
  double cap_factor = 1e6;     // search ends at cap_factor * n
};

struct SizeSolution {
  double size = 0.0;
  EstimateFlag flag = EstimateFlag::NonIdentifiable;
  std::string note;
};

/// sum_{i<n} 1/(N - i) via digamma for large n, direct summation otherwise.
double harmonic_window(double size, std::int64_t count);

/// h(N) = sum_{i<n} 1/(N - i) - n * A / (N * A - B).
double size_equation(const ClassStatistics& stats, double size);

/// Root of the size equation above n - 1. No sign change on the search
/// interval means the likelihood keeps increasing towards a boundary.
SizeSolution solve_class_size(const ClassStatistics& stats,
                              const SizeSolverOptions& options = {});

struct FitOptions {
  std::int64_t min_class_occupancy = 10;  // pool classes with fewer recruits
  SizeSolverOptions solver;
};

struct PoolingRecord {
  int from_degree = 0;
  int into_degree = 0;
  std::int64_t recruits = 0;
};

/// Merges classes with fewer than `min_occupancy` recruits into the nearest
/// degree class that meets the threshold (ties go to the lower degree).
/// Nothing is pooled when no class meets it.
std::pair<Trajectory, std::vector<PoolingRecord>> pool_sparse_classes(
    const Trajectory& trajectory, std::int64_t min_occupancy);

struct ClassEstimate {
  int degree = 0;
  std::int64_t recruited = 0;
  double size = 0.0;   // N_hat_k, unrounded
  double rate = 0.0;   // rho_hat_k = beta_k / N
  double beta = 0.0;   // rho_hat_k * N_hat
  double size_se = NAN;
  double beta_se = NAN;
  EstimateFlag flag = EstimateFlag::NonIdentifiable;
  std::string note;

  std::int64_t rounded_size() const { return std::llround(size); }
};

struct FitResult {
  std::vector<ClassEstimate> classes;   // aligned with the pooled trajectory
  std::vector<PoolingRecord> pooling;
  double total_size = 0.0;              // sum over OK classes
  double loglik = NAN;                  // at the estimate, OK classes only
  /// Inverse observed information in (N_1..N_d, beta_1..beta_d) with N fixed
  /// at total_size. Block diagonal per class. Present only if every class is
  /// OK and the information is positive definite.
  std::optional<Eigen::MatrixXd> covariance;
  /// Covariance of (N_hat_k, beta_hat_k) once beta_hat_k = rho_hat_k * N_hat
  /// couples the classes through N_hat (delta method).
  std::optional<Eigen::MatrixXd> size_beta_covariance;
  std::string diagnostics;

  bool all_ok() const;
  std::vector<int> degrees() const;
  ModelParameters parameters() const;
};

/// Pools sparse classes, solves every class and assembles covariances.
/// Throws ErrorKind::Inference when no class yields a finite estimate.
FitResult fit(const Trajectory& trajectory, const FitOptions& options = {});

/// The same without pooling; the result aligns with trajectory.degrees().
FitResult fit_classes(const Trajectory& trajectory,
                      const SizeSolverOptions& options = {});

struct LrtResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  double loglik_free = 0.0;
  double loglik_constrained = 0.0;
  double proportionality = 0.0;  // c in beta_k = c * k
  std::vector<int> degrees;      // classes entering the test
};

/// Likelihood-ratio test of beta_k = c * k against free beta_k, over the
/// classes with an OK estimate. Throws when fewer than two remain.
LrtResult lrt_proportional(const Trajectory& trajectory,
                           const FitOptions& options = {});

}  // namespace rds
