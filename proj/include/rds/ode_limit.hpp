#pragma once

// Deterministic large-population limit of the scaled recruitment process.
// With densities f_k = N_k / v and scaled inviter density i(t) = I_t / v the
// recruited fractions follow
//
//   dx_k/dt = beta_k * i(t) * (f_k - x_k),   x_k(0) = 0,
//
// where i(t) = i_0 + sum_k x_k for AllActive, i(t) = i_0 for FixedPool, and
// di/dt = sum_k dx_k/dt - gamma * i for RemovalRate.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "rds/model.hpp"

namespace rds {

struct LimitClass {
  int degree = 1;
  double density = 0.0;  // f_k
  double beta = 0.0;
};

struct LimitPolicy {
  InviterMode mode = InviterMode::AllActive;
  double initial_density = 0.0;  // i_0 = I_0 / v
  double gamma = 0.0;
};

struct LimitOptions {
  double tolerance = 1e-10;        // sup-norm change under step halving
  std::size_t initial_steps = 2048;
  std::size_t max_steps = std::size_t{1} << 22;
  double exhaustion_floor = 1e-6;  // f_k - x_k must stay above floor * f_k
};

class LimitPath {
 public:
  LimitPath(std::vector<LimitClass> classes, LimitPolicy policy,
            std::vector<double> grid, std::vector<Eigen::VectorXd> states);

  std::span<const LimitClass> classes() const { return classes_; }
  const LimitPolicy& policy() const { return policy_; }
  std::span<const double> grid() const { return grid_; }
  double tau() const { return grid_.back(); }
  std::size_t class_count() const { return classes_.size(); }

  /// x_k at grid node j.
  double recruited_at(std::size_t k, std::size_t node) const {
    return states_[node][static_cast<Eigen::Index>(k)];
  }
  /// Scaled inviter density at grid node j.
  double inviters_at(std::size_t node) const {
    return states_[node][static_cast<Eigen::Index>(classes_.size())];
  }

  /// Cubic Hermite interpolation between nodes using the exact vector field.
  double recruited(std::size_t k, double t) const;
  double inviters(double t) const;

  /// Right-hand side of the limit ODE for state (x_1..x_d, i).
  Eigen::VectorXd derivative(const Eigen::VectorXd& state) const;

 private:
  Eigen::VectorXd interpolate(double t) const;

  std::vector<LimitClass> classes_;
  LimitPolicy policy_;
  std::vector<double> grid_;
  std::vector<Eigen::VectorXd> states_;
};

/// Densities f_k = N_k / scale taken from a population.
std::vector<LimitClass> limit_classes(const PopulationSpec& spec, double scale);
LimitPolicy limit_policy(const InviterPolicy& policy, double scale);

/// Fixed-step RK4 refined by step halving until the sup-norm change is below
/// options.tolerance. Throws if some class is exhausted by tau.
LimitPath solve_limit(std::vector<LimitClass> classes, const LimitPolicy& policy,
                      double tau, const LimitOptions& options = {});

/// Diagonal blocks of the asymptotic information matrix,
///   a_ii = int beta_i i / (f_i - x_i),  b_ii = c_ii = int i,
///   d_ii = int i (f_i - x_i) / beta_i,
/// integrated by the trapezoid rule on the path grid. Parameters are ordered
/// (f_1..f_d, beta_1..beta_d).
struct SigmaBlocks {
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd d;

  Eigen::MatrixXd assemble() const;
  /// Inverse through the 2x2 block identity; only AD - BC is inverted.
  Eigen::MatrixXd block_inverse() const;
};

SigmaBlocks sigma_blocks(const LimitPath& path, double exhaustion_floor = 1e-6);
Eigen::MatrixXd sigma_matrix(const LimitPath& path,
                             double exhaustion_floor = 1e-6);

/// The same matrix built from the general definition
///   sigma_ij = int sum_k dX_k/dphi_i dX_k/dphi_j / X_k ds,
/// with X_k = beta_k i (f_k - x_k). Used to confirm the diagonal-block form.
Eigen::MatrixXd sigma_matrix_from_intensity(const LimitPath& path);

/// sup_t max_k |n_{k,t} / scale - x_k(t)| over [0, tau].
double sup_norm_error(const Trajectory& trajectory, const LimitPath& path,
                      double scale);
std::vector<double> check_convergence(std::span<const Trajectory> replicates,
                                      const LimitPath& path, double scale);

/// sup_t max_k |n^a_{k,t} - n^b_{k,t}| / scale between two observed paths.
double sup_norm_distance(const Trajectory& a, const Trajectory& b, double scale);

}  // namespace rds
