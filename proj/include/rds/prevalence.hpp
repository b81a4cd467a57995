#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rds/inference.hpp"
#include "rds/model.hpp"

namespace rds {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double value) const { return lower <= value && value <= upper; }
};

struct PopulationEstimate {
  double size = 0.0;
  double variance = 0.0;
  Interval ci;
  bool lower_bound = false;  // some class could not be estimated
  std::int64_t sampled = 0;
};

struct ClassPrevalence {
  int degree = 0;
  std::int64_t sampled = 0;
  std::int64_t positives = 0;
  double p_hat = 0.0;
  double p_variance = 0.0;     // hypergeometric plug-in
  double weight = 0.0;         // f_hat_k = N_hat_k / sum_j N_hat_j
  double weight_variance = 0.0;
};

struct PrevalenceEstimate {
  double estimate = 0.0;       // H_hat = sum_k f_hat_k p_hat_k
  double variance = 0.0;       // weight_term + within_term
  double weight_term = 0.0;    // p_hat' Cov(f_hat) p_hat
  double within_term = 0.0;    // sum_k f_hat_k^2 var(p_hat_k)
  Interval ci;
  double confidence = 0.95;
  std::vector<ClassPrevalence> classes;  // OK classes only
  PopulationEstimate population;
};

struct PrevalenceOptions {
  bool include_seed_outcomes = false;
};

/// Two-sided normal quantile for the given confidence level.
double normal_critical_value(double confidence);

/// Delta-method composition of the prevalence variance. `weight_covariance`
/// is the covariance of the normalized weights; with a diagonal matrix this
/// is sum p_k^2 var(f_k) + sum f_k^2 var(p_k).
double compose_prevalence_variance(const Eigen::VectorXd& weights,
                                   const Eigen::VectorXd& p_hat,
                                   const Eigen::MatrixXd& weight_covariance,
                                   const Eigen::VectorXd& p_variance);

/// Covariance of f_hat_k = N_hat_k / sum_j N_hat_j given independent class
/// sizes with the listed variances.
Eigen::MatrixXd normalized_weight_covariance(const Eigen::VectorXd& sizes,
                                             const Eigen::VectorXd& size_variances);

PopulationEstimate estimate_population(const FitResult& fit, double confidence);

PrevalenceEstimate estimate_prevalence(const Trajectory& trajectory,
                                       const FitResult& fit, double confidence,
                                       const PrevalenceOptions& options = {});

/// Individual-sum form: sum_i f_hat_{d_i} Y_i / n_{d_i} over recruits of OK
/// classes. Agrees with the class-sum estimate.
double prevalence_individual_sum(const Trajectory& trajectory, const FitResult& fit,
                                 const PrevalenceOptions& options = {});

}  // namespace rds
