#include "rds/prevalence.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <utility>

#include "rds/error.hpp"

namespace rds {

double normal_critical_value(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw invalid_argument("confidence level must lie in (0, 1)");
  }
  const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 0.5 + 0.5 * confidence);
}

double compose_prevalence_variance(const Eigen::VectorXd& weights,
                                   const Eigen::VectorXd& p_hat,
                                   const Eigen::MatrixXd& weight_covariance,
                                   const Eigen::VectorXd& p_variance) {
  const double weight_term = p_hat.dot(weight_covariance * p_hat);
  const double within_term = weights.cwiseAbs2().dot(p_variance);
  return weight_term + within_term;
}

Eigen::MatrixXd normalized_weight_covariance(const Eigen::VectorXd& sizes,
                                             const Eigen::VectorXd& size_variances) {
  const double total = sizes.sum();
  if (!(total > 0.0)) throw invalid_argument("class sizes must sum to > 0");
  const auto d = sizes.size();
  const Eigen::VectorXd weights = sizes / total;
  Eigen::MatrixXd jacobian(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) {
      jacobian(k, j) = ((k == j ? 1.0 : 0.0) - weights[k]) / total;
    }
  }
  return jacobian * size_variances.asDiagonal() * jacobian.transpose();
}

PopulationEstimate estimate_population(const FitResult& fit, double confidence) {
  const double z = normal_critical_value(confidence);
  PopulationEstimate out;
  for (const auto& c : fit.classes) {
    out.sampled += c.recruited;
    if (c.flag == EstimateFlag::Ok) {
      out.size += c.size;
      out.variance += std::isfinite(c.size_se) ? c.size_se * c.size_se : 0.0;
    } else {
      out.lower_bound = true;
      out.size += static_cast<double>(c.recruited);
    }
  }
  const double half = z * std::sqrt(out.variance);
  out.ci.lower = std::max(out.size - half, static_cast<double>(out.sampled));
  out.ci.upper = out.size + half;
  return out;
}

namespace {

Trajectory align_with_fit(const Trajectory& trajectory, const FitResult& fit) {
  std::vector<std::pair<int, int>> mapping;
  for (const auto& r : fit.pooling) mapping.emplace_back(r.from_degree, r.into_degree);
  return mapping.empty() ? trajectory : trajectory.relabeled(mapping);
}

struct ClassCounts {
  std::int64_t sampled = 0;
  std::int64_t positives = 0;
};

std::vector<ClassCounts> outcome_counts(const Trajectory& pooled, const FitResult& fit,
                                        const PrevalenceOptions& options) {
  std::vector<ClassCounts> counts(fit.classes.size());
  auto slot = [&](int degree) -> ClassCounts* {
    for (std::size_t k = 0; k < fit.classes.size(); ++k) {
      if (fit.classes[k].degree == degree) return &counts[k];
    }
    return nullptr;
  };
  for (const auto& e : pooled.events()) {
    if (e.kind != EventKind::Recruitment) continue;
    if (!e.infected) {
      throw invalid_argument("recruit at row " + std::to_string(e.source_row) +
                             " has no outcome");
    }
    if (auto* c = slot(e.degree)) {
      ++c->sampled;
      c->positives += *e.infected ? 1 : 0;
    }
  }
  if (options.include_seed_outcomes) {
    for (const auto& s : pooled.seeds()) {
      if (!s.infected) continue;
      if (auto* c = slot(s.degree)) {
        ++c->sampled;
        c->positives += *s.infected ? 1 : 0;
      }
    }
  }
  return counts;
}

}  // namespace

PrevalenceEstimate estimate_prevalence(const Trajectory& trajectory,
                                       const FitResult& fit, double confidence,
                                       const PrevalenceOptions& options) {
  const double z = normal_critical_value(confidence);
  const Trajectory pooled = align_with_fit(trajectory, fit);
  const auto counts = outcome_counts(pooled, fit, options);

  PrevalenceEstimate out;
  out.confidence = confidence;
  std::vector<double> sizes, size_variances;
  for (std::size_t k = 0; k < fit.classes.size(); ++k) {
    const auto& c = fit.classes[k];
    if (c.flag != EstimateFlag::Ok) continue;
    const auto& n = counts[k];
    if (n.sampled < 1) {
      throw invalid_argument("class " + std::to_string(c.degree) +
                             " has no recruits with an outcome");
    }
    if (!(c.size > 1.0)) {
      throw invalid_argument("class " + std::to_string(c.degree) +
                             ": estimated size <= 1 leaves the finite-population "
                             "correction undefined");
    }
    if (!std::isfinite(c.size_se)) {
      throw invalid_argument("class " + std::to_string(c.degree) +
                             ": no variance for the estimated size");
    }
    ClassPrevalence cp;
    cp.degree = c.degree;
    cp.sampled = n.sampled;
    cp.positives = n.positives;
    const double sampled = static_cast<double>(n.sampled);
    cp.p_hat = static_cast<double>(n.positives) / sampled;
    const double fpc = std::max(0.0, c.size - sampled) / (c.size - 1.0);
    cp.p_variance = cp.p_hat * (1.0 - cp.p_hat) * fpc / sampled;
    out.classes.push_back(cp);
    sizes.push_back(c.size);
    size_variances.push_back(c.size_se * c.size_se);
  }
  if (out.classes.empty()) {
    throw Error(ErrorKind::Inference, "prevalence needs at least one identifiable class");
  }

  const auto d = static_cast<Eigen::Index>(out.classes.size());
  const Eigen::VectorXd size_vec = Eigen::Map<const Eigen::VectorXd>(sizes.data(), d);
  const Eigen::VectorXd size_var =
      Eigen::Map<const Eigen::VectorXd>(size_variances.data(), d);
  const Eigen::VectorXd weights = size_vec / size_vec.sum();
  const Eigen::MatrixXd weight_cov = normalized_weight_covariance(size_vec, size_var);
  Eigen::VectorXd p_hat(d), p_var(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    auto& cp = out.classes[static_cast<std::size_t>(k)];
    cp.weight = weights[k];
    cp.weight_variance = weight_cov(k, k);
    p_hat[k] = cp.p_hat;
    p_var[k] = cp.p_variance;
  }

  out.estimate = weights.dot(p_hat);
  out.weight_term = p_hat.dot(weight_cov * p_hat);
  out.within_term = weights.cwiseAbs2().dot(p_var);
  out.variance = compose_prevalence_variance(weights, p_hat, weight_cov, p_var);
  const double half = z * std::sqrt(out.variance);
  out.ci.lower = std::clamp(out.estimate - half, 0.0, 1.0);
  out.ci.upper = std::clamp(out.estimate + half, 0.0, 1.0);
  out.population = estimate_population(fit, confidence);
  return out;
}

double prevalence_individual_sum(const Trajectory& trajectory, const FitResult& fit,
                                 const PrevalenceOptions& options) {
  const Trajectory pooled = align_with_fit(trajectory, fit);
  const auto counts = outcome_counts(pooled, fit, options);
  double ok_total = 0.0;
  for (const auto& c : fit.classes) {
    if (c.flag == EstimateFlag::Ok) ok_total += c.size;
  }
  auto term = [&](int degree, bool infected) {
    if (!infected) return 0.0;
    for (std::size_t k = 0; k < fit.classes.size(); ++k) {
      const auto& c = fit.classes[k];
      if (c.degree == degree && c.flag == EstimateFlag::Ok) {
        return c.size / ok_total / static_cast<double>(counts[k].sampled);
      }
    }
    return 0.0;
  };
  double sum = 0.0;
  for (const auto& e : pooled.events()) {
    if (e.kind == EventKind::Recruitment) sum += term(e.degree, e.infected.value_or(false));
  }
  if (options.include_seed_outcomes) {
    for (const auto& s : pooled.seeds()) sum += term(s.degree, s.infected.value_or(false));
  }
  return sum;
}

}  // namespace rds
