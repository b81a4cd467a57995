#include "rds/inference.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "rds/error.hpp"

namespace rds {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::int64_t kDirectSumLimit = 1000;

void check_parameters(const Trajectory& trajectory, const ModelParameters& params) {
  const std::size_t d = trajectory.class_count();
  if (params.sizes.size() != d || params.betas.size() != d) {
    throw invalid_argument("parameter vectors must have one entry per class (" +
                           std::to_string(d) + ")");
  }
  if (!(params.total > 0.0)) throw invalid_argument("population total must be > 0");
  for (std::size_t k = 0; k < d; ++k) {
    if (!(params.betas[k] > 0.0) || !std::isfinite(params.betas[k])) {
      throw invalid_argument("class " + std::to_string(trajectory.degrees()[k]) +
                             ": beta must be finite and > 0");
    }
    if (!std::isfinite(params.sizes[k])) {
      throw invalid_argument("class " + std::to_string(trajectory.degrees()[k]) +
                             ": size must be finite");
    }
  }
}

/// sum_{i<n} log(N - i); requires N > n - 1.
double log_falling_factorial(double size, std::int64_t count) {
  if (count <= kDirectSumLimit) {
    long double acc = 0.0L;
    for (std::int64_t i = 0; i < count; ++i) {
      acc += std::log(static_cast<long double>(size) - static_cast<long double>(i));
    }
    return static_cast<double>(acc);
  }
  return std::lgamma(size + 1.0) - std::lgamma(size - static_cast<double>(count) + 1.0);
}

double squared_harmonic_window(double size, std::int64_t count) {
  long double acc = 0.0L;
  for (std::int64_t i = 0; i < count; ++i) {
    const long double gap = static_cast<long double>(size) - static_cast<long double>(i);
    acc += 1.0L / (gap * gap);
  }
  return static_cast<double>(acc);
}

/// Class-k part of the log-likelihood in (N_k, rho_k), without the
/// parameter-free sum of log I_{t-}.
double class_loglik(const ClassStatistics& s, double size, double rate) {
  return log_falling_factorial(size, s.recruited) +
         static_cast<double>(s.recruited) * std::log(rate) -
         rate * (size * s.inviter_time - s.count_inviter_time);
}

/// Sum of log I_{t-} over recruitment events, per class. -inf when some
/// recruitment happened with no active inviter.
std::vector<double> inviter_log_terms(const Trajectory& trajectory) {
  std::vector<double> out(trajectory.class_count(), 0.0);
  const auto events = trajectory.events();
  std::int64_t inviters = trajectory.initial_inviters();
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].kind == EventKind::Recruitment) {
      const std::size_t k = trajectory.event_class(i);
      out[k] += inviters > 0 ? std::log(static_cast<double>(inviters)) : kNegInf;
    }
    inviters = trajectory.inviters_after(i);
  }
  return out;
}

std::string describe_zero_intensity(const Trajectory& trajectory,
                                    const ModelParameters& params) {
  const auto events = trajectory.events();
  std::vector<std::int64_t> counts(trajectory.class_count(), 0);
  std::int64_t inviters = trajectory.initial_inviters();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.kind == EventKind::Recruitment) {
      const std::size_t k = trajectory.event_class(i);
      if (inviters <= 0) {
        return "zero intensity at row " + std::to_string(e.source_row) +
               ": no active inviters just before t=" + std::to_string(e.time);
      }
      if (params.sizes[k] - static_cast<double>(counts[k]) <= 0.0) {
        return "zero intensity at row " + std::to_string(e.source_row) +
               ": class " + std::to_string(e.degree) + " size " +
               std::to_string(params.sizes[k]) + " does not exceed the " +
               std::to_string(counts[k]) + " earlier recruits";
      }
      ++counts[k];
    }
    inviters = trajectory.inviters_after(i);
  }
  return {};
}

}  // namespace

ModelParameters ModelParameters::from_sizes(std::vector<double> sizes,
                                            std::vector<double> betas) {
  ModelParameters p;
  p.total = 0.0;
  for (double s : sizes) p.total += s;
  p.sizes = std::move(sizes);
  p.betas = std::move(betas);
  return p;
}

LogLikelihood loglik(const Trajectory& trajectory, const ModelParameters& params) {
  check_parameters(trajectory, params);
  if (auto why = describe_zero_intensity(trajectory, params); !why.empty()) {
    return {kNegInf, why};
  }
  const auto stats = class_statistics(trajectory);
  const auto inviter_terms = inviter_log_terms(trajectory);
  double value = 0.0;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const double rate = params.betas[k] / params.total;
    value += class_loglik(stats[k], params.sizes[k], rate) + inviter_terms[k];
  }
  return {value, {}};
}

Eigen::VectorXd score(const Trajectory& trajectory, const ModelParameters& params) {
  check_parameters(trajectory, params);
  if (auto why = describe_zero_intensity(trajectory, params); !why.empty()) {
    throw invalid_argument("score undefined: " + why);
  }
  const auto stats = class_statistics(trajectory);
  const auto d = static_cast<Eigen::Index>(stats.size());
  Eigen::VectorXd out(2 * d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto& s = stats[static_cast<std::size_t>(k)];
    const double size = params.sizes[static_cast<std::size_t>(k)];
    const double beta = params.betas[static_cast<std::size_t>(k)];
    out[k] = harmonic_window(size, s.recruited) -
             beta / params.total * s.inviter_time;
    out[d + k] = static_cast<double>(s.recruited) / beta -
                 (size * s.inviter_time - s.count_inviter_time) / params.total;
  }
  return out;
}

Eigen::MatrixXd observed_information(const Trajectory& trajectory,
                                     const ModelParameters& params) {
  check_parameters(trajectory, params);
  if (auto why = describe_zero_intensity(trajectory, params); !why.empty()) {
    throw invalid_argument("observed information undefined: " + why);
  }
  const auto stats = class_statistics(trajectory);
  const auto d = static_cast<Eigen::Index>(stats.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto& s = stats[static_cast<std::size_t>(k)];
    const double size = params.sizes[static_cast<std::size_t>(k)];
    const double beta = params.betas[static_cast<std::size_t>(k)];
    out(k, k) = squared_harmonic_window(size, s.recruited);
    out(d + k, d + k) = static_cast<double>(s.recruited) / (beta * beta);
    out(k, d + k) = s.inviter_time / params.total;
    out(d + k, k) = out(k, d + k);
  }
  return out;
}

Eigen::MatrixXd density_scaled_information(const Eigen::MatrixXd& information,
                                           double scale) {
  if (information.rows() != information.cols() || information.rows() % 2 != 0) {
    throw invalid_argument("information matrix must be square with even order");
  }
  const auto d = information.rows() / 2;
  Eigen::VectorXd jacobian(2 * d);  // d(N, beta) / d(f, beta)
  jacobian.head(d).setConstant(scale);
  jacobian.tail(d).setOnes();
  return jacobian.asDiagonal() * information * jacobian.asDiagonal() / scale;
}

std::string to_string(EstimateFlag flag) {
  switch (flag) {
    case EstimateFlag::Ok:
      return "ok";
    case EstimateFlag::NonIdentifiable:
      return "non_identifiable";
    case EstimateFlag::BoundaryHit:
      return "boundary_hit";
  }
  return "unknown";
}

double harmonic_window(double size, std::int64_t count) {
  if (count <= kDirectSumLimit) {
    long double acc = 0.0L;
    for (std::int64_t i = 0; i < count; ++i) {
      acc += 1.0L / (static_cast<long double>(size) - static_cast<long double>(i));
    }
    return static_cast<double>(acc);
  }
  return boost::math::digamma(size + 1.0) -
         boost::math::digamma(size - static_cast<double>(count) + 1.0);
}

double size_equation(const ClassStatistics& stats, double size) {
  const auto n = static_cast<double>(stats.recruited);
  return harmonic_window(size, stats.recruited) -
         n * stats.inviter_time / (size * stats.inviter_time - stats.count_inviter_time);
}

SizeSolution solve_class_size(const ClassStatistics& stats,
                              const SizeSolverOptions& options) {
  const std::int64_t n = stats.recruited;
  if (n <= 0) return {0.0, EstimateFlag::NonIdentifiable, "no recruits in class"};
  if (!(stats.inviter_time > 0.0)) {
    return {static_cast<double>(n), EstimateFlag::NonIdentifiable,
            "no inviter exposure"};
  }
  const double nd = static_cast<double>(n);
  // I-weighted mean of the class count over [0, tau].
  const double mean_count = stats.count_inviter_time / stats.inviter_time;
  if (mean_count >= nd - 1.0) {
    return {nd, EstimateFlag::NonIdentifiable,
            "likelihood increases towards the lower boundary; no interior root"};
  }
  if (mean_count <= 0.5 * (nd - 1.0)) {
    return {INFINITY, EstimateFlag::NonIdentifiable,
            "size equation has no finite root; estimate diverges"};
  }
  const double lower = nd - 1.0 + options.lower_offset;
  const double upper = std::max(options.cap_factor * nd, lower * 2.0);
  auto h = [&](double size) { return size_equation(stats, size); };
  const double h_lower = h(lower);
  const double h_upper = h(upper);
  if (!(h_lower > 0.0) || !(h_upper < 0.0)) {
    return {INFINITY, EstimateFlag::NonIdentifiable,
            "no sign change of the size equation below the cap " +
                std::to_string(upper)};
  }
  std::uintmax_t iterations = 300;
  const auto bracket = boost::math::tools::toms748_solve(
      h, lower, upper, h_lower, h_upper,
      boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 2),
      iterations);
  const double root = 0.5 * (bracket.first + bracket.second);
  if (root < nd) {
    return {nd, EstimateFlag::BoundaryHit,
            "root lies below the observed count; clamped to n"};
  }
  return {root, EstimateFlag::Ok, {}};
}

std::pair<Trajectory, std::vector<PoolingRecord>> pool_sparse_classes(
    const Trajectory& trajectory, std::int64_t min_occupancy) {
  const auto degrees = trajectory.degrees();
  std::vector<int> eligible;
  for (std::size_t k = 0; k < degrees.size(); ++k) {
    if (trajectory.final_count(k) >= min_occupancy) eligible.push_back(degrees[k]);
  }
  std::vector<PoolingRecord> records;
  if (eligible.empty() || min_occupancy <= 0) return {trajectory, records};

  std::vector<std::pair<int, int>> mapping;
  for (std::size_t k = 0; k < degrees.size(); ++k) {
    if (trajectory.final_count(k) >= min_occupancy) continue;
    int best = eligible.front();
    for (int candidate : eligible) {
      if (std::abs(candidate - degrees[k]) < std::abs(best - degrees[k])) best = candidate;
    }
    mapping.emplace_back(degrees[k], best);
    records.push_back({degrees[k], best, trajectory.final_count(k)});
  }
  if (mapping.empty()) return {trajectory, records};
  // Declared degrees that were pooled away must not reappear as empty classes.
  Trajectory relabeled = trajectory.relabeled(mapping);
  return {std::move(relabeled), std::move(records)};
}

bool FitResult::all_ok() const {
  return std::all_of(classes.begin(), classes.end(),
                     [](const ClassEstimate& c) { return c.flag == EstimateFlag::Ok; });
}

std::vector<int> FitResult::degrees() const {
  std::vector<int> out;
  for (const auto& c : classes) out.push_back(c.degree);
  return out;
}

ModelParameters FitResult::parameters() const {
  ModelParameters p;
  p.total = total_size;
  for (const auto& c : classes) {
    p.sizes.push_back(c.size);
    p.betas.push_back(c.beta);
  }
  return p;
}

FitResult fit_classes(const Trajectory& trajectory, const SizeSolverOptions& options) {
  const auto stats = class_statistics(trajectory);
  const auto inviter_terms = inviter_log_terms(trajectory);
  const auto degrees = trajectory.degrees();
  const std::size_t d = stats.size();

  FitResult result;
  result.classes.resize(d);
  double loglik_value = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    auto& est = result.classes[k];
    const auto& s = stats[k];
    est.degree = degrees[k];
    est.recruited = s.recruited;
    const auto solution = solve_class_size(s, options);
    est.size = solution.size;
    est.flag = solution.flag;
    est.note = solution.note;
    if (solution.flag == EstimateFlag::NonIdentifiable) {
      est.rate = NAN;
      continue;
    }
    est.rate = static_cast<double>(s.recruited) /
               (est.size * s.inviter_time - s.count_inviter_time);
    if (solution.flag == EstimateFlag::Ok) {
      result.total_size += est.size;
      loglik_value += class_loglik(s, est.size, est.rate) + inviter_terms[k];
    }
  }

  std::ostringstream diag;
  bool any_ok = false;
  for (const auto& c : result.classes) {
    if (c.flag == EstimateFlag::Ok) {
      any_ok = true;
    } else {
      diag << "class " << c.degree << " (n=" << c.recruited << ") "
           << to_string(c.flag) << ": " << c.note << "; ";
    }
  }
  result.diagnostics = diag.str();
  if (!any_ok) {
    throw Error(ErrorKind::Inference,
                "no identifiable degree class: " + result.diagnostics);
  }
  result.loglik = loglik_value;

  for (auto& c : result.classes) c.beta = c.rate * result.total_size;

  // Per-class 2x2 information in (N_k, beta_k) with N fixed at N_hat.
  const auto dd = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd covariance = Eigen::MatrixXd::Zero(2 * dd, 2 * dd);
  bool covariance_ok = true;
  for (std::size_t k = 0; k < d; ++k) {
    auto& c = result.classes[k];
    if (c.flag != EstimateFlag::Ok) {
      covariance_ok = false;
      continue;
    }
    const auto& s = stats[k];
    const double i_nn = squared_harmonic_window(c.size, s.recruited);
    const double i_bb = static_cast<double>(s.recruited) / (c.beta * c.beta);
    const double i_nb = s.inviter_time / result.total_size;
    const double det = i_nn * i_bb - i_nb * i_nb;
    if (!(det > 0.0)) {
      covariance_ok = false;
      c.note = "observed information is singular";
      continue;
    }
    const auto i = static_cast<Eigen::Index>(k);
    covariance(i, i) = i_bb / det;
    covariance(dd + i, dd + i) = i_nn / det;
    covariance(i, dd + i) = -i_nb / det;
    covariance(dd + i, i) = -i_nb / det;
    c.size_se = std::sqrt(covariance(i, i));
  }
  if (!covariance_ok) {
    if (result.all_ok()) result.diagnostics += "observed information singular; ";
    return result;
  }

  // theta = (N_1..N_d, rho_1..rho_d); beta_k = rho_k * sum_j N_j.
  const double total = result.total_size;
  Eigen::VectorXd to_rate(2 * dd);
  to_rate.head(dd).setOnes();
  to_rate.tail(dd).setConstant(1.0 / total);
  const Eigen::MatrixXd theta_cov =
      to_rate.asDiagonal() * covariance * to_rate.asDiagonal();
  Eigen::MatrixXd jacobian = Eigen::MatrixXd::Zero(2 * dd, 2 * dd);
  for (Eigen::Index k = 0; k < dd; ++k) {
    jacobian(k, k) = 1.0;
    for (Eigen::Index j = 0; j < dd; ++j) {
      jacobian(dd + k, j) = result.classes[static_cast<std::size_t>(k)].rate;
    }
    jacobian(dd + k, dd + k) = total;
  }
  Eigen::MatrixXd mapped = jacobian * theta_cov * jacobian.transpose();
  for (Eigen::Index k = 0; k < dd; ++k) {
    result.classes[static_cast<std::size_t>(k)].beta_se = std::sqrt(mapped(dd + k, dd + k));
  }
  result.covariance = std::move(covariance);
  result.size_beta_covariance = std::move(mapped);
  return result;
}

FitResult fit(const Trajectory& trajectory, const FitOptions& options) {
  auto [pooled, records] = pool_sparse_classes(trajectory, options.min_class_occupancy);
  FitResult result = fit_classes(pooled, options.solver);
  result.pooling = std::move(records);
  return result;
}

namespace {

/// Maximizer over N of class_loglik(N, rate): sum_{i<n} 1/(N-i) = rate * A.
double profile_size(const ClassStatistics& s, double rate) {
  const double nd = static_cast<double>(s.recruited);
  const double target = rate * s.inviter_time;
  auto g = [&](double size) { return harmonic_window(size, s.recruited) - target; };
  const double lower = nd - 1.0 + 1e-9 * std::max(1.0, nd);
  // sum_{i<n} 1/(N-i) <= n / (N-n+1), so g <= 0 from here on.
  const double upper = nd - 1.0 + nd / target + 1.0;
  const double g_lower = g(lower);
  const double g_upper = g(upper);
  if (!(g_lower > 0.0)) return lower;
  if (!(g_upper < 0.0)) return upper;
  std::uintmax_t iterations = 300;
  const auto bracket = boost::math::tools::toms748_solve(
      g, lower, upper, g_lower, g_upper,
      boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 2),
      iterations);
  return 0.5 * (bracket.first + bracket.second);
}

}  // namespace

LrtResult lrt_proportional(const Trajectory& trajectory, const FitOptions& options) {
  auto [pooled, records] = pool_sparse_classes(trajectory, options.min_class_occupancy);
  const FitResult free_fit = fit_classes(pooled, options.solver);
  const auto stats = class_statistics(pooled);

  std::vector<std::size_t> used;
  for (std::size_t k = 0; k < free_fit.classes.size(); ++k) {
    if (free_fit.classes[k].flag == EstimateFlag::Ok) used.push_back(k);
  }
  if (used.size() < 2) {
    throw invalid_argument(
        "proportionality test needs at least two identifiable degree classes");
  }

  LrtResult out;
  double log_c_min = INFINITY;
  double log_c_max = -INFINITY;
  for (std::size_t k : used) {
    const auto& c = free_fit.classes[k];
    out.degrees.push_back(c.degree);
    out.loglik_free += class_loglik(stats[k], c.size, c.rate);
    const double log_c = std::log(c.rate / c.degree);
    log_c_min = std::min(log_c_min, log_c);
    log_c_max = std::max(log_c_max, log_c);
  }

  auto negative_profile = [&](double log_c) {
    const double c = std::exp(log_c);
    double value = 0.0;
    for (std::size_t k : used) {
      const double rate = c * free_fit.classes[k].degree;
      value += class_loglik(stats[k], profile_size(stats[k], rate), rate);
    }
    return -value;
  };
  std::uintmax_t iterations = 500;
  const auto best = boost::math::tools::brent_find_minima(
      negative_profile, log_c_min - 1.0, log_c_max + 1.0,
      std::numeric_limits<double>::digits / 2, iterations);

  out.loglik_constrained = -best.second;
  out.proportionality = std::exp(best.first) * free_fit.total_size;
  out.statistic = std::max(0.0, 2.0 * (out.loglik_free - out.loglik_constrained));
  out.dof = static_cast<int>(used.size()) - 1;
  const boost::math::chi_squared_distribution<double> chi2(out.dof);
  out.p_value = boost::math::cdf(boost::math::complement(chi2, out.statistic));
  return out;
}

}  // namespace rds
