#include "rds/ode_limit.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rds/error.hpp"

namespace rds {

LimitPath::LimitPath(std::vector<LimitClass> classes, LimitPolicy policy,
                     std::vector<double> grid, std::vector<Eigen::VectorXd> states)
    : classes_(std::move(classes)),
      policy_(policy),
      grid_(std::move(grid)),
      states_(std::move(states)) {
  if (grid_.empty() || grid_.size() != states_.size()) {
    throw invalid_argument("limit path needs one state per grid node");
  }
}

Eigen::VectorXd LimitPath::derivative(const Eigen::VectorXd& state) const {
  const auto d = static_cast<Eigen::Index>(classes_.size());
  Eigen::VectorXd out(d + 1);
  const double inviters = state[d];
  double inflow = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto& c = classes_[static_cast<std::size_t>(k)];
    out[k] = c.beta * inviters * (c.density - state[k]);
    inflow += out[k];
  }
  switch (policy_.mode) {
    case InviterMode::AllActive:
      out[d] = inflow;
      break;
    case InviterMode::RemovalRate:
      out[d] = inflow - policy_.gamma * inviters;
      break;
    case InviterMode::FixedPool:
      out[d] = 0.0;
      break;
  }
  return out;
}

Eigen::VectorXd LimitPath::interpolate(double t) const {
  if (grid_.size() == 1 || t <= grid_.front()) return states_.front();
  if (t >= grid_.back()) return states_.back();
  auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  const auto j = static_cast<std::size_t>(it - grid_.begin()) - 1;
  const double h = grid_[j + 1] - grid_[j];
  const double s = (t - grid_[j]) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  return h00 * states_[j] + h10 * h * derivative(states_[j]) +
         h01 * states_[j + 1] + h11 * h * derivative(states_[j + 1]);
}

double LimitPath::recruited(std::size_t k, double t) const {
  return interpolate(t)[static_cast<Eigen::Index>(k)];
}

double LimitPath::inviters(double t) const {
  return interpolate(t)[static_cast<Eigen::Index>(classes_.size())];
}

std::vector<LimitClass> limit_classes(const PopulationSpec& spec, double scale) {
  if (!(scale > 0.0)) throw invalid_argument("scale must be positive");
  std::vector<LimitClass> out;
  for (const auto& c : spec.classes()) {
    out.push_back({c.degree, static_cast<double>(c.size) / scale, c.beta});
  }
  return out;
}

LimitPolicy limit_policy(const InviterPolicy& policy, double scale) {
  if (!(scale > 0.0)) throw invalid_argument("scale must be positive");
  return {policy.mode, static_cast<double>(policy.initial) / scale,
          policy.gamma};
}

namespace {

std::vector<Eigen::VectorXd> integrate_rk4(const LimitPath& field,
                                           const Eigen::VectorXd& start,
                                           double tau, std::size_t steps) {
  std::vector<Eigen::VectorXd> states;
  states.reserve(steps + 1);
  states.push_back(start);
  const double h = tau / static_cast<double>(steps);
  Eigen::VectorXd y = start;
  for (std::size_t s = 0; s < steps; ++s) {
    const Eigen::VectorXd k1 = field.derivative(y);
    const Eigen::VectorXd k2 = field.derivative(y + 0.5 * h * k1);
    const Eigen::VectorXd k3 = field.derivative(y + 0.5 * h * k2);
    const Eigen::VectorXd k4 = field.derivative(y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    states.push_back(y);
  }
  return states;
}

std::vector<double> uniform_grid(double tau, std::size_t steps) {
  std::vector<double> grid(steps + 1);
  for (std::size_t j = 0; j <= steps; ++j) {
    grid[j] = tau * static_cast<double>(j) / static_cast<double>(steps);
  }
  grid.back() = tau;
  return grid;
}

}  // namespace

LimitPath solve_limit(std::vector<LimitClass> classes, const LimitPolicy& policy,
                      double tau, const LimitOptions& options) {
  if (classes.empty()) throw invalid_argument("limit needs at least one class");
  for (const auto& c : classes) {
    if (!(c.density > 0.0) || !(c.beta >= 0.0) || !std::isfinite(c.beta)) {
      throw invalid_argument("class " + std::to_string(c.degree) +
                             ": density must be > 0 and beta >= 0");
    }
  }
  if (!(policy.initial_density > 0.0)) {
    throw invalid_argument("initial inviter density must be positive");
  }
  if (!(tau >= 0.0) || !std::isfinite(tau)) {
    throw invalid_argument("horizon must be finite and >= 0");
  }
  const auto d = static_cast<Eigen::Index>(classes.size());
  Eigen::VectorXd start = Eigen::VectorXd::Zero(d + 1);
  start[d] = policy.initial_density;

  // Dummy path just to evaluate the vector field.
  const LimitPath field(classes, policy, {0.0}, {start});
  if (tau == 0.0) return field;

  std::size_t steps = std::max<std::size_t>(options.initial_steps, 1);
  auto coarse = integrate_rk4(field, start, tau, steps);
  for (;;) {
    if (2 * steps > options.max_steps) {
      throw Error(ErrorKind::InvalidArgument,
                  "limit ODE did not reach tolerance within the step budget");
    }
    auto fine = integrate_rk4(field, start, tau, 2 * steps);
    double change = 0.0;
    for (std::size_t j = 0; j < coarse.size(); ++j) {
      change = std::max(change, (fine[2 * j] - coarse[j]).cwiseAbs().maxCoeff());
    }
    steps *= 2;
    coarse = std::move(fine);
    if (change < options.tolerance) break;
  }

  const auto& last = coarse.back();
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto& c = classes[static_cast<std::size_t>(k)];
    if (c.density - last[k] < options.exhaustion_floor * c.density) {
      throw invalid_argument(
          "horizon reaches exhaustion of class " + std::to_string(c.degree) +
          " (remaining fraction below the floor); shorten tau");
    }
  }
  return LimitPath(std::move(classes), policy, uniform_grid(tau, steps),
                   std::move(coarse));
}

Eigen::MatrixXd SigmaBlocks::assemble() const {
  const auto d = a.size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    out(i, i) = a[i];
    out(i, d + i) = b[i];
    out(d + i, i) = b[i];
    out(d + i, d + i) = this->d[i];
  }
  return out;
}

Eigen::MatrixXd SigmaBlocks::block_inverse() const {
  const auto n = a.size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double schur = a[i] * d[i] - b[i] * b[i];  // (AD - BC)_ii
    if (!(schur > 0.0)) {
      throw invalid_argument("AD - BC is singular for class index " +
                             std::to_string(i));
    }
    out(i, i) = d[i] / schur;
    out(i, n + i) = -b[i] / schur;
    out(n + i, i) = -b[i] / schur;
    out(n + i, n + i) = a[i] / schur;
  }
  return out;
}

SigmaBlocks sigma_blocks(const LimitPath& path, double exhaustion_floor) {
  const std::size_t d = path.class_count();
  const auto grid = path.grid();
  SigmaBlocks out{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)),
                  Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)),
                  Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d))};
  for (std::size_t k = 0; k < d; ++k) {
    const auto& c = path.classes()[k];
    if (!(c.beta > 0.0)) {
      throw invalid_argument("class " + std::to_string(c.degree) +
                             ": information integrals need beta > 0");
    }
  }
  auto integrand = [&](std::size_t k, std::size_t node, double& a, double& b,
                       double& dd) {
    const auto& c = path.classes()[k];
    const double gap = c.density - path.recruited_at(k, node);
    if (gap < exhaustion_floor * c.density) {
      throw invalid_argument("class " + std::to_string(c.degree) +
                             " is near exhaustion; information integrals diverge");
    }
    const double inviters = path.inviters_at(node);
    a = c.beta * inviters / gap;
    b = inviters;
    dd = inviters * gap / c.beta;
  };
  for (std::size_t k = 0; k < d; ++k) {
    const auto idx = static_cast<Eigen::Index>(k);
    double a0, b0, d0;
    integrand(k, 0, a0, b0, d0);
    for (std::size_t j = 1; j < grid.size(); ++j) {
      double a1, b1, d1;
      integrand(k, j, a1, b1, d1);
      const double half = 0.5 * (grid[j] - grid[j - 1]);
      out.a[idx] += half * (a0 + a1);
      out.b[idx] += half * (b0 + b1);
      out.d[idx] += half * (d0 + d1);
      a0 = a1;
      b0 = b1;
      d0 = d1;
    }
  }
  return out;
}

Eigen::MatrixXd sigma_matrix(const LimitPath& path, double exhaustion_floor) {
  return sigma_blocks(path, exhaustion_floor).assemble();
}

Eigen::MatrixXd sigma_matrix_from_intensity(const LimitPath& path) {
  const auto d = static_cast<Eigen::Index>(path.class_count());
  const auto grid = path.grid();
  auto integrand = [&](std::size_t node) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    const double inviters = path.inviters_at(node);
    for (Eigen::Index k = 0; k < d; ++k) {
      const auto& c = path.classes()[static_cast<std::size_t>(k)];
      const double gap = c.density - path.recruited_at(static_cast<std::size_t>(k), node);
      const double rate = c.beta * inviters * gap;
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(2 * d);
      grad[k] = c.beta * inviters;  // dX_k / df_k
      grad[d + k] = inviters * gap;  // dX_k / dbeta_k
      m += grad * grad.transpose() / rate;
    }
    return m;
  };
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  Eigen::MatrixXd previous = integrand(0);
  for (std::size_t j = 1; j < grid.size(); ++j) {
    Eigen::MatrixXd current = integrand(j);
    out += 0.5 * (grid[j] - grid[j - 1]) * (previous + current);
    previous = std::move(current);
  }
  return out;
}

namespace {

void require_same_horizon(const Trajectory& trajectory, const LimitPath& path) {
  const double scale = std::max({1.0, trajectory.tau(), path.tau()});
  if (std::abs(trajectory.tau() - path.tau()) > 1e-9 * scale) {
    throw invalid_argument("trajectory horizon " + std::to_string(trajectory.tau()) +
                           " does not match limit horizon " +
                           std::to_string(path.tau()));
  }
}

}  // namespace

double sup_norm_error(const Trajectory& trajectory, const LimitPath& path,
                      double scale) {
  require_same_horizon(trajectory, path);
  if (!(scale > 0.0)) throw invalid_argument("scale must be positive");
  const std::size_t d = path.class_count();
  // trajectory class index -> limit class index
  std::vector<std::size_t> to_limit(trajectory.class_count(), d);
  for (std::size_t k = 0; k < d; ++k) {
    if (auto idx = trajectory.class_index(path.classes()[k].degree)) {
      to_limit[*idx] = k;
    }
  }
  for (std::size_t j = 0; j < to_limit.size(); ++j) {
    if (to_limit[j] == d && trajectory.final_count(j) > 0) {
      throw invalid_argument("trajectory class " +
                             std::to_string(trajectory.degrees()[j]) +
                             " has no counterpart in the limit path");
    }
  }

  // x_k is non-decreasing and n_k is constant between class-k jumps, so the
  // supremum is attained at class-k jump times (either side) or at tau.
  double worst = 0.0;
  std::vector<std::int64_t> counts(d, 0);
  const auto events = trajectory.events();
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].kind != EventKind::Recruitment) continue;
    const std::size_t k = to_limit[trajectory.event_class(i)];
    const double x = path.recruited(k, events[i].time);
    const double before = static_cast<double>(counts[k]) / scale;
    ++counts[k];
    const double after = static_cast<double>(counts[k]) / scale;
    worst = std::max({worst, std::abs(before - x), std::abs(after - x)});
  }
  const std::size_t last = path.grid().size() - 1;
  for (std::size_t k = 0; k < d; ++k) {
    const double x = path.recruited_at(k, last);
    worst = std::max(worst, std::abs(static_cast<double>(counts[k]) / scale - x));
  }
  return worst;
}

std::vector<double> check_convergence(std::span<const Trajectory> replicates,
                                      const LimitPath& path, double scale) {
  std::vector<double> out;
  out.reserve(replicates.size());
  for (const auto& t : replicates) out.push_back(sup_norm_error(t, path, scale));
  return out;
}

double sup_norm_distance(const Trajectory& a, const Trajectory& b, double scale) {
  if (!(scale > 0.0)) throw invalid_argument("scale must be positive");
  std::set<int> degrees(a.degrees().begin(), a.degrees().end());
  degrees.insert(b.degrees().begin(), b.degrees().end());
  std::vector<double> times{0.0};
  for (const auto& e : a.events()) times.push_back(e.time);
  for (const auto& e : b.events()) times.push_back(e.time);
  double worst = 0.0;
  for (int degree : degrees) {
    const auto ia = a.class_index(degree);
    const auto ib = b.class_index(degree);
    for (double t : times) {
      const auto na = ia ? a.count(*ia, t) : 0;
      const auto nb = ib ? b.count(*ib, t) : 0;
      worst = std::max(worst, std::abs(static_cast<double>(na - nb)) / scale);
    }
  }
  return worst;
}

}  // namespace rds
