#include <algorithm>
#include <cmath>
#include <numbers>

#include "gmprune/bayesopt.hpp"

namespace gmprune::bo {

Bounds Bounds::uniform(std::size_t dims, double low, double high) {
  Bounds b{std::vector<double>(dims, low), std::vector<double>(dims, high)};
  b.validate();
  return b;
}

void Bounds::validate() const {
  if (low.empty() || low.size() != high.size()) throw std::invalid_argument("bounds need matching, non-empty axes");
  for (std::size_t i = 0; i < low.size(); ++i) {
    if (!(low[i] < high[i])) {
      throw std::invalid_argument("bounds axis " + std::to_string(i) + " has low >= high");
    }
  }
}

std::vector<double> Bounds::to_unit(std::span<const double> x) const {
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = (x[i] - low[i]) / (high[i] - low[i]);
  return u;
}

std::vector<double> Bounds::from_unit(std::span<const double> u) const {
  std::vector<double> x(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    x[i] = std::clamp(low[i] + u[i] * (high[i] - low[i]), low[i], high[i]);
  }
  return x;
}

std::vector<double> Bounds::clamp(std::span<const double> x) const {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i], low[i], high[i]);
  return out;
}

Bounds rate_bounds(std::size_t groups, double target, double bound_offset, double cap) {
  return Bounds::uniform(groups, 0.0, std::min(target + bound_offset, cap));
}

std::vector<Observation> dedupe(std::span<const Observation> observations) {
  std::vector<Observation> out;
  std::vector<std::size_t> counts;
  for (const auto& o : observations) {
    bool merged = false;
    for (std::size_t k = 0; k < out.size(); ++k) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < o.x.size(); ++j) d2 += (o.x[j] - out[k].x[j]) * (o.x[j] - out[k].x[j]);
      if (std::sqrt(d2) < 1e-9) {
        out[k].y = (out[k].y * static_cast<double>(counts[k]) + o.y) / static_cast<double>(counts[k] + 1);
        ++counts[k];
        merged = true;
        break;
      }
    }
    if (!merged) {
      out.push_back(o);
      counts.push_back(1);
    }
  }
  return out;
}

namespace {

double rbf(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b, double ell) {
  return std::exp(-(a - b).squaredNorm() / (2.0 * ell * ell));
}

}  // namespace

GaussianProcess GaussianProcess::fit(std::span<const Observation> observations, const Bounds& bounds,
                                     const GPOptions& options) {
  bounds.validate();
  if (!(options.length_scale > 0.0)) throw std::invalid_argument("GP length scale must be positive");
  const auto obs = dedupe(observations);
  if (obs.empty()) throw GPError("GP fit needs at least one observation");
  const std::size_t n = obs.size(), d = bounds.dims();

  GaussianProcess gp;
  gp.bounds_ = bounds;
  gp.options_ = options;
  gp.inputs_.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (obs[i].x.size() != d) throw std::invalid_argument("observation dimension differs from bounds");
    const auto u = bounds.to_unit(obs[i].x);
    for (std::size_t j = 0; j < d; ++j) gp.inputs_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = u[j];
    y(static_cast<Eigen::Index>(i)) = obs[i].y;
  }

  gp.y_mean_ = y.mean();
  const double var = (y.array() - gp.y_mean_).square().mean();
  gp.y_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (y.array() - gp.y_mean_) / gp.y_scale_;

  Eigen::MatrixXd K(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      K(i, j) = K(j, i) = rbf(gp.inputs_.col(i), gp.inputs_.col(j), options.length_scale);
    }
  }

  for (double jitter = options.jitter;; jitter *= 10.0) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter;
    gp.chol_.compute(Kj);
    if (gp.chol_.info() == Eigen::Success && (gp.chol_.matrixLLT().diagonal().array() > 0.0).all()) {
      gp.jitter_used_ = jitter;
      break;
    }
    if (jitter >= 1e-2 * (1.0 - 1e-9)) throw GPError("kernel matrix is not positive definite even with jitter 1e-2");
  }

  gp.alpha_ = gp.chol_.solve(ys);
  const double log_det = 2.0 * gp.chol_.matrixLLT().diagonal().array().log().sum();
  gp.log_marginal_likelihood_ =
      -0.5 * ys.dot(gp.alpha_) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  return gp;
}

void GaussianProcess::predict_unit(const Eigen::MatrixXd& unit_points, Eigen::VectorXd& mean,
                                   Eigen::VectorXd& stddev) const {
  const Eigen::Index n = inputs_.cols(), m = unit_points.cols();
  Eigen::MatrixXd k_star(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) k_star(i, j) = rbf(inputs_.col(i), unit_points.col(j), options_.length_scale);
  }
  const Eigen::MatrixXd v = chol_.matrixL().solve(k_star);
  mean = (k_star.transpose() * alpha_).array() * y_scale_ + y_mean_;
  const Eigen::VectorXd var = (1.0 - v.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
  stddev = var.array().sqrt() * y_scale_;
}

Prediction GaussianProcess::predict(std::span<const double> x) const {
  const auto u = bounds_.to_unit(x);
  Eigen::MatrixXd p(static_cast<Eigen::Index>(u.size()), 1);
  for (std::size_t j = 0; j < u.size(); ++j) p(static_cast<Eigen::Index>(j), 0) = u[j];
  Eigen::VectorXd mean, sd;
  predict_unit(p, mean, sd);
  return {mean(0), sd(0)};
}

std::vector<double> length_scale_grid() {
  std::vector<double> grid(16);
  const double lo = std::log(0.02), hi = std::log(2.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid.size() - 1));
  }
  return grid;
}

double select_length_scale(std::span<const Observation> observations, const Bounds& bounds, double jitter) {
  double best_ell = GPOptions{}.length_scale;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double ell : length_scale_grid()) {
    try {
      const auto gp = GaussianProcess::fit(observations, bounds, {ell, jitter});
      if (gp.log_marginal_likelihood() > best_lml) {
        best_lml = gp.log_marginal_likelihood();
        best_ell = ell;
      }
    } catch (const GPError&) {
      // this length scale cannot be factorized; skip it
    }
  }
  return best_ell;
}

double ucb_score(const GaussianProcess& gp, std::span<const double> x, double kappa) {
  const Prediction p = gp.predict(x);
  return p.mean - kappa * p.stddev;
}

}  // namespace gmprune::bo
