#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace gmprune::bo {

/// Axis-aligned box, low < high on every axis.
struct Bounds {
  std::vector<double> low;
  std::vector<double> high;

  static Bounds uniform(std::size_t dims, double low, double high);
  std::size_t dims() const { return low.size(); }
  void validate() const;

  std::vector<double> to_unit(std::span<const double> x) const;
  std::vector<double> from_unit(std::span<const double> u) const;
  std::vector<double> clamp(std::span<const double> x) const;
};

/// Bounds for pruning-rate search: [0, min(target + offset, cap)] per group.
Bounds rate_bounds(std::size_t groups, double target, double bound_offset, double cap = 0.95);

struct Observation {
  std::vector<double> x;
  double y = 0.0;
};

struct GPOptions {
  double length_scale = 0.2;  // in unit-cube coordinates
  double jitter = 1e-6;
};

struct Prediction {
  double mean = 0.0;
  double stddev = 0.0;
};

class GPError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Zero-mean GP with an isotropic RBF kernel over standardized outputs.
/// Inputs are mapped to the unit cube of `bounds`; signal variance is 1 in
/// standardized units, i.e. the output variance in original units.
class GaussianProcess {
 public:
  static GaussianProcess fit(std::span<const Observation> observations, const Bounds& bounds,
                             const GPOptions& options = {});

  Prediction predict(std::span<const double> x) const;
  // Column j of `unit_points` is one point already in unit coordinates.
  void predict_unit(const Eigen::MatrixXd& unit_points, Eigen::VectorXd& mean, Eigen::VectorXd& stddev) const;

  double log_marginal_likelihood() const { return log_marginal_likelihood_; }
  double length_scale() const { return options_.length_scale; }
  double jitter() const { return jitter_used_; }
  double output_mean() const { return y_mean_; }
  double output_scale() const { return y_scale_; }
  std::size_t size() const { return static_cast<std::size_t>(inputs_.cols()); }
  const Bounds& bounds() const { return bounds_; }

 private:
  Bounds bounds_;
  GPOptions options_;
  Eigen::MatrixXd inputs_;  // dims x n, unit cube
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double jitter_used_ = 0.0;
  double log_marginal_likelihood_ = 0.0;
};

/// Merges observations whose inputs lie within 1e-9 (outputs are averaged).
std::vector<Observation> dedupe(std::span<const Observation> observations);

/// Length scale maximizing the marginal likelihood over 16 log-spaced values in [0.02, 2].
double select_length_scale(std::span<const Observation> observations, const Bounds& bounds, double jitter = 1e-6);
std::vector<double> length_scale_grid();

/// Lower confidence bound mu(x) - kappa * sigma(x); smaller is better.
double ucb_score(const GaussianProcess& gp, std::span<const double> x, double kappa);

inline constexpr std::size_t kAcquisitionCandidates = 2048;
inline constexpr std::size_t kRefinementSteps = 256;

/// Approximate minimizer of ucb_score: scrambled Halton candidates, then
/// coordinate descent from the best one.
std::vector<double> acquire_next(const GaussianProcess& gp, const Bounds& bounds, double kappa, std::uint64_t seed);

struct BOConfig {
  std::size_t i0 = 12;
  std::size_t iterations = 60;  // total evaluations I
  double kappa = 2.0;
  std::uint64_t seed = 0;
  std::size_t refit_every = 10;
};

struct Evaluation {
  double value = 0.0;
  bool was_penalty = false;
};

using Objective = std::function<Evaluation(std::span<const double>)>;

struct HistoryEntry {
  std::size_t iteration = 0;
  std::vector<double> x;
  double value = 0.0;
  bool was_penalty = false;
  double seconds = 0.0;
};

struct OptimizeResult {
  std::vector<double> best_x;
  double best_value = 0.0;
  std::vector<HistoryEntry> history;
};

class OptimizationAborted : public std::runtime_error {
 public:
  OptimizationAborted(const std::string& what, std::vector<HistoryEntry> partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const std::vector<HistoryEntry>& partial_history() const { return partial_; }

 private:
  std::vector<HistoryEntry> partial_;
};

/// Exactly cfg.iterations evaluations: cfg.i0 seeded uniform samples, then
/// GP + acquisition for the rest. Returns the argmin over the history.
OptimizeResult optimize(const Objective& f, const Bounds& bounds, const BOConfig& cfg);

/// Columns: iteration, phi_0..phi_{N-1}, value, was_penalty, seconds.
void write_history_csv(std::ostream& out, std::span<const HistoryEntry> history);

}  // namespace gmprune::bo
