#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "gmprune/bayesopt.hpp"
#include "gmprune/rng.hpp"

namespace gmprune::bo {

namespace {

constexpr std::array<unsigned, 40> kPrimes = {2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,
                                              47,  53,  59,  61,  67,  71,  73,  79,  83,  89,  97,  101, 103, 107,
                                              109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173};

double radical_inverse(std::size_t index, unsigned base) {
  double result = 0.0, f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

// Halton points with a seeded Cranley-Patterson rotation; dimensions past
// the prime table fall back to plain uniform draws.
Eigen::MatrixXd halton_candidates(std::size_t dims, std::size_t count, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xA11));
  std::vector<double> shift(dims);
  for (auto& s : shift) s = rng.uniform();
  Eigen::MatrixXd points(static_cast<Eigen::Index>(dims), static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dims; ++j) {
      double v = j < kPrimes.size() ? radical_inverse(i + 1, kPrimes[j]) + shift[j] : rng.uniform();
      if (v >= 1.0) v -= 1.0;
      points(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return points;
}

double unit_score(const GaussianProcess& gp, const Eigen::VectorXd& u, double kappa) {
  Eigen::VectorXd mean, sd;
  gp.predict_unit(u, mean, sd);
  return mean(0) - kappa * sd(0);
}

bool near_existing(std::span<const Observation> obs, std::span<const double> x) {
  for (const auto& o : obs) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) d2 += (o.x[j] - x[j]) * (o.x[j] - x[j]);
    if (std::sqrt(d2) < 1e-9) return true;
  }
  return false;
}

}  // namespace

std::vector<double> acquire_next(const GaussianProcess& gp, const Bounds& bounds, double kappa, std::uint64_t seed) {
  bounds.validate();
  const std::size_t d = bounds.dims();
  if (gp.bounds().dims() != d) throw std::invalid_argument("GP and acquisition bounds differ in dimension");

  // Scores are computed in the GP's own unit cube; candidates are drawn in `bounds`.
  auto to_gp_unit = [&](const Eigen::VectorXd& u) {
    std::vector<double> uu(u.data(), u.data() + u.size());
    const auto x = bounds.from_unit(uu);
    const auto g = gp.bounds().to_unit(x);
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size())));
  };

  const Eigen::MatrixXd cand = halton_candidates(d, kAcquisitionCandidates, seed);
  Eigen::MatrixXd gp_cand(cand.rows(), cand.cols());
  for (Eigen::Index i = 0; i < cand.cols(); ++i) gp_cand.col(i) = to_gp_unit(cand.col(i));
  Eigen::VectorXd mean, sd;
  gp.predict_unit(gp_cand, mean, sd);
  const Eigen::VectorXd scores = mean - kappa * sd;
  Eigen::Index best_i = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) < scores(best_i)) best_i = i;
  }

  Eigen::VectorXd x = cand.col(best_i);
  double best = scores(best_i);
  double step = 0.05;
  bool improved_in_sweep = false;
  for (std::size_t s = 0; s < kRefinementSteps; ++s) {
    const auto j = static_cast<Eigen::Index>(s % d);
    for (double dir : {1.0, -1.0}) {
      Eigen::VectorXd trial = x;
      trial(j) = std::clamp(trial(j) + dir * step, 0.0, 1.0);
      if (trial(j) == x(j)) continue;
      const double score = unit_score(gp, to_gp_unit(trial), kappa);
      if (score < best) {
        best = score;
        x = trial;
        improved_in_sweep = true;
        break;
      }
    }
    if ((s + 1) % d == 0) {
      if (!improved_in_sweep) step *= 0.5;
      improved_in_sweep = false;
    }
  }
  std::vector<double> u(x.data(), x.data() + x.size());
  return bounds.from_unit(u);
}

OptimizeResult optimize(const Objective& f, const Bounds& bounds, const BOConfig& cfg) {
  bounds.validate();
  if (cfg.i0 < 1 || cfg.i0 > cfg.iterations) throw std::invalid_argument("BO config needs 1 <= i0 <= I");
  const std::size_t d = bounds.dims();

  Rng rng(mix_seed(cfg.seed, 0xB0));
  std::vector<Observation> obs;
  OptimizeResult result;
  double length_scale = GPOptions{}.length_scale;
  std::size_t refit_block = 0;

  for (std::size_t i = 0; i < cfg.iterations; ++i) {
    std::vector<double> x(d);
    if (i < cfg.i0) {
      for (std::size_t j = 0; j < d; ++j) x[j] = rng.uniform(bounds.low[j], bounds.high[j]);
    } else {
      if (cfg.refit_every > 0 && obs.size() / cfg.refit_every > refit_block) {
        refit_block = obs.size() / cfg.refit_every;
        length_scale = select_length_scale(obs, bounds);
      }
      const auto gp = GaussianProcess::fit(obs, bounds, {length_scale, GPOptions{}.jitter});
      x = acquire_next(gp, bounds, cfg.kappa, mix_seed(cfg.seed, 0x1000 + i));
    }
    for (int tries = 0; tries < 16 && near_existing(obs, x); ++tries) {
      for (std::size_t j = 0; j < d; ++j) x[j] += rng.uniform(-1e-6, 1e-6);
      x = bounds.clamp(x);
    }

    const auto start = std::chrono::steady_clock::now();
    Evaluation e;
    try {
      e = f(x);
    } catch (const std::exception& ex) {
      throw OptimizationAborted("objective failed at iteration " + std::to_string(i) + ": " + ex.what(),
                                std::move(result.history));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back({i, x, e.value, e.was_penalty, seconds});
    obs.push_back({std::move(x), e.value});
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.history.size(); ++i) {
    if (result.history[i].value < result.history[best].value) best = i;
  }
  result.best_x = result.history[best].x;
  result.best_value = result.history[best].value;
  return result;
}

void write_history_csv(std::ostream& out, std::span<const HistoryEntry> history) {
  const std::size_t d = history.empty() ? 0 : history.front().x.size();
  out << "iteration";
  for (std::size_t j = 0; j < d; ++j) out << ",phi_" << j;
  out << ",value,was_penalty,seconds\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& h : history) {
    out << h.iteration;
    for (double v : h.x) out << ',' << v;
    out << ',' << h.value << ',' << (h.was_penalty ? 1 : 0) << ',' << h.seconds << '\n';
  }
}

}  // namespace gmprune::bo
