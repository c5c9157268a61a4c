#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gmprune/bayesopt.hpp"
#include "gmprune/rng.hpp"

using namespace gmprune;

namespace {

bo::Bounds unit(std::size_t d) { return bo::Bounds::uniform(d, 0.0, 1.0); }

double bowl(std::span<const double> x) { return std::pow(x[0] - 0.2, 2) + std::pow(x[1] - 0.7, 2); }

double random_search_best(std::size_t budget, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5EA));
  double best = INFINITY;
  for (std::size_t i = 0; i < budget; ++i) {
    const double x[2] = {rng.uniform(), rng.uniform()};
    best = std::min(best, bowl(x));
  }
  return best;
}

}  // namespace

TEST_CASE("gp: single observation interpolates with vanishing variance") {
  const std::vector<bo::Observation> obs{{{0.5}, 1.0}};
  const auto gp = bo::GaussianProcess::fit(obs, unit(1));
  const double x[1] = {0.5};
  const auto p = gp.predict(x);
  CHECK(p.mean == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(p.stddev < 1e-2);
  CHECK_THROWS_AS(bo::GaussianProcess::fit(std::vector<bo::Observation>{}, unit(1)), bo::GPError);
}

TEST_CASE("gp: five samples of x^2 predict the midpoint value") {
  std::vector<bo::Observation> obs;
  for (double x : {0.0, 0.25, 0.5, 0.75, 1.0}) obs.push_back({{x}, x * x});
  const auto gp = bo::GaussianProcess::fit(obs, unit(1), {0.2, 1e-6});
  const double q[1] = {0.55};
  const double mean = gp.predict(q).mean;
  MESSAGE("posterior mean at 0.55: " << mean);
  CHECK(std::fabs(mean - 0.3025) <= 0.05);
}

TEST_CASE("gp: posterior mean interpolates smooth objectives within ten noise deviations") {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const std::size_t d = 1 + rng.below(4), n = 1 + rng.below(25);
    std::vector<double> freq(d), phase(d);
    for (auto& v : freq) v = rng.uniform(1.0, 6.0);
    for (auto& v : phase) v = rng.uniform(0.0, 6.28);
    const double amp = rng.uniform(0.1, 10.0);
    std::vector<bo::Observation> obs;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      double y = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        x[j] = rng.uniform();
        y += amp * std::sin(freq[j] * x[j] + phase[j]);
      }
      obs.push_back({x, y});
    }
    const auto bounds = unit(d);
    const double ell = bo::select_length_scale(obs, bounds);
    const auto gp = bo::GaussianProcess::fit(obs, bounds, {ell, 1e-6});
    const double tol = 10.0 * std::sqrt(gp.jitter());
    for (const auto& o : obs) CHECK(std::fabs(gp.predict(o.x).mean - o.y) / gp.output_scale() <= tol);
  }
}

TEST_CASE("gp: near-coincident inputs with different outputs are averaged, not interpolated") {
  const std::vector<bo::Observation> obs{{{0.5}, 0.0}, {{0.5 + 1e-8}, 1.0}};
  const auto gp = bo::GaussianProcess::fit(obs, unit(1));
  CHECK(gp.size() == 2);
  CHECK(gp.predict(obs[0].x).mean == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(gp.predict(obs[1].x).mean == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("gp: duplicate inputs are merged before factorization") {
  const std::vector<bo::Observation> obs{{{0.3}, 1.0}, {{0.3}, 3.0}, {{0.3 + 1e-12}, 2.0}, {{0.8}, 0.0}};
  const auto merged = bo::dedupe(obs);
  REQUIRE(merged.size() == 2);
  CHECK(merged[0].y == doctest::Approx(2.0));
  const auto gp = bo::GaussianProcess::fit(obs, unit(1));
  CHECK(gp.size() == 2);
  CHECK(gp.jitter() == 1e-6);
}

TEST_CASE("gp: jitter escalates when the kernel matrix is numerically singular") {
  std::vector<bo::Observation> obs;
  for (int i = 0; i < 40; ++i) obs.push_back({{0.5 + 1e-6 * i}, std::sin(10.0 * i)});
  const auto gp = bo::GaussianProcess::fit(obs, unit(1), {2.0, 1e-16});
  MESSAGE("jitter used: " << gp.jitter());
  CHECK(gp.jitter() > 1e-16);
  CHECK(gp.jitter() <= 1e-2 * (1.0 + 1e-9));
}

TEST_CASE("ucb: kappa zero, observed points and the far-field prior") {
  const std::vector<bo::Observation> obs{{{0.1, 0.1}, 1.0}, {{0.2, 0.3}, 2.0}, {{0.15, 0.2}, 4.0}};
  const auto bounds = unit(2);
  const auto gp = bo::GaussianProcess::fit(obs, bounds, {0.05, 1e-6});
  const double mid[2] = {0.4, 0.5};
  CHECK(bo::ucb_score(gp, mid, 0.0) == gp.predict(mid).mean);
  CHECK(bo::ucb_score(gp, obs[1].x, 2.0) == doctest::Approx(2.0).epsilon(1e-3));
  const double far[2] = {1.0, 1.0};
  const double prior = gp.output_mean() - 2.0 * gp.output_scale();
  CHECK(bo::ucb_score(gp, far, 2.0) == doctest::Approx(prior).epsilon(1e-9));
}

TEST_CASE("acquire_next: interior point between two equal observations") {
  const std::vector<bo::Observation> obs{{{0.1}, 5.0}, {{0.9}, 5.0}};
  const auto bounds = unit(1);
  const auto gp = bo::GaussianProcess::fit(obs, bounds);
  const auto x = bo::acquire_next(gp, bounds, 10.0, 21);
  MESSAGE("acquired point: " << x[0]);
  CHECK(std::fabs(x[0] - 0.5) <= 0.15);
}

TEST_CASE("acquire_next: collapsed bounds return the single feasible point") {
  const std::vector<bo::Observation> obs{{{0.2, 0.2}, 1.0}, {{0.6, 0.4}, 0.0}};
  const auto gp = bo::GaussianProcess::fit(obs, unit(2));
  const bo::Bounds tiny{{0.3, 0.3}, {0.3 + 1e-6, 0.3 + 1e-6}};
  const auto x = bo::acquire_next(gp, tiny, 2.0, 4);
  for (double v : x) {
    CHECK(v >= 0.3);
    CHECK(v <= 0.3 + 1e-6);
  }
}

TEST_CASE("acquire_next: kappa zero lands near the observed minimum of a bowl") {
  std::vector<bo::Observation> obs;
  for (double x : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) obs.push_back({{x}, std::pow(x - 0.6, 2)});
  const auto bounds = unit(1);
  const auto gp = bo::GaussianProcess::fit(obs, bounds, {0.3, 1e-6});
  const auto x = bo::acquire_next(gp, bounds, 0.0, 8);
  MESSAGE("acquired point: " << x[0]);
  CHECK(std::fabs(x[0] - 0.6) <= 0.05);
}

TEST_CASE("acquire_next: results stay within bounds") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng.below(6);
    bo::Bounds b = bo::rate_bounds(d, rng.uniform(0.1, 0.9), 0.2);
    std::vector<bo::Observation> obs;
    for (int i = 0; i < 8; ++i) {
      std::vector<double> x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = rng.uniform(b.low[j], b.high[j]);
      obs.push_back({x, rng.uniform()});
    }
    const auto gp = bo::GaussianProcess::fit(obs, b);
    const auto x = bo::acquire_next(gp, b, 2.0, static_cast<std::uint64_t>(t));
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(x[j] >= b.low[j]);
      CHECK(x[j] <= b.high[j]);
    }
  }
}

TEST_CASE("rate_bounds: cap at 0.95") {
  const auto b = bo::rate_bounds(3, 0.5, 0.2);
  CHECK(b.high == std::vector<double>(3, 0.7));
  CHECK(bo::rate_bounds(1, 0.9, 0.2).high[0] == 0.95);
  CHECK_THROWS(bo::Bounds::uniform(1, 0.5, 0.5));
}

TEST_CASE("optimize: constant objective") {
  bo::BOConfig cfg;
  cfg.i0 = 2;
  cfg.iterations = 5;
  const auto r = bo::optimize([](std::span<const double>) { return bo::Evaluation{7.0, false}; }, unit(2), cfg);
  CHECK(r.best_value == 7.0);
  CHECK(r.history.size() == 5);
}

TEST_CASE("optimize: 1-D parabola") {
  bo::BOConfig cfg;
  cfg.i0 = 10;
  cfg.iterations = 60;
  cfg.seed = 3;
  const auto r =
      bo::optimize([](std::span<const double> x) { return bo::Evaluation{std::pow(x[0] - 0.3, 2), false}; }, unit(1), cfg);
  MESSAGE("best phi: " << r.best_x[0]);
  CHECK(std::fabs(r.best_x[0] - 0.3) <= 0.05);
}

TEST_CASE("optimize: 2-D bowl reaches 0.01") {
  bo::BOConfig cfg;
  cfg.i0 = 20;
  cfg.iterations = 120;
  cfg.seed = 1;
  const auto r = bo::optimize([](std::span<const double> x) { return bo::Evaluation{bowl(x), false}; }, unit(2), cfg);
  MESSAGE("best value: " << r.best_value);
  CHECK(r.best_value <= 0.01);
}

TEST_CASE("optimize: exact budget, seeded initial design and argmin consistency") {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    bo::BOConfig cfg;
    cfg.iterations = 3 + rng.below(20);
    cfg.i0 = 1 + rng.below(cfg.iterations);
    cfg.seed = rng.next_u64();
    const std::size_t d = 1 + rng.below(3);
    std::size_t calls = 0;
    auto f = [&](std::span<const double> x) {
      ++calls;
      double s = 0.0;
      for (double v : x) s += std::sin(7.0 * v);
      return bo::Evaluation{s, s > 1.0};
    };
    const auto bounds = bo::rate_bounds(d, 0.5, 0.2);
    const auto r = bo::optimize(f, bounds, cfg);
    CHECK(calls == cfg.iterations);
    REQUIRE(r.history.size() == cfg.iterations);
    double best = INFINITY;
    for (std::size_t i = 0; i < r.history.size(); ++i) {
      CHECK(r.history[i].iteration == i);
      best = std::min(best, r.history[i].value);
    }
    CHECK(r.best_value == best);

    const auto again = bo::optimize(f, bounds, cfg);
    for (std::size_t i = 0; i < cfg.i0; ++i) CHECK(again.history[i].x == r.history[i].x);
    CHECK(again.best_x == r.best_x);
  }
  bo::BOConfig bad;
  bad.i0 = 6;
  bad.iterations = 5;
  CHECK_THROWS(bo::optimize([](std::span<const double>) { return bo::Evaluation{}; }, unit(1), bad));
}

TEST_CASE("optimize: a failing objective aborts with the partial history") {
  bo::BOConfig cfg;
  cfg.i0 = 3;
  cfg.iterations = 10;
  std::size_t calls = 0;
  auto f = [&](std::span<const double> x) {
    if (++calls == 6) throw std::runtime_error("boom");
    return bo::Evaluation{x[0], false};
  };
  try {
    bo::optimize(f, unit(1), cfg);
    FAIL("expected OptimizationAborted");
  } catch (const bo::OptimizationAborted& e) {
    CHECK(e.partial_history().size() == 5);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
}

TEST_CASE("optimize: beats equal-budget random search on the bowl") {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    bo::BOConfig cfg;
    cfg.i0 = 20;
    cfg.iterations = 120;
    cfg.seed = seed;
    const auto r = bo::optimize([](std::span<const double> x) { return bo::Evaluation{bowl(x), false}; }, unit(2), cfg);
    wins += r.best_value <= random_search_best(120, seed);
  }
  MESSAGE("BO wins: " << wins << "/10");
  CHECK(wins >= 8);
}

TEST_CASE("history csv: header and rows") {
  std::vector<bo::HistoryEntry> h{{0, {0.25, 0.5}, 1.5, false, 0.0}, {1, {0.1, 0.2}, 100.0, true, 0.5}};
  std::ostringstream out;
  bo::write_history_csv(out, h);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "iteration,phi_0,phi_1,value,was_penalty,seconds");
  std::getline(in, line);
  CHECK(line == "0,0.25,0.5,1.5,0,0");
  std::getline(in, line);
  CHECK(line == "1,0.10000000000000001,0.20000000000000001,100,1,0.5");
}
