#include "gmprune/fpgm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gmprune::fpgm {

FilterMatrix::FilterMatrix(std::size_t rows, std::size_t cols) : FilterMatrix(rows, cols, std::vector<double>(rows * cols)) {}

FilterMatrix::FilterMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows_ == 0 || cols_ == 0) throw std::invalid_argument("filter matrix needs at least one non-empty filter");
  if (values_.size() != rows_ * cols_) throw std::invalid_argument("filter matrix value count mismatch");
}

FilterMatrix FilterMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("filter matrix needs at least one filter");
  const std::size_t cols = rows.front().size();
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw std::invalid_argument("all filters must have the same length");
    values.insert(values.end(), r.begin(), r.end());
  }
  return FilterMatrix(rows.size(), cols, std::move(values));
}

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

double sum_of_distances(const FilterMatrix& f, std::span<const double> x) {
  double total = 0.0;
  for (std::size_t m = 0; m < f.rows(); ++m) total += distance(f.row(m), x);
  return total;
}

GMResult geometric_median(const FilterMatrix& f, double tol, int max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("geometric median tolerance must be positive");
  const std::size_t M = f.rows(), D = f.cols();

  std::vector<double> x(D, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const auto r = f.row(m);
    for (std::size_t j = 0; j < D; ++j) x[j] += r[j];
  }
  for (double& v : x) v /= static_cast<double>(M);

  GMResult result;
  result.objective_trace.push_back(sum_of_distances(f, x));
  std::vector<double> next(D);
  for (int it = 0; it < max_iter; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    double weight_sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      const auto r = f.row(m);
      const double w = 1.0 / std::max(distance(r, x), kDistanceFloor);
      weight_sum += w;
      for (std::size_t j = 0; j < D; ++j) next[j] += w * r[j];
    }
    for (double& v : next) v /= weight_sum;
    const double step = distance(next, x);
    x.swap(next);
    result.iterations_used = it + 1;
    result.objective_trace.push_back(sum_of_distances(f, x));
    if (step < tol) {
      result.converged = true;
      break;
    }
  }

  // Weiszfeld approaches a median that sits on a filter only sublinearly;
  // fall back to the best filter when it beats the final iterate.
  double best = result.objective_trace.back();
  for (std::size_t m = 0; m < M; ++m) {
    const auto r = f.row(m);
    const double obj = sum_of_distances(f, r);
    if (obj < best - 1e-12 * std::max(1.0, best)) {
      best = obj;
      x.assign(r.begin(), r.end());
    }
  }

  result.median = std::move(x);
  result.distances.resize(M);
  for (std::size_t m = 0; m < M; ++m) result.distances[m] = distance(f.row(m), result.median);
  return result;
}

std::vector<std::size_t> rank_filters(const FilterMatrix& f, const GMResult& gm) {
  if (gm.distances.size() != f.rows() || gm.median.size() != f.cols()) {
    throw std::invalid_argument("geometric median result does not belong to this filter matrix");
  }
  std::vector<std::size_t> order(f.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return gm.distances[a] < gm.distances[b]; });
  return order;
}

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("pruning rate must lie in [0, 1), got " + std::to_string(rate));
  }
}

std::size_t prune_count(double rate, std::size_t filters) {
  check_rate(rate);
  if (filters == 0) return 0;
  double exact = rate * static_cast<double>(filters);
  // Products such as 0.15 * 10 land a few ulps off the half; snap them so the
  // tie rule applies.
  const double half = std::floor(exact) + 0.5;
  if (std::abs(exact - half) < 1e-9) exact = half;
  const double rounded = std::nearbyint(exact);  // default mode rounds half to even
  return std::min(static_cast<std::size_t>(rounded), filters - 1);
}

namespace {

template <nn::FilterLayer L>
void prune_layer(L& layer, double rate, std::span<const std::size_t> ranking, bool freeze) {
  const std::size_t M = layer.filter_count();
  if (ranking.size() != M) throw std::invalid_argument("ranking length differs from filter count");
  const std::size_t p = prune_count(rate, M);
  std::vector<bool> selected(M, false);
  for (std::size_t i = 0; i < p; ++i) selected.at(ranking[i]) = true;
  for (std::size_t m = 0; m < M; ++m) {
    if (selected[m]) {
      nn::zero_filter(layer, m);
      layer.mask[m] = false;
      layer.frozen[m] = freeze;
    } else {
      layer.mask[m] = true;
      layer.frozen[m] = false;
    }
  }
}

template <class Fn>
void for_each_grouped_layer(nn::Network& net, std::span<const double> rates, const group::LayerGrouping& grouping,
                            Fn&& fn) {
  if (rates.size() != grouping.size()) {
    throw std::invalid_argument("rate vector has " + std::to_string(rates.size()) + " entries for " +
                                std::to_string(grouping.size()) + " groups");
  }
  for (double r : rates) check_rate(r);
  const auto prunable = net.prunable_layers();
  for (std::size_t g = 0; g < grouping.size(); ++g) {
    for (std::size_t ordinal : grouping.groups[g]) {
      nn::visit_filter_layer(net.layers.at(prunable.at(ordinal)), [&](auto& l) { fn(l, rates[g]); });
    }
  }
}

}  // namespace

template <nn::FilterLayer L>
void soft_prune_layer(L& layer, double rate, std::span<const std::size_t> ranking) {
  prune_layer(layer, rate, ranking, false);
}

template <nn::FilterLayer L>
void hard_prune_layer(L& layer, double rate, std::span<const std::size_t> ranking) {
  prune_layer(layer, rate, ranking, true);
}

template void soft_prune_layer(nn::ConvLayer&, double, std::span<const std::size_t>);
template void soft_prune_layer(nn::DenseLayer&, double, std::span<const std::size_t>);
template void hard_prune_layer(nn::ConvLayer&, double, std::span<const std::size_t>);
template void hard_prune_layer(nn::DenseLayer&, double, std::span<const std::size_t>);

void soft_prune_network(nn::Network& net, std::span<const double> rates, const group::LayerGrouping& grouping) {
  for_each_grouped_layer(net, rates, grouping, [](auto& layer, double rate) {
    const auto ranking = fpgm_ranking(layer);
    soft_prune_layer(layer, rate, ranking);
  });
}

void hard_prune_network(nn::Network& net, std::span<const double> rates, const group::LayerGrouping& grouping) {
  for_each_grouped_layer(net, rates, grouping, [](auto& layer, double rate) {
    const auto ranking = fpgm_ranking(layer);
    hard_prune_layer(layer, rate, ranking);
  });
}

}  // namespace gmprune::fpgm
