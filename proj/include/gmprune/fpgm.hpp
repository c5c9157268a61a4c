#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "gmprune/grouping.hpp"
#include "gmprune/network.hpp"

namespace gmprune::fpgm {

/// M flattened filters, one per row. Conv filter m is flattened in its
/// [c, k, k] row-major order; a dense "filter" is its weight row.
class FilterMatrix {
 public:
  FilterMatrix(std::size_t rows, std::size_t cols);
  FilterMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static FilterMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t m) const { return {values_.data() + m * cols_, cols_}; }
  std::span<double> row(std::size_t m) { return {values_.data() + m * cols_, cols_}; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
};

template <nn::FilterLayer L>
FilterMatrix filter_matrix(const L& layer) {
  FilterMatrix f(layer.filter_count(), layer.filter_size());
  for (std::size_t m = 0; m < layer.filter_count(); ++m) {
    const auto w = nn::filter_weights(layer, m);
    auto dst = f.row(m);
    for (std::size_t j = 0; j < w.size(); ++j) dst[j] = w[j];
  }
  return f;
}

struct GMResult {
  std::vector<double> median;
  std::vector<double> distances;  // ||F_m - median||_2
  int iterations_used = 0;
  bool converged = false;
  // Sum of distances at the starting point and after every iteration.
  std::vector<double> objective_trace;
};

inline constexpr double kDefaultTolerance = 1e-6;
inline constexpr int kDefaultMaxIterations = 100;
// Distances below this floor are clamped when forming Weiszfeld weights.
inline constexpr double kDistanceFloor = 1e-12;

double sum_of_distances(const FilterMatrix& f, std::span<const double> x);

/// Weiszfeld iteration started from the coordinate-wise mean. Stops when
/// successive iterates move less than `tol` (L2) or after `max_iter` steps.
GMResult geometric_median(const FilterMatrix& f, double tol = kDefaultTolerance,
                          int max_iter = kDefaultMaxIterations);

/// Filter indices by ascending distance to the median; ties keep index order.
std::vector<std::size_t> rank_filters(const FilterMatrix& f, const GMResult& gm);

/// round-half-to-even(rate * M), capped at M - 1 so one filter survives.
std::size_t prune_count(double rate, std::size_t filters);

template <nn::FilterLayer L>
std::vector<std::size_t> fpgm_ranking(const L& layer) {
  const FilterMatrix f = filter_matrix(layer);
  return rank_filters(f, geometric_median(f));
}

/// Zeroes the first prune_count(rate, M) filters of `ranking` (weights and
/// bias) and masks them, without freezing. All other filters are unmasked.
template <nn::FilterLayer L>
void soft_prune_layer(L& layer, double rate, std::span<const std::size_t> ranking);

/// Like soft_prune_layer but the selected filters are also frozen.
template <nn::FilterLayer L>
void hard_prune_layer(L& layer, double rate, std::span<const std::size_t> ranking);

/// Applies rates[g] to every layer of group g with a fresh FPGM ranking per layer.
void soft_prune_network(nn::Network& net, std::span<const double> rates, const group::LayerGrouping& grouping);
void hard_prune_network(nn::Network& net, std::span<const double> rates, const group::LayerGrouping& grouping);

void check_rate(double rate);

}  // namespace gmprune::fpgm
