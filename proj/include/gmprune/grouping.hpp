#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmprune/network.hpp"

namespace gmprune::group {

class GroupingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Contiguous groups over the prunable layers. Entries of `groups` are
/// prunable-layer ordinals (0 = first prunable layer), not raw layer indices.
struct LayerGrouping {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::string> names;

  std::size_t size() const { return groups.size(); }
  std::size_t layer_count() const;
};

/// Cuts the prunable layers at `boundaries` (strictly increasing ordinals,
/// length n_groups - 1). Group g covers [boundaries[g-1], boundaries[g]).
LayerGrouping partition(const nn::Network& net, std::size_t n_groups, std::span<const std::size_t> boundaries);

/// Equal-depth cuts: boundary g sits at round(g * L / n_groups).
std::vector<std::size_t> equal_depth_boundaries(std::size_t layer_count, std::size_t n_groups);

struct ParamCounts {
  std::vector<std::size_t> per_group;
  std::size_t total = 0;
};

/// Weights + biases of the prunable layers, per group.
ParamCounts count_params(const nn::Network& net, const LayerGrouping& grouping);

struct SparsityReport {
  double overall = 0.0;
  std::vector<double> per_group;
  std::size_t params_total = 0;
  std::size_t params_pruned = 0;
  std::vector<std::size_t> per_group_params;
  std::vector<std::size_t> per_group_pruned;
};

/// A parameter counts as pruned iff its filter's mask is false. The universe
/// is the prunable layers only.
SparsityReport sparsity(const nn::Network& net, const LayerGrouping& grouping);

}  // namespace gmprune::group
