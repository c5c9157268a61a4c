#include "gmprune/grouping.hpp"

#include <cmath>

namespace gmprune::group {

std::size_t LayerGrouping::layer_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

LayerGrouping partition(const nn::Network& net, std::size_t n_groups, std::span<const std::size_t> boundaries) {
  const std::size_t layers = net.prunable_layers().size();
  if (n_groups == 0) throw GroupingError("need at least one group");
  if (boundaries.size() + 1 != n_groups) {
    throw GroupingError(std::to_string(n_groups) + " groups need " + std::to_string(n_groups - 1) +
                        " boundaries, got " + std::to_string(boundaries.size()));
  }
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    if (i > 0 && boundaries[i] <= boundaries[i - 1]) {
      throw GroupingError("group boundaries must be strictly increasing");
    }
    if (boundaries[i] == 0 || boundaries[i] >= layers) {
      throw GroupingError("boundary " + std::to_string(boundaries[i]) + " leaves an empty group (" +
                          std::to_string(layers) + " prunable layers)");
    }
  }
  LayerGrouping g;
  std::size_t start = 0;
  for (std::size_t k = 0; k < n_groups; ++k) {
    const std::size_t end = k + 1 < n_groups ? boundaries[k] : layers;
    if (end <= start) throw GroupingError("empty group " + std::to_string(k));
    std::vector<std::size_t> members;
    for (std::size_t l = start; l < end; ++l) members.push_back(l);
    g.groups.push_back(std::move(members));
    g.names.push_back("group" + std::to_string(k + 1));
    start = end;
  }
  return g;
}

std::vector<std::size_t> equal_depth_boundaries(std::size_t layer_count, std::size_t n_groups) {
  if (n_groups == 0 || n_groups > layer_count) {
    throw GroupingError("cannot cut " + std::to_string(layer_count) + " layers into " + std::to_string(n_groups) +
                        " non-empty groups");
  }
  std::vector<std::size_t> out;
  for (std::size_t g = 1; g < n_groups; ++g) {
    out.push_back(static_cast<std::size_t>(
        std::lround(static_cast<double>(g * layer_count) / static_cast<double>(n_groups))));
  }
  return out;
}

ParamCounts count_params(const nn::Network& net, const LayerGrouping& grouping) {
  const auto prunable = net.prunable_layers();
  ParamCounts counts;
  for (const auto& members : grouping.groups) {
    std::size_t n = 0;
    for (std::size_t ordinal : members) {
      nn::visit_filter_layer(net.layers.at(prunable.at(ordinal)), [&](const auto& l) { n += nn::param_count(l); });
    }
    counts.per_group.push_back(n);
    counts.total += n;
  }
  return counts;
}

SparsityReport sparsity(const nn::Network& net, const LayerGrouping& grouping) {
  const auto prunable = net.prunable_layers();
  SparsityReport r;
  for (const auto& members : grouping.groups) {
    std::size_t total = 0, pruned = 0;
    for (std::size_t ordinal : members) {
      nn::visit_filter_layer(net.layers.at(prunable.at(ordinal)), [&](const auto& l) {
        const std::size_t per = nn::params_per_filter(l);
        total += l.filter_count() * per;
        for (std::size_t m = 0; m < l.filter_count(); ++m) {
          if (!l.mask[m]) pruned += per;
        }
      });
    }
    r.per_group_params.push_back(total);
    r.per_group_pruned.push_back(pruned);
    r.per_group.push_back(total ? static_cast<double>(pruned) / static_cast<double>(total) : 0.0);
    r.params_total += total;
    r.params_pruned += pruned;
  }
  r.overall = r.params_total ? static_cast<double>(r.params_pruned) / static_cast<double>(r.params_total) : 0.0;
  return r;
}

}  // namespace gmprune::group
