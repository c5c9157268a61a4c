#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>

#include "gmprune/dataset.hpp"
#include "gmprune/grouping.hpp"
#include "gmprune/network.hpp"

namespace gmprune::objective {

/// Hinge on under-pruning: target - sparsity when target > sparsity, else 0.
double sparsity_penalty(double sparsity, double target);

struct ObjectiveConfig {
  double target = 0.5;        // T
  double t_plus = 0.04;       // acceptable deviation T+
  double lambda = 5.0;
  double penalty_value = 100.0;
  float lr = 0.02f;
  std::size_t batch_size = 32;
  std::uint64_t epoch_seed = 0;  // same shuffle for every evaluation

  void validate() const;
};

struct ObjectiveResult {
  double value = 0.0;
  double sparsity_achieved = 0.0;
  bool was_penalty = false;
  std::optional<double> val_loss;
  std::optional<double> penalty_term;
  bool warning = false;  // training diverged; value fell back to penalty_value
  std::size_t sgd_steps = 0;
};

/// True when T - T+ <= S <= T + T+.
bool within_band(double sparsity, const ObjectiveConfig& cfg);

/// f_loss + lambda * g for an in-band sparsity.
double combine(double val_loss, double sparsity, const ObjectiveConfig& cfg);

/// Read-only deep copy of a trained network, shared by all evaluations.
class Snapshot {
 public:
  explicit Snapshot(const nn::Network& net) : net_(std::make_shared<const nn::Network>(net)) {}
  const nn::Network& network() const { return *net_; }
  nn::Network clone() const { return *net_; }
  // FNV-1a over the encoded checkpoint bytes.
  std::uint64_t checksum() const;

 private:
  std::shared_ptr<const nn::Network> net_;
};

Snapshot snapshot_pretrained(const nn::Network& net);

/// Trial soft-prune of the snapshot with candidate rates, sparsity band
/// check, one epoch of training and validation loss.
class PruningObjective {
 public:
  PruningObjective(Snapshot snapshot, group::LayerGrouping grouping, data::Split split, ObjectiveConfig cfg);

  ObjectiveResult evaluate(std::span<const double> rates) const;

  const ObjectiveConfig& config() const { return cfg_; }
  const Snapshot& snapshot() const { return snapshot_; }
  const group::LayerGrouping& grouping() const { return grouping_; }

 private:
  Snapshot snapshot_;
  group::LayerGrouping grouping_;
  data::Split split_;
  ObjectiveConfig cfg_;
};

}  // namespace gmprune::objective
