#include "gmprune/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "gmprune/checkpoint.hpp"
#include "gmprune/fpgm.hpp"
#include "gmprune/train.hpp"

namespace gmprune::objective {

double sparsity_penalty(double sparsity, double target) { return target > sparsity ? target - sparsity : 0.0; }

void ObjectiveConfig::validate() const {
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("target sparsity T must lie in (0, 1)");
  if (!(t_plus >= 0.0)) throw std::invalid_argument("T+ must be non-negative");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (!(lr > 0.0f)) throw std::invalid_argument("objective learning rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("objective batch size must be positive");
}

bool within_band(double sparsity, const ObjectiveConfig& cfg) {
  return cfg.target - cfg.t_plus <= sparsity && sparsity <= cfg.target + cfg.t_plus;
}

double combine(double val_loss, double sparsity, const ObjectiveConfig& cfg) {
  return val_loss + cfg.lambda * sparsity_penalty(sparsity, cfg.target);
}

std::uint64_t Snapshot::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : nn::encode_checkpoint(*net_)) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

Snapshot snapshot_pretrained(const nn::Network& net) { return Snapshot(net); }

PruningObjective::PruningObjective(Snapshot snapshot, group::LayerGrouping grouping, data::Split split,
                                   ObjectiveConfig cfg)
    : snapshot_(std::move(snapshot)), grouping_(std::move(grouping)), split_(std::move(split)), cfg_(cfg) {
  cfg_.validate();
}

ObjectiveResult PruningObjective::evaluate(std::span<const double> rates) const {
  nn::Network net = snapshot_.clone();
  fpgm::soft_prune_network(net, rates, grouping_);

  ObjectiveResult r;
  r.sparsity_achieved = group::sparsity(net, grouping_).overall;
  if (!within_band(r.sparsity_achieved, cfg_)) {
    r.value = cfg_.penalty_value;
    r.was_penalty = true;
    return r;
  }

  try {
    const auto trace = nn::train_epochs(net, split_.train, {1, cfg_.lr, cfg_.batch_size, cfg_.epoch_seed});
    r.sgd_steps = trace.steps;
    const double loss = nn::evaluate(net, split_.validation).loss;
    if (!std::isfinite(loss)) throw nn::NonFiniteError(net.layers.size(), "non-finite validation loss");
    r.val_loss = loss;
    r.penalty_term = cfg_.lambda * sparsity_penalty(r.sparsity_achieved, cfg_.target);
    r.value = combine(loss, r.sparsity_achieved, cfg_);
  } catch (const nn::NonFiniteError&) {
    r.value = cfg_.penalty_value;
    r.was_penalty = true;
    r.warning = true;
    r.val_loss.reset();
    r.penalty_term.reset();
  }
  return r;
}

}  // namespace gmprune::objective
