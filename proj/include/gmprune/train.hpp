#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "gmprune/dataset.hpp"
#include "gmprune/network.hpp"

namespace gmprune::nn {

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::size_t layer, const std::string& what) : std::runtime_error(what), layer_(layer) {}
  // Index into Network::layers of the first layer with a non-finite output,
  // or layers.size() when only the loss itself is non-finite.
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

struct NetworkGrad {
  std::vector<LayerGrad> layers;

  static NetworkGrad zeros_like(const Network& net);
};

/// Forward + backward for one sample; adds parameter gradients into `grad`
/// and returns the sample's loss.
double accumulate_gradients(const Network& net, const Tensor& input, std::uint32_t label, NetworkGrad& grad);

/// One SGD step on a mini-batch: non-frozen parameters move by -lr * mean gradient.
/// Returns the mean batch loss (computed before the update).
double sgd_step(Network& net, std::span<const Tensor> inputs, std::span<const std::uint32_t> labels, float lr);

struct TrainOptions {
  std::size_t epochs = 1;
  float lr = 0.05f;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainTrace {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

/// Sample order for one epoch: deterministic in (n, seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Fixed-size mini-batches, last partial batch dropped.
TrainTrace train_epochs(Network& net, const data::Dataset& dataset, const TrainOptions& options);

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalMetrics evaluate(const Network& net, const data::Dataset& dataset);

}  // namespace gmprune::nn
