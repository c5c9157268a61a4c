#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gmprune/tensor.hpp"

namespace gmprune::nn {

/// 2-D convolution over a single [c, H, W] sample. Filters are [M, c, k, k].
///
/// A filter with mask[m] == false has been selected by the last prune event.
/// Soft-pruned filters (mask false, frozen false) keep training and may grow
/// back; hard-pruned filters (frozen true) stay bit-exactly zero.
struct ConvLayer {
  Tensor filters;
  std::optional<Tensor> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::vector<bool> mask;
  std::vector<bool> frozen;
  bool prunable = true;

  static ConvLayer make(std::size_t in_channels, std::size_t filter_count, std::size_t kernel,
                        std::size_t stride = 1, std::size_t padding = 0, bool with_bias = true);

  std::size_t filter_count() const { return filters.dim(0); }
  std::size_t in_channels() const { return filters.dim(1); }
  std::size_t kernel_size() const { return filters.dim(2); }
  std::size_t filter_size() const { return in_channels() * kernel_size() * kernel_size(); }
  bool has_bias() const { return bias.has_value(); }

  Shape output_shape(const Shape& input) const;
};

/// Fully connected layer, weights [out, in]. "Filter" m is output row m.
struct DenseLayer {
  Tensor weights;
  Tensor bias;
  std::vector<bool> mask;
  std::vector<bool> frozen;
  bool prunable = true;

  static DenseLayer make(std::size_t in_features, std::size_t out_features);

  std::size_t filter_count() const { return weights.dim(0); }
  std::size_t in_features() const { return weights.dim(1); }
  std::size_t filter_size() const { return in_features(); }
  bool has_bias() const { return true; }

  Shape output_shape(const Shape& input) const;
};

struct LeakyRelu {
  float slope = 0.01f;
};

/// [c, H, W] -> [c]
struct GlobalAvgPool {};

using Layer = std::variant<ConvLayer, DenseLayer, LeakyRelu, GlobalAvgPool>;

template <class L>
concept FilterLayer = std::same_as<L, ConvLayer> || std::same_as<L, DenseLayer>;

std::string layer_kind(const Layer& layer);

Tensor conv2d_forward(const ConvLayer& layer, const Tensor& input);
Tensor dense_forward(const DenseLayer& layer, const Tensor& input);
Tensor leaky_relu_forward(const LeakyRelu& layer, const Tensor& input);
Tensor global_avg_pool_forward(const Tensor& input);
Tensor layer_forward(const Layer& layer, const Tensor& input);

// Parameter gradients of one layer. Empty tensors for parameter-free layers.
struct LayerGrad {
  Tensor d_weights;
  Tensor d_bias;
};

// Each backward accumulates parameter gradients into `grad` (which must be
// shaped like the layer's parameters) and returns the input gradient.
// Frozen filters receive no parameter gradient.
Tensor conv2d_backward(const ConvLayer& layer, const Tensor& input, const Tensor& d_output, LayerGrad& grad);
Tensor dense_backward(const DenseLayer& layer, const Tensor& input, const Tensor& d_output, LayerGrad& grad);
Tensor leaky_relu_backward(const LeakyRelu& layer, const Tensor& input, const Tensor& d_output);
Tensor global_avg_pool_backward(const Tensor& input, const Tensor& d_output);

/// Mean over the batch of -log softmax(logits)[label]. logits is [batch, classes].
double cross_entropy_loss(const Tensor& logits, std::span<const std::uint32_t> labels);

/// Loss and d loss / d logits for a single sample (logits is [classes]).
double softmax_cross_entropy(const Tensor& logits, std::uint32_t label, Tensor* d_logits);

class Network {
 public:
  Network() = default;
  explicit Network(std::uint64_t rng_seed) : rng_seed(rng_seed) {}

  std::vector<Layer> layers;
  std::uint64_t rng_seed = 0;

  Network& add(Layer layer);

  /// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero bias, all masks active.
  void initialize();

  /// Propagates `input_shape` through every layer, throwing ShapeError that
  /// names the first layer that does not compose. Returns the output shape.
  Shape validate(const Shape& input_shape) const;

  Tensor forward(const Tensor& input) const;

  /// Indices into `layers` of the layers that take part in pruning, in order.
  std::vector<std::size_t> prunable_layers() const;

  /// Throws std::logic_error if any mask/frozen/zero relation is broken.
  void check_invariants() const;

  bool bit_equal(const Network& other) const;
};

/// Calls fn(layer) for the FilterLayer stored in `layer`; returns false for activations.
template <class Fn>
bool visit_filter_layer(Layer& layer, Fn&& fn) {
  if (auto* c = std::get_if<ConvLayer>(&layer)) {
    fn(*c);
    return true;
  }
  if (auto* d = std::get_if<DenseLayer>(&layer)) {
    fn(*d);
    return true;
  }
  return false;
}

template <class Fn>
bool visit_filter_layer(const Layer& layer, Fn&& fn) {
  if (const auto* c = std::get_if<ConvLayer>(&layer)) {
    fn(*c);
    return true;
  }
  if (const auto* d = std::get_if<DenseLayer>(&layer)) {
    fn(*d);
    return true;
  }
  return false;
}

// Filter-level helpers shared by both weighted layer kinds.
template <FilterLayer L>
std::span<float> filter_weights(L& layer, std::size_t m) {
  if constexpr (std::same_as<L, ConvLayer>) {
    return layer.filters.data().subspan(m * layer.filter_size(), layer.filter_size());
  } else {
    return layer.weights.data().subspan(m * layer.filter_size(), layer.filter_size());
  }
}

template <FilterLayer L>
std::span<const float> filter_weights(const L& layer, std::size_t m) {
  if constexpr (std::same_as<L, ConvLayer>) {
    return layer.filters.data().subspan(m * layer.filter_size(), layer.filter_size());
  } else {
    return layer.weights.data().subspan(m * layer.filter_size(), layer.filter_size());
  }
}

template <FilterLayer L>
void zero_filter(L& layer, std::size_t m) {
  for (float& w : filter_weights(layer, m)) w = 0.0f;
  if constexpr (std::same_as<L, ConvLayer>) {
    if (layer.bias) (*layer.bias)[m] = 0.0f;
  } else {
    layer.bias[m] = 0.0f;
  }
}

template <FilterLayer L>
std::size_t params_per_filter(const L& layer) {
  return layer.filter_size() + (layer.has_bias() ? 1 : 0);
}

template <FilterLayer L>
std::size_t param_count(const L& layer) {
  return layer.filter_count() * params_per_filter(layer);
}

}  // namespace gmprune::nn
