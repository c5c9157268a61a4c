#include <cmath>

#include "gmprune/rng.hpp"
#include "gmprune/train.hpp"

namespace gmprune::nn {

namespace {

std::vector<Tensor> forward_trace(const Network& net, const Tensor& input) {
  std::vector<Tensor> acts;
  acts.reserve(net.layers.size() + 1);
  acts.push_back(input);
  for (const Layer& layer : net.layers) acts.push_back(layer_forward(layer, acts.back()));
  return acts;
}

[[noreturn]] void report_non_finite(const Network& net, std::span<const Tensor> inputs) {
  for (const Tensor& input : inputs) {
    const auto acts = forward_trace(net, input);
    for (std::size_t i = 1; i < acts.size(); ++i) {
      if (!acts[i].all_finite()) {
        throw NonFiniteError(i - 1, "non-finite activation first produced by layer " + std::to_string(i - 1) + " (" +
                                        layer_kind(net.layers[i - 1]) + ")");
      }
    }
  }
  throw NonFiniteError(net.layers.size(), "non-finite loss with finite activations (logits overflow softmax)");
}

template <FilterLayer L>
void apply_update(L& layer, const LayerGrad& grad, float scale) {
  const std::size_t per = layer.filter_size();
  auto& w = [&]() -> Tensor& {
    if constexpr (std::same_as<L, ConvLayer>) return layer.filters;
    else return layer.weights;
  }();
  Tensor* bias = nullptr;
  if constexpr (std::same_as<L, ConvLayer>) {
    if (layer.bias) bias = &*layer.bias;
  } else {
    bias = &layer.bias;
  }
  for (std::size_t m = 0; m < layer.filter_count(); ++m) {
    if (layer.frozen[m]) continue;
    for (std::size_t j = m * per; j < (m + 1) * per; ++j) w[j] -= scale * grad.d_weights[j];
    if (bias) (*bias)[m] -= scale * grad.d_bias[m];
  }
}

}  // namespace

NetworkGrad NetworkGrad::zeros_like(const Network& net) {
  NetworkGrad g;
  g.layers.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (const auto* c = std::get_if<ConvLayer>(&net.layers[i])) {
      g.layers[i].d_weights = Tensor(c->filters.shape());
      if (c->bias) g.layers[i].d_bias = Tensor(c->bias->shape());
    } else if (const auto* d = std::get_if<DenseLayer>(&net.layers[i])) {
      g.layers[i].d_weights = Tensor(d->weights.shape());
      g.layers[i].d_bias = Tensor(d->bias.shape());
    }
  }
  return g;
}

double accumulate_gradients(const Network& net, const Tensor& input, std::uint32_t label, NetworkGrad& grad) {
  const auto acts = forward_trace(net, input);
  Tensor d;
  const double loss = softmax_cross_entropy(acts.back(), label, &d);
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const Tensor& in = acts[i];
    d = std::visit(
        [&](const auto& l) -> Tensor {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, ConvLayer>) return conv2d_backward(l, in, d, grad.layers[i]);
          else if constexpr (std::is_same_v<T, DenseLayer>) return dense_backward(l, in, d, grad.layers[i]);
          else if constexpr (std::is_same_v<T, LeakyRelu>) return leaky_relu_backward(l, in, d);
          else return global_avg_pool_backward(in, d);
        },
        net.layers[i]);
  }
  return loss;
}

double sgd_step(Network& net, std::span<const Tensor> inputs, std::span<const std::uint32_t> labels, float lr) {
  if (!(lr > 0.0f)) throw std::invalid_argument("learning rate must be positive");
  if (inputs.empty() || inputs.size() != labels.size()) {
    throw std::invalid_argument("batch needs matching, non-empty inputs and labels");
  }
  NetworkGrad grad = NetworkGrad::zeros_like(net);
  double total = 0.0;
  for (std::size_t b = 0; b < inputs.size(); ++b) total += accumulate_gradients(net, inputs[b], labels[b], grad);
  const double loss = total / static_cast<double>(inputs.size());
  if (!std::isfinite(loss)) report_non_finite(net, inputs);

  const float scale = lr / static_cast<float>(inputs.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    visit_filter_layer(net.layers[i], [&](auto& l) { apply_update(l, grad.layers[i], scale); });
  }
  return loss;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(order);
  return order;
}

TrainTrace train_epochs(Network& net, const data::Dataset& dataset, const TrainOptions& options) {
  if (options.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  TrainTrace trace;
  const std::size_t n = dataset.size();
  const std::size_t batches = n / options.batch_size;
  std::vector<Tensor> inputs(options.batch_size);
  std::vector<std::uint32_t> labels(options.batch_size);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto order = epoch_order(n, options.seed, epoch);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t j = 0; j < options.batch_size; ++j) {
        const std::size_t idx = order[b * options.batch_size + j];
        inputs[j] = dataset.sample(idx);
        labels[j] = dataset.labels[idx];
      }
      total += sgd_step(net, inputs, labels, options.lr);
      ++trace.steps;
    }
    trace.epoch_loss.push_back(batches ? total / static_cast<double>(batches) : 0.0);
  }
  return trace;
}

EvalMetrics evaluate(const Network& net, const data::Dataset& dataset) {
  EvalMetrics m;
  if (dataset.size() == 0) return m;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tensor logits = net.forward(dataset.sample(i));
    loss += softmax_cross_entropy(logits, dataset.labels[i], nullptr);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
      if (logits[c] > logits[best]) best = c;
    }
    if (best == dataset.labels[i]) ++correct;
  }
  m.loss = loss / static_cast<double>(dataset.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  return m;
}

}  // namespace gmprune::nn
