#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gmprune/network.hpp"

namespace gmprune::nn {

namespace {

// Output positions [lo, hi) whose input coordinate o*stride + k - pad lies in [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t in_extent, std::size_t stride,
                                                std::size_t k, std::size_t pad) {
  const long long s = static_cast<long long>(stride);
  const long long offset = static_cast<long long>(k) - static_cast<long long>(pad);
  long long lo = 0;
  if (offset < 0) lo = (-offset + s - 1) / s;
  long long hi = (static_cast<long long>(in_extent) - 1 - offset) / s + 1;
  if (static_cast<long long>(in_extent) - 1 - offset < 0) hi = 0;
  hi = std::min<long long>(hi, static_cast<long long>(out_extent));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

ConvLayer ConvLayer::make(std::size_t in_channels, std::size_t filter_count, std::size_t kernel, std::size_t stride,
                          std::size_t padding, bool with_bias) {
  if (stride == 0) throw ShapeError("conv stride must be positive");
  ConvLayer layer;
  layer.filters = Tensor({filter_count, in_channels, kernel, kernel});
  if (with_bias) layer.bias = Tensor({filter_count});
  layer.stride = stride;
  layer.padding = padding;
  layer.mask.assign(filter_count, true);
  layer.frozen.assign(filter_count, false);
  return layer;
}

Shape ConvLayer::output_shape(const Shape& input) const {
  if (input.size() != 3 || input[0] != in_channels()) {
    throw ShapeError("conv layer expecting [" + std::to_string(in_channels()) + ", H, W] cannot take input " +
                     shape_string(input) + " (filters " + shape_string(filters.shape()) + ")");
  }
  const std::size_t k = kernel_size();
  const std::size_t h = input[1] + 2 * padding;
  const std::size_t w = input[2] + 2 * padding;
  if (h < k || w < k) {
    throw ShapeError("input " + shape_string(input) + " with padding " + std::to_string(padding) +
                     " is smaller than kernel " + shape_string(filters.shape()));
  }
  return {filter_count(), (h - k) / stride + 1, (w - k) / stride + 1};
}

DenseLayer DenseLayer::make(std::size_t in_features, std::size_t out_features) {
  DenseLayer layer;
  layer.weights = Tensor({out_features, in_features});
  layer.bias = Tensor({out_features});
  layer.mask.assign(out_features, true);
  layer.frozen.assign(out_features, false);
  return layer;
}

Shape DenseLayer::output_shape(const Shape& input) const {
  if (shape_product(input) != in_features()) {
    throw ShapeError("dense layer " + shape_string(weights.shape()) + " cannot take input " + shape_string(input));
  }
  return {filter_count()};
}

std::string layer_kind(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, ConvLayer>) return "conv";
        else if constexpr (std::is_same_v<T, DenseLayer>) return "dense";
        else if constexpr (std::is_same_v<T, LeakyRelu>) return "leaky_relu";
        else return "global_avg_pool";
      },
      layer);
}

Tensor conv2d_forward(const ConvLayer& layer, const Tensor& input) {
  const Shape out_shape = layer.output_shape(input.shape());
  const std::size_t M = out_shape[0], OH = out_shape[1], OW = out_shape[2];
  const std::size_t C = layer.in_channels(), K = layer.kernel_size();
  const std::size_t H = input.dim(1), W = input.dim(2);
  const std::size_t s = layer.stride, p = layer.padding;

  Tensor out(out_shape);
  std::vector<double> acc(OH * OW);
  const float* x = input.data().data();
  for (std::size_t m = 0; m < M; ++m) {
    if (layer.frozen[m]) continue;  // weights and bias are exactly zero
    std::fill(acc.begin(), acc.end(), layer.bias ? static_cast<double>((*layer.bias)[m]) : 0.0);
    const float* wm = layer.filters.data().data() + m * C * K * K;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t ky = 0; ky < K; ++ky) {
        const auto [oy0, oy1] = valid_range(OH, H, s, ky, p);
        for (std::size_t kx = 0; kx < K; ++kx) {
          const double w = wm[(c * K + ky) * K + kx];
          if (w == 0.0) continue;
          const auto [ox0, ox1] = valid_range(OW, W, s, kx, p);
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const float* row = x + (c * H + (oy * s + ky - p)) * W;
            double* dst = acc.data() + oy * OW;
            for (std::size_t ox = ox0; ox < ox1; ++ox) dst[ox] += w * row[ox * s + kx - p];
          }
        }
      }
    }
    float* o = out.data().data() + m * OH * OW;
    for (std::size_t i = 0; i < OH * OW; ++i) o[i] = static_cast<float>(acc[i]);
  }
  return out;
}

Tensor conv2d_backward(const ConvLayer& layer, const Tensor& input, const Tensor& d_output, LayerGrad& grad) {
  const std::size_t M = layer.filter_count(), C = layer.in_channels(), K = layer.kernel_size();
  const std::size_t H = input.dim(1), W = input.dim(2);
  const std::size_t OH = d_output.dim(1), OW = d_output.dim(2);
  const std::size_t s = layer.stride, p = layer.padding;

  std::vector<double> d_in(C * H * W, 0.0);
  const float* x = input.data().data();
  for (std::size_t m = 0; m < M; ++m) {
    if (layer.frozen[m]) continue;
    const float* g = d_output.data().data() + m * OH * OW;
    const float* wm = layer.filters.data().data() + m * C * K * K;
    float* dw = grad.d_weights.data().data() + m * C * K * K;
    if (layer.bias) {
      double sum = 0.0;
      for (std::size_t i = 0; i < OH * OW; ++i) sum += g[i];
      grad.d_bias[m] += static_cast<float>(sum);
    }
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t ky = 0; ky < K; ++ky) {
        const auto [oy0, oy1] = valid_range(OH, H, s, ky, p);
        for (std::size_t kx = 0; kx < K; ++kx) {
          const auto [ox0, ox1] = valid_range(OW, W, s, kx, p);
          const double w = wm[(c * K + ky) * K + kx];
          double sum = 0.0;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const std::size_t iy = oy * s + ky - p;
            const float* row = x + (c * H + iy) * W;
            double* drow = d_in.data() + (c * H + iy) * W;
            const float* grow = g + oy * OW;
            for (std::size_t ox = ox0; ox < ox1; ++ox) {
              const std::size_t ix = ox * s + kx - p;
              sum += static_cast<double>(grow[ox]) * row[ix];
              drow[ix] += w * grow[ox];
            }
          }
          dw[(c * K + ky) * K + kx] += static_cast<float>(sum);
        }
      }
    }
  }
  Tensor d_input(input.shape());
  for (std::size_t i = 0; i < d_in.size(); ++i) d_input[i] = static_cast<float>(d_in[i]);
  return d_input;
}

Tensor dense_forward(const DenseLayer& layer, const Tensor& input) {
  const Shape out_shape = layer.output_shape(input.shape());
  const std::size_t in = layer.in_features();
  Tensor out(out_shape);
  for (std::size_t r = 0; r < layer.filter_count(); ++r) {
    if (layer.frozen[r]) continue;
    double acc = layer.bias[r];
    const float* w = layer.weights.data().data() + r * in;
    for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(w[i]) * input[i];
    out[r] = static_cast<float>(acc);
  }
  return out;
}

Tensor dense_backward(const DenseLayer& layer, const Tensor& input, const Tensor& d_output, LayerGrad& grad) {
  const std::size_t in = layer.in_features();
  std::vector<double> d_in(in, 0.0);
  for (std::size_t r = 0; r < layer.filter_count(); ++r) {
    if (layer.frozen[r]) continue;
    const double g = d_output[r];
    grad.d_bias[r] += static_cast<float>(g);
    const float* w = layer.weights.data().data() + r * in;
    float* dw = grad.d_weights.data().data() + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      dw[i] += static_cast<float>(g * input[i]);
      d_in[i] += g * w[i];
    }
  }
  Tensor d_input(input.shape());
  for (std::size_t i = 0; i < in; ++i) d_input[i] = static_cast<float>(d_in[i]);
  return d_input;
}

Tensor leaky_relu_forward(const LeakyRelu& layer, const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) {
    if (v < 0.0f) v *= layer.slope;
  }
  return out;
}

// The derivative at exactly zero is taken as 1 so that the gradient reaches
// zeroed filters, whose pre-activations are exactly 0.
Tensor leaky_relu_backward(const LeakyRelu& layer, const Tensor& input, const Tensor& d_output) {
  Tensor d_input = d_output;
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input[i] < 0.0f) d_input[i] *= layer.slope;
  }
  return d_input;
}

Tensor global_avg_pool_forward(const Tensor& input) {
  if (input.rank() != 3) throw ShapeError("global average pool expects [c, H, W], got " + shape_string(input.shape()));
  const std::size_t C = input.dim(0), HW = input.dim(1) * input.dim(2);
  Tensor out({C});
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < HW; ++i) sum += input[c * HW + i];
    out[c] = static_cast<float>(sum / static_cast<double>(HW));
  }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& input, const Tensor& d_output) {
  const std::size_t C = input.dim(0), HW = input.dim(1) * input.dim(2);
  Tensor d_input(input.shape());
  for (std::size_t c = 0; c < C; ++c) {
    const float g = static_cast<float>(static_cast<double>(d_output[c]) / static_cast<double>(HW));
    for (std::size_t i = 0; i < HW; ++i) d_input[c * HW + i] = g;
  }
  return d_input;
}

Tensor layer_forward(const Layer& layer, const Tensor& input) {
  return std::visit(
      [&](const auto& l) -> Tensor {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, ConvLayer>) return conv2d_forward(l, input);
        else if constexpr (std::is_same_v<T, DenseLayer>) return dense_forward(l, input);
        else if constexpr (std::is_same_v<T, LeakyRelu>) return leaky_relu_forward(l, input);
        else return global_avg_pool_forward(input);
      },
      layer);
}

double softmax_cross_entropy(const Tensor& logits, std::uint32_t label, Tensor* d_logits) {
  const std::size_t n = logits.size();
  if (label >= n) {
    throw std::out_of_range("label " + std::to_string(label) + " out of range for " + std::to_string(n) + " classes");
  }
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) max_logit = std::max(max_logit, static_cast<double>(logits[i]));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits[i]) - max_logit);
  const double log_z = max_logit + std::log(sum);
  if (d_logits) {
    *d_logits = Tensor(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::exp(static_cast<double>(logits[i]) - log_z);
      (*d_logits)[i] = static_cast<float>(p - (i == label ? 1.0 : 0.0));
    }
  }
  return log_z - static_cast<double>(logits[label]);
}

double cross_entropy_loss(const Tensor& logits, std::span<const std::uint32_t> labels) {
  if (logits.rank() != 2) throw ShapeError("logits must be [batch, classes], got " + shape_string(logits.shape()));
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("logits batch " + std::to_string(batch) + " vs " + std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor row({classes}, std::vector<float>(logits.data().begin() + b * classes,
                                             logits.data().begin() + (b + 1) * classes));
    total += softmax_cross_entropy(row, labels[b], nullptr);
  }
  return std::max(0.0, total / static_cast<double>(batch));
}

}  // namespace gmprune::nn
