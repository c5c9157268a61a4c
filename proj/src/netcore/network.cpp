#include <cmath>
#include <stdexcept>

#include "gmprune/network.hpp"
#include "gmprune/rng.hpp"

namespace gmprune::nn {

namespace {

void check_filter_relations(const auto& layer, std::size_t index) {
  const std::size_t M = layer.filter_count();
  if (layer.mask.size() != M || layer.frozen.size() != M) {
    throw std::logic_error("layer " + std::to_string(index) + ": mask/frozen length differs from filter count");
  }
  for (std::size_t m = 0; m < M; ++m) {
    if (layer.frozen[m] && layer.mask[m]) {
      throw std::logic_error("layer " + std::to_string(index) + ": filter " + std::to_string(m) +
                             " is frozen but not pruned");
    }
    if (!layer.frozen[m]) continue;
    for (float w : filter_weights(layer, m)) {
      if (w != 0.0f) {
        throw std::logic_error("layer " + std::to_string(index) + ": frozen filter " + std::to_string(m) +
                               " holds a non-zero weight");
      }
    }
  }
}

bool bits_equal(const std::vector<bool>& a, const std::vector<bool>& b) { return a == b; }

}  // namespace

Network& Network::add(Layer layer) {
  layers.push_back(std::move(layer));
  return *this;
}

void Network::initialize() {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Rng rng(mix_seed(rng_seed, i));
    visit_filter_layer(layers[i], [&](auto& l) {
      const double bound = std::sqrt(6.0 / static_cast<double>(l.filter_size()));
      auto& w = [&]() -> Tensor& {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, ConvLayer>) return l.filters;
        else return l.weights;
      }();
      for (float& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
      if constexpr (std::is_same_v<std::decay_t<decltype(l)>, ConvLayer>) {
        if (l.bias) l.bias->fill(0.0f);
      } else {
        l.bias.fill(0.0f);
      }
      l.mask.assign(l.filter_count(), true);
      l.frozen.assign(l.filter_count(), false);
    });
  }
}

Shape Network::validate(const Shape& input_shape) const {
  Shape shape = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      shape = std::visit(
          [&](const auto& l) -> Shape {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, ConvLayer> || std::is_same_v<T, DenseLayer>) {
              return l.output_shape(shape);
            } else if constexpr (std::is_same_v<T, GlobalAvgPool>) {
              if (shape.size() != 3) throw ShapeError("global average pool needs [c, H, W], got " + shape_string(shape));
              return {shape[0]};
            } else {
              return shape;
            }
          },
          layers[i]);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + layer_kind(layers[i]) + "): " + e.what());
    }
  }
  return shape;
}

Tensor Network::forward(const Tensor& input) const {
  Tensor x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    try {
      x = layer_forward(layers[i], x);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + layer_kind(layers[i]) + "): " + e.what());
    }
  }
  return x;
}

std::vector<std::size_t> Network::prunable_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    visit_filter_layer(layers[i], [&](const auto& l) {
      if (l.prunable) out.push_back(i);
    });
  }
  return out;
}

void Network::check_invariants() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    visit_filter_layer(layers[i], [&](const auto& l) { check_filter_relations(l, i); });
  }
}

bool Network::bit_equal(const Network& other) const {
  if (rng_seed != other.rng_seed || layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& a = layers[i];
    const Layer& b = other.layers[i];
    if (a.index() != b.index()) return false;
    if (const auto* ca = std::get_if<ConvLayer>(&a)) {
      const auto& cb = std::get<ConvLayer>(b);
      if (!ca->filters.bit_equal(cb.filters) || ca->stride != cb.stride || ca->padding != cb.padding ||
          ca->bias.has_value() != cb.bias.has_value() || (ca->bias && !ca->bias->bit_equal(*cb.bias)) ||
          !bits_equal(ca->mask, cb.mask) || !bits_equal(ca->frozen, cb.frozen) || ca->prunable != cb.prunable) {
        return false;
      }
    } else if (const auto* da = std::get_if<DenseLayer>(&a)) {
      const auto& db = std::get<DenseLayer>(b);
      if (!da->weights.bit_equal(db.weights) || !da->bias.bit_equal(db.bias) || !bits_equal(da->mask, db.mask) ||
          !bits_equal(da->frozen, db.frozen) || da->prunable != db.prunable) {
        return false;
      }
    } else if (const auto* ra = std::get_if<LeakyRelu>(&a)) {
      if (ra->slope != std::get<LeakyRelu>(b).slope) return false;
    }
  }
  return true;
}

}  // namespace gmprune::nn
