#include <algorithm>
#include <cmath>

#include "gmprune/dataset.hpp"
#include "gmprune/rng.hpp"

namespace gmprune::data {

Tensor Dataset::sample(std::size_t i) const {
  const Shape shape = sample_shape();
  const std::size_t per = shape_product(shape);
  const auto begin = images.data().begin() + static_cast<std::ptrdiff_t>(i * per);
  return Tensor(shape, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(per)));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const Shape shape = sample_shape();
  const std::size_t per = shape_product(shape);
  if (indices.empty()) throw std::invalid_argument("subset needs at least one index");
  std::vector<float> pixels;
  pixels.reserve(indices.size() * per);
  Dataset out;
  out.class_count = class_count;
  for (std::size_t idx : indices) {
    if (idx >= size()) throw std::out_of_range("subset index " + std::to_string(idx) + " out of range");
    const auto begin = images.data().begin() + static_cast<std::ptrdiff_t>(idx * per);
    pixels.insert(pixels.end(), begin, begin + static_cast<std::ptrdiff_t>(per));
    out.labels.push_back(labels[idx]);
  }
  out.images = Tensor({indices.size(), shape[0], shape[1], shape[2]}, std::move(pixels));
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4) throw std::invalid_argument("dataset images must be [n, c, H, W]");
  if (images.dim(0) != labels.size()) {
    throw std::invalid_argument("dataset has " + std::to_string(images.dim(0)) + " images but " +
                                std::to_string(labels.size()) + " labels");
  }
  for (auto l : labels) {
    if (l >= class_count) throw std::invalid_argument("label " + std::to_string(l) + " >= class count");
  }
  for (float p : images.data()) {
    if (!(p >= 0.0f && p <= 1.0f)) throw std::invalid_argument("pixel outside [0, 1]");
  }
}

namespace {

enum class Pattern { FilledSquare, HollowSquare, DiagonalStripe, Cross };

bool pattern_pixel(Pattern p, std::size_t dx, std::size_t dy, std::size_t side) {
  const std::size_t thick = std::max<std::size_t>(1, side / 4);
  switch (p) {
    case Pattern::FilledSquare:
      return true;
    case Pattern::HollowSquare:
      return dx < thick || dy < thick || dx >= side - thick || dy >= side - thick;
    case Pattern::DiagonalStripe: {
      const std::size_t diff = dx > dy ? dx - dy : dy - dx;
      return diff < thick;
    }
    case Pattern::Cross: {
      const std::size_t lo = (side - thick) / 2;
      return (dx >= lo && dx < lo + thick) || (dy >= lo && dy < lo + thick);
    }
  }
  return false;
}

}  // namespace

Dataset make_synthetic(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t size) {
  if (classes < 2 || classes > 10) throw std::invalid_argument("synthetic classes must be in 2..10");
  if (size < 8) throw std::invalid_argument("synthetic image size must be at least 8");
  if (n < classes) throw std::invalid_argument("need at least one sample per class (n >= classes)");

  Rng rng(mix_seed(seed, 0x5EED));
  Dataset d;
  d.class_count = classes;
  d.images = Tensor({n, 1, size, size});
  d.labels.resize(n);
  const std::size_t max_jitter = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint32_t>(i % classes);
    d.labels[i] = label;
    const auto pattern = static_cast<Pattern>(label % 4);
    const std::size_t variant = label / 4;
    const std::size_t side = std::max<std::size_t>(
        4, static_cast<std::size_t>(std::lround(static_cast<double>(size) * (0.5 - 0.12 * static_cast<double>(variant)))));
    const std::size_t centered = (size - side) / 2;
    const std::size_t lo = centered > max_jitter ? centered - max_jitter : 0;
    const std::size_t hi = std::min(size - side, centered + max_jitter);
    const std::size_t x0 = lo + rng.below(hi - lo + 1);
    const std::size_t y0 = lo + rng.below(hi - lo + 1);
    const double intensity = rng.uniform(0.6, 1.0);

    float* px = d.images.data().data() + i * size * size;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        double v = 0.0;
        if (x >= x0 && x < x0 + side && y >= y0 && y < y0 + side && pattern_pixel(pattern, x - x0, y - y0, side)) {
          v = intensity;
        }
        v += rng.uniform(-0.1, 0.1);
        px[y * size + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return d;
}

Split split_80_20(const Dataset& d, std::uint64_t seed) {
  const std::size_t n = d.size();
  if (n < 5) throw std::invalid_argument("split needs at least 5 samples, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5B117));
  rng.shuffle(order);

  const auto n_val = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n)));
  Split s;
  s.fraction = 0.2;
  s.validation_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation_indices.begin(), s.validation_indices.end());
  std::sort(s.train_indices.begin(), s.train_indices.end());
  s.train = d.subset(s.train_indices);
  s.validation = d.subset(s.validation_indices);
  return s;
}

}  // namespace gmprune::data
