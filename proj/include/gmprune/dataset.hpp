#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmprune/tensor.hpp"

namespace gmprune::data {

/// images [n, c, H, W] with pixels in [0, 1]; labels[i] < class_count.
struct Dataset {
  Tensor images;
  std::vector<std::uint32_t> labels;
  std::size_t class_count = 0;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
  Tensor sample(std::size_t i) const;
  Dataset subset(std::span<const std::size_t> indices) const;

  // Throws std::invalid_argument if a structural invariant is violated.
  void validate() const;
};

struct Split {
  Dataset train;
  Dataset validation;
  double fraction = 0.2;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
};

/// Geometric class patterns (filled square, hollow square, diagonal stripe,
/// cross; cycled with a size variant for more than four classes) with random
/// placement and additive uniform noise of amplitude 0.1.
Dataset make_synthetic(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t size);

/// Seeded shuffle, then the last round(0.2 n) indices become validation.
Split split_80_20(const Dataset& d, std::uint64_t seed);

class IdxError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, Truncated, CountMismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

Dataset read_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Writes single-channel datasets; pixels are quantized to round(255 p).
void write_idx(const Dataset& d, const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

}  // namespace gmprune::data
