#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "gmprune/dataset.hpp"

namespace gmprune::data {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::Io, "cannot open IDX file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  out.write(bytes, 4);
}

void require(const std::vector<std::uint8_t>& b, std::size_t n, const std::filesystem::path& path) {
  if (b.size() < n) {
    throw IdxError(IdxError::Kind::Truncated, path.string() + ": expected " + std::to_string(n) + " bytes, found " +
                                                  std::to_string(b.size()));
  }
}

}  // namespace

Dataset read_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = slurp(images_path);
  const auto lab = slurp(labels_path);

  require(img, 4, images_path);
  if (be32(img, 0) != kIdxImagesMagic) {
    throw IdxError(IdxError::Kind::BadMagic, images_path.string() + ": bad image magic");
  }
  require(lab, 4, labels_path);
  if (be32(lab, 0) != kIdxLabelsMagic) {
    throw IdxError(IdxError::Kind::BadMagic, labels_path.string() + ": bad label magic");
  }
  require(img, 16, images_path);
  require(lab, 8, labels_path);
  const std::size_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  const std::size_t n_labels = be32(lab, 4);
  if (n != n_labels) {
    throw IdxError(IdxError::Kind::CountMismatch,
                   "image count " + std::to_string(n) + " vs label count " + std::to_string(n_labels));
  }
  require(img, 16 + n * rows * cols, images_path);
  require(lab, 8 + n, labels_path);
  if (n == 0 || rows == 0 || cols == 0) {
    throw IdxError(IdxError::Kind::Truncated, images_path.string() + ": empty image set");
  }

  Dataset d;
  std::vector<float> pixels(n * rows * cols);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<float>(img[16 + i]) / 255.0f;
  d.images = Tensor({n, 1, rows, cols}, std::move(pixels));
  d.labels.resize(n);
  std::uint32_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.class_count = max_label + 1;
  return d;
}

void write_idx(const Dataset& d, const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  if (d.images.rank() != 4 || d.images.dim(1) != 1) {
    throw std::invalid_argument("IDX export supports single-channel [n, 1, H, W] datasets only");
  }
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw IdxError(IdxError::Kind::Io, "cannot open IDX output files");
  const auto n = static_cast<std::uint32_t>(d.size());
  put_be32(img, kIdxImagesMagic);
  put_be32(img, n);
  put_be32(img, static_cast<std::uint32_t>(d.images.dim(2)));
  put_be32(img, static_cast<std::uint32_t>(d.images.dim(3)));
  for (float p : d.images.data()) {
    const long q = std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f);
    img.put(static_cast<char>(static_cast<std::uint8_t>(q)));
  }
  put_be32(lab, kIdxLabelsMagic);
  put_be32(lab, n);
  for (auto l : d.labels) {
    if (l > 255) throw std::invalid_argument("IDX labels must fit in a byte");
    lab.put(static_cast<char>(static_cast<std::uint8_t>(l)));
  }
}

}  // namespace gmprune::data
