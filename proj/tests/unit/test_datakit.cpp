#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gmprune/dataset.hpp"
#include "gmprune/rng.hpp"

using namespace gmprune;
using data::IdxError;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "gmprune_datakit";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Two 2x2 images and their labels, authored byte by byte.
const std::vector<std::uint8_t> kImages{0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                        0,    255,  51,   102,  204, 0, 255, 0};
const std::vector<std::uint8_t> kLabels{0x00, 0x00, 0x08, 0x01, 0, 0, 0, 2, 1, 0};

// Nearest class-mean classifier: fit on one half, score on the other.
double centroid_accuracy(const data::Dataset& d) {
  const std::size_t n = d.size(), half = n / 2, px = d.images.size() / n;
  std::vector<std::vector<double>> mean(d.class_count, std::vector<double>(px, 0.0));
  std::vector<std::size_t> count(d.class_count, 0);
  for (std::size_t i = 0; i < half; ++i) {
    ++count[d.labels[i]];
    for (std::size_t j = 0; j < px; ++j) mean[d.labels[i]][j] += d.images[i * px + j];
  }
  for (std::size_t c = 0; c < d.class_count; ++c) {
    for (auto& v : mean[c]) v /= static_cast<double>(count[c]);
  }
  std::size_t correct = 0;
  for (std::size_t i = half; i < n; ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < d.class_count; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < px; ++j) dist += std::pow(d.images[i * px + j] - mean[c][j], 2);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    correct += best == d.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(n - half);
}

}  // namespace

TEST_CASE("synthetic: one image per class for n == classes") {
  const auto d = data::make_synthetic(1, 4, 4, 16);
  CHECK(d.images.shape() == Shape{4, 1, 16, 16});
  CHECK(std::set<std::uint32_t>(d.labels.begin(), d.labels.end()).size() == 4);
  CHECK(d.class_count == 4);
  d.validate();
}

TEST_CASE("synthetic: same seed gives bit-identical data, different seeds differ") {
  const auto a = data::make_synthetic(3, 50, 6, 12);
  const auto b = data::make_synthetic(3, 50, 6, 12);
  const auto c = data::make_synthetic(4, 50, 6, 12);
  CHECK(a.images.bit_equal(b.images));
  CHECK(a.labels == b.labels);
  CHECK_FALSE(a.images.bit_equal(c.images));
}

TEST_CASE("synthetic: pixels stay in [0, 1] for every class count and size") {
  for (std::size_t classes = 2; classes <= 10; ++classes) {
    for (std::size_t size : {8u, 11u, 16u, 28u}) {
      const auto d = data::make_synthetic(classes * 100 + size, 3 * classes, classes, size);
      for (float p : d.images.data()) {
        REQUIRE(p >= 0.0f);
        REQUIRE(p <= 1.0f);
      }
      d.validate();
    }
  }
}

TEST_CASE("synthetic: argument errors") {
  CHECK_THROWS(data::make_synthetic(1, 3, 4, 16));
  CHECK_THROWS(data::make_synthetic(1, 10, 1, 16));
  CHECK_THROWS(data::make_synthetic(1, 20, 11, 16));
  CHECK_THROWS(data::make_synthetic(1, 10, 4, 7));
}

TEST_CASE("synthetic: nearest-centroid oracle separates the classes") {
  const auto d = data::make_synthetic(7, 2000, 4, 16);
  const double acc = centroid_accuracy(d);
  MESSAGE("nearest-centroid held-out accuracy: " << acc);
  CHECK(acc >= 0.97);
}

TEST_CASE("idx: hand-authored two-image pair") {
  write_bytes(scratch("a.idx3"), kImages);
  write_bytes(scratch("a.idx1"), kLabels);
  const auto d = data::read_idx(scratch("a.idx3"), scratch("a.idx1"));
  CHECK(d.size() == 2);
  CHECK(d.images.shape() == Shape{2, 1, 2, 2});
  CHECK(d.labels == std::vector<std::uint32_t>{1, 0});
  CHECK(d.class_count == 2);
  CHECK(d.images[1] == 1.0f);
  CHECK(d.images[2] == doctest::Approx(0.2));
  CHECK(d.images[4] == doctest::Approx(0.8));
}

TEST_CASE("idx: each failure has its own kind") {
  auto kind_of = [](const fs::path& img, const fs::path& lab) {
    try {
      data::read_idx(img, lab);
    } catch (const IdxError& e) {
      return e.kind();
    }
    FAIL("expected IdxError");
    return IdxError::Kind::Io;
  };
  write_bytes(scratch("ok.idx3"), kImages);
  write_bytes(scratch("ok.idx1"), kLabels);

  auto bad = kLabels;
  bad[3] = 0x03;
  write_bytes(scratch("badmagic.idx1"), bad);
  CHECK(kind_of(scratch("ok.idx3"), scratch("badmagic.idx1")) == IdxError::Kind::BadMagic);
  CHECK(kind_of(scratch("ok.idx1"), scratch("ok.idx1")) == IdxError::Kind::BadMagic);

  auto three = kImages;
  three[7] = 3;
  three.insert(three.end(), {1, 2, 3, 4});
  write_bytes(scratch("three.idx3"), three);
  CHECK(kind_of(scratch("three.idx3"), scratch("ok.idx1")) == IdxError::Kind::CountMismatch);

  const std::vector<std::uint8_t> cut(kImages.begin(), kImages.end() - 1);
  write_bytes(scratch("cut.idx3"), cut);
  CHECK(kind_of(scratch("cut.idx3"), scratch("ok.idx1")) == IdxError::Kind::Truncated);
  const std::vector<std::uint8_t> header_only(kImages.begin(), kImages.begin() + 10);
  write_bytes(scratch("hdr.idx3"), header_only);
  CHECK(kind_of(scratch("hdr.idx3"), scratch("ok.idx1")) == IdxError::Kind::Truncated);

  CHECK(kind_of(scratch("missing.idx3"), scratch("ok.idx1")) == IdxError::Kind::Io);
}

TEST_CASE("idx: write/read round trip is exact after quantization and idempotent") {
  const auto d = data::make_synthetic(5, 30, 5, 10);
  data::write_idx(d, scratch("rt.idx3"), scratch("rt.idx1"));
  const auto once = data::read_idx(scratch("rt.idx3"), scratch("rt.idx1"));
  CHECK(once.labels == d.labels);
  REQUIRE(once.images.shape() == d.images.shape());
  for (std::size_t i = 0; i < d.images.size(); ++i) {
    CHECK(once.images[i] == static_cast<float>(std::lround(d.images[i] * 255.0f)) / 255.0f);
  }
  data::write_idx(once, scratch("rt2.idx3"), scratch("rt2.idx1"));
  const auto twice = data::read_idx(scratch("rt2.idx3"), scratch("rt2.idx1"));
  CHECK(twice.images.bit_equal(once.images));
  CHECK(twice.labels == once.labels);
}

TEST_CASE("split: sizes, partition law and seed dependence") {
  const auto ten = data::make_synthetic(1, 10, 2, 8);
  const auto s = data::split_80_20(ten, 1);
  CHECK(s.train.size() == 8);
  CHECK(s.validation.size() == 2);

  const auto hundred = data::make_synthetic(1, 100, 4, 8);
  const auto a = data::split_80_20(hundred, 1);
  const auto b = data::split_80_20(hundred, 2);
  CHECK(a.validation_indices != b.validation_indices);

  CHECK_THROWS(data::split_80_20(data::make_synthetic(1, 4, 2, 8), 1));
}

TEST_CASE("split: property sweep over n") {
  for (std::size_t n = 5; n <= 120; ++n) {
    const auto d = data::make_synthetic(n, n, 2, 8);
    const auto s = data::split_80_20(d, n * 31);
    const auto again = data::split_80_20(d, n * 31);
    CHECK(s.train_indices == again.train_indices);
    CHECK(s.train.size() + s.validation.size() == n);
    const double frac = static_cast<double>(s.validation.size()) / static_cast<double>(n);
    CHECK(std::fabs(frac - 0.2) <= 1.0 / static_cast<double>(n) + 1e-12);
    std::set<std::size_t> all(s.train_indices.begin(), s.train_indices.end());
    for (auto i : s.validation_indices) CHECK(all.insert(i).second);
    CHECK(all.size() == n);
    CHECK(*all.rbegin() == n - 1);
    for (std::size_t k = 0; k < s.validation_indices.size(); ++k) {
      const auto i = s.validation_indices[k];
      CHECK(s.validation.labels[k] == d.labels[i]);
    }
  }
}
