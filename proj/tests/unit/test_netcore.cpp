#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "gmprune/checkpoint.hpp"
#include "gmprune/dataset.hpp"
#include "gmprune/pipeline.hpp"
#include "gmprune/train.hpp"

using namespace gmprune;
using nn::ConvLayer;
using nn::DenseLayer;

TEST_CASE("tensor rejects zero dimensions and size mismatches") {
  CHECK_THROWS_AS(Tensor({2, 0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("conv: 1x1 identity kernel") {
  auto l = ConvLayer::make(1, 1, 1, 1, 0, false);
  l.filters[0] = 1.0f;
  const Tensor out = nn::conv2d_forward(l, Tensor({1, 1, 1}, {2.0f}));
  CHECK(out.shape() == Shape{1, 1, 1});
  CHECK(out[0] == 2.0f);
}

TEST_CASE("conv: zeroed masked filter yields an all-zero map") {
  Rng rng(5);
  auto l = ConvLayer::make(2, 3, 3, 1, 1);
  l.filters = oracle::random_tensor(rng, l.filters.shape());
  *l.bias = oracle::random_tensor(rng, {3});
  nn::zero_filter(l, 1);
  l.mask[1] = false;
  const Tensor out = nn::conv2d_forward(l, oracle::random_tensor(rng, {2, 5, 5}));
  for (std::size_t i = 25; i < 50; ++i) CHECK(out[i] == 0.0f);
}

TEST_CASE("conv: ones input with a ones kernel gives 4 everywhere") {
  auto l = ConvLayer::make(1, 1, 2, 1, 0, false);
  l.filters.fill(1.0f);
  const Tensor out = nn::conv2d_forward(l, Tensor({1, 3, 3}, 1.0f));
  REQUIRE(out.shape() == Shape{1, 2, 2});
  for (float v : out.data()) CHECK(v == 4.0f);
}

TEST_CASE("conv: channel mismatch names both shapes") {
  auto l = ConvLayer::make(2, 1, 3);
  try {
    nn::conv2d_forward(l, Tensor({3, 5, 5}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1, 2, 3, 3]") != std::string::npos);
    CHECK(msg.find("[3, 5, 5]") != std::string::npos);
  }
}

TEST_CASE("conv: output shape formula and values match a sliding-window oracle") {
  Rng rng(11);
  int cases = 0;
  for (std::size_t H = 1; H <= 7; ++H) {
    for (std::size_t k = 1; k <= 3; ++k) {
      for (std::size_t s = 1; s <= 3; ++s) {
        for (std::size_t p = 0; p <= 2; ++p) {
          const std::size_t W = 1 + rng.below(7);
          auto l = ConvLayer::make(2, 2, k, s, p);
          if (H + 2 * p < k || W + 2 * p < k) {
            CHECK_THROWS_AS(l.output_shape({2, H, W}), ShapeError);
            continue;
          }
          l.filters = oracle::random_tensor(rng, l.filters.shape());
          *l.bias = oracle::random_tensor(rng, {2});
          const Tensor x = oracle::random_tensor(rng, {2, H, W});
          const Tensor out = nn::conv2d_forward(l, x);
          CHECK(out.shape() == Shape{2, (H + 2 * p - k) / s + 1, (W + 2 * p - k) / s + 1});
          const Tensor ref = oracle::naive_conv(l, x);
          REQUIRE(ref.shape() == out.shape());
          for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-6));
          ++cases;
        }
      }
    }
  }
  CHECK(cases > 100);
}

TEST_CASE("dense: identity, masked rows and a hand product") {
  auto id = DenseLayer::make(3, 3);
  for (std::size_t i = 0; i < 3; ++i) id.weights[i * 3 + i] = 1.0f;
  CHECK(nn::dense_forward(id, Tensor({3}, {1, 2, 3})).values() == std::vector<float>{1, 2, 3});

  Rng rng(3);
  auto masked = DenseLayer::make(4, 3);
  masked.weights = oracle::random_tensor(rng, {3, 4});
  masked.bias = oracle::random_tensor(rng, {3});
  for (std::size_t m = 0; m < 3; ++m) {
    nn::zero_filter(masked, m);
    masked.mask[m] = false;
  }
  CHECK(nn::dense_forward(masked, oracle::random_tensor(rng, {4})).values() == std::vector<float>{0, 0, 0});

  auto l = DenseLayer::make(2, 2);
  l.weights = Tensor({2, 2}, {1, 1, 2, 0});
  l.bias = Tensor({2}, {0.5f, -0.5f});
  const Tensor y = nn::dense_forward(l, Tensor({2}, {1, 1}));
  CHECK(y[0] == 2.5f);
  CHECK(y[1] == 1.5f);
  CHECK_THROWS_AS(nn::dense_forward(l, Tensor({3}, {1, 1, 1})), ShapeError);
}

TEST_CASE("cross-entropy values") {
  const std::vector<std::uint32_t> zero{0}, one{1};
  CHECK(nn::cross_entropy_loss(Tensor({1, 2}, {1000.0f, 0.0f}), zero) < 1e-3);
  CHECK(nn::cross_entropy_loss(Tensor({1, 4}, {0.3f, 0.3f, 0.3f, 0.3f}), zero) == doctest::Approx(std::log(4.0)));
  CHECK(nn::cross_entropy_loss(Tensor({1, 2}, {1.0f, 2.0f}), one) == doctest::Approx(0.31326).epsilon(1e-5));
  const std::vector<std::uint32_t> bad{2};
  CHECK_THROWS(nn::cross_entropy_loss(Tensor({1, 2}, {1.0f, 2.0f}), bad));
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const Tensor logits = oracle::random_tensor(rng, {3, 5}, -20, 20);
    const std::vector<std::uint32_t> labels{0, 3, 4};
    CHECK(nn::cross_entropy_loss(logits, labels) >= 0.0);
  }
}

TEST_CASE("gradients match central differences on random instances") {
  Rng rng(2024);
  for (int t = 0; t < 20; ++t) {
    CHECK(gradcheck::conv_trial(rng) < 1e-3);
    CHECK(gradcheck::dense_trial(rng) < 1e-3);
    CHECK(gradcheck::leaky_relu_trial(rng) < 1e-3);
    CHECK(gradcheck::avg_pool_trial(rng) < 1e-3);
    CHECK(gradcheck::cross_entropy_trial(rng) < 1e-3);
    CHECK(gradcheck::network_trial(rng) < 1e-3);
  }
}

TEST_CASE("two-point dense problem: gradient agrees with differences to 1e-4") {
  nn::Network net(8);
  net.add(DenseLayer::make(2, 2));
  net.initialize();
  const std::vector<Tensor> xs{Tensor({2}, {1.0f, 0.0f}), Tensor({2}, {0.0f, 1.0f})};
  const std::vector<std::uint32_t> ys{0, 1};
  auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < 2; ++i) s += nn::softmax_cross_entropy(net.forward(xs[i]), ys[i], nullptr);
    return s / 2.0;
  };
  for (int round = 0; round < 5; ++round) {
    auto grad = nn::NetworkGrad::zeros_like(net);
    for (std::size_t i = 0; i < 2; ++i) nn::accumulate_gradients(net, xs[i], ys[i], grad);
    std::vector<double> analytic;
    for (float g : grad.layers[0].d_weights.data()) analytic.push_back(g / 2.0);
    auto& layer = std::get<DenseLayer>(net.layers[0]);
    CHECK(oracle::relative_error(analytic, oracle::central_difference(layer.weights.data(), loss)) < 1e-4);
    for (int s = 0; s < 10; ++s) nn::sgd_step(net, xs, ys, 0.1f);
  }
}

TEST_CASE("sgd: a batch with cancelling gradients leaves weights unchanged") {
  nn::Network net(1);
  net.add(DenseLayer::make(1, 2));
  const nn::Network before = net;
  const std::vector<Tensor> inputs{Tensor({1}, {1.0f}), Tensor({1}, {1.0f})};
  const std::vector<std::uint32_t> labels{0, 1};
  nn::sgd_step(net, inputs, labels, 0.5f);
  CHECK(net.bit_equal(before));
  CHECK_THROWS(nn::sgd_step(net, inputs, labels, 0.0f));
}

TEST_CASE("sgd: a fully frozen layer is bit-identical after a step") {
  auto net = pipeline::build_toy_net(3);
  auto& conv = std::get<ConvLayer>(net.layers[2]);
  for (std::size_t m = 0; m < conv.filter_count(); ++m) {
    nn::zero_filter(conv, m);
    conv.mask[m] = false;
    conv.frozen[m] = true;
  }
  const ConvLayer before = conv;
  const auto d = data::make_synthetic(4, 8, 4, 16);
  std::vector<Tensor> xs;
  for (std::size_t i = 0; i < d.size(); ++i) xs.push_back(d.sample(i));
  for (int s = 0; s < 3; ++s) nn::sgd_step(net, xs, d.labels, 0.05f);
  const auto& after = std::get<ConvLayer>(net.layers[2]);
  CHECK(after.filters.bit_equal(before.filters));
  CHECK(after.bias->bit_equal(*before.bias));
  net.check_invariants();
}

TEST_CASE("sgd: non-finite activations name the first offending layer") {
  nn::Network net(2);
  net.add(DenseLayer::make(2, 2));
  net.add(nn::LeakyRelu{});
  net.add(DenseLayer::make(2, 2));
  net.initialize();
  std::get<DenseLayer>(net.layers[2]).weights[0] = 3e38f;
  const std::vector<Tensor> xs{Tensor({2}, {1000.0f, 1000.0f})};
  const std::vector<std::uint32_t> ys{0};
  std::get<DenseLayer>(net.layers[0]).weights.fill(100.0f);
  try {
    nn::sgd_step(net, xs, ys, 0.1f);
    FAIL("expected NonFiniteError");
  } catch (const nn::NonFiniteError& e) {
    CHECK(e.layer() == 2);
    CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
  }
}

TEST_CASE("sgd: a single dense layer on two separable points decreases loss monotonically at first") {
  nn::Network net(8);
  net.add(DenseLayer::make(2, 2));
  net.initialize();
  const std::vector<Tensor> xs{Tensor({2}, {1.0f, 0.0f}), Tensor({2}, {0.0f, 1.0f})};
  const std::vector<std::uint32_t> ys{0, 1};
  std::vector<double> losses;
  for (int s = 0; s < 200; ++s) losses.push_back(nn::sgd_step(net, xs, ys, 0.1f));
  for (int s = 1; s < 10; ++s) CHECK(losses[s] < losses[s - 1]);
  CHECK(losses.back() < losses.front());
}

TEST_CASE("train_epochs: zero epochs is the identity, step counting drops partial batches") {
  auto net = pipeline::build_toy_net(5);
  const nn::Network before = net;
  const auto d = data::make_synthetic(6, 10, 4, 16);
  auto trace = nn::train_epochs(net, d, {0, 0.05f, 5, 1});
  CHECK(net.bit_equal(before));
  CHECK(trace.epoch_loss.empty());
  trace = nn::train_epochs(net, d, {1, 0.05f, 5, 1});
  CHECK(trace.steps == 2);
  CHECK(trace.epoch_loss.size() == 1);
  trace = nn::train_epochs(net, d, {3, 0.05f, 4, 1});
  CHECK(trace.steps == 6);
  CHECK(trace.epoch_loss.size() == 3);
}

TEST_CASE("training is deterministic and keeps frozen filters at zero") {
  const auto d = data::make_synthetic(12, 64, 4, 16);
  auto a = pipeline::build_toy_net(21);
  auto& conv = std::get<ConvLayer>(a.layers[4]);
  for (std::size_t m : {0u, 5u, 9u}) {
    nn::zero_filter(conv, m);
    conv.mask[m] = false;
    conv.frozen[m] = true;
  }
  auto b = a;
  nn::train_epochs(a, d, {3, 0.05f, 16, 99});
  nn::train_epochs(b, d, {3, 0.05f, 16, 99});
  CHECK(a.bit_equal(b));
  a.check_invariants();
  const auto& c = std::get<ConvLayer>(a.layers[4]);
  for (std::size_t m : {0u, 5u, 9u}) {
    for (float w : nn::filter_weights(c, m)) CHECK(w == 0.0f);
    CHECK((*c.bias)[m] == 0.0f);
  }
}

TEST_CASE("toy CNN reaches high training accuracy on the synthetic task in 30 epochs") {
  const auto d = data::make_synthetic(1, 1000, 4, 16);
  auto net = pipeline::build_toy_net(1);
  nn::train_epochs(net, d, {30, 0.05f, 32, 1});
  const auto m = nn::evaluate(net, d);
  MESSAGE("training accuracy after 30 epochs: " << m.accuracy);
  CHECK(m.accuracy >= 0.95);
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto net = pipeline::build_toy_net(17, 5, pipeline::Architecture::Conv9);
  auto& conv = std::get<ConvLayer>(net.layers[0]);
  nn::zero_filter(conv, 3);
  conv.mask[3] = false;
  conv.frozen[3] = true;
  std::get<ConvLayer>(net.layers[2]).mask[1] = false;
  const auto bytes = nn::encode_checkpoint(net);
  const auto back = nn::decode_checkpoint(bytes);
  CHECK(back.bit_equal(net));
  CHECK(nn::encode_checkpoint(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "gmprune_roundtrip.pkck";
  nn::save_checkpoint(net, path);
  CHECK(nn::load_checkpoint(path).bit_equal(net));
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint byte layout of a tiny network") {
  nn::Network net(0x0102030405060708ull);
  auto d = DenseLayer::make(2, 1);
  d.weights = Tensor({1, 2}, {1.0f, -2.0f});
  d.bias = Tensor({1}, {0.5f});
  d.prunable = false;
  net.add(d);
  net.add(nn::LeakyRelu{0.25f});
  const std::vector<std::uint8_t> expected{
      'P', 'K', 'C', 'K', 1, 0,                    // magic, version 1
      8, 7, 6, 5, 4, 3, 2, 1,                      // seed
      2, 0, 0, 0,                                  // layer count
      1, 1,                                        // dense, bias present, not prunable
      2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0,          // rank 2, [1, 2]
      0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0,  // 1.0, -2.0
      0x00, 0x00, 0x00, 0x3f,                      // bias 0.5
      0x01, 0x00,                                  // mask, frozen
      2, 0x00, 0x00, 0x80, 0x3e};                  // leaky relu 0.25
  CHECK(nn::encode_checkpoint(net) == expected);
  CHECK(nn::decode_checkpoint(expected).bit_equal(net));
}

TEST_CASE("checkpoint decoding rejects corrupt input") {
  const auto bytes = nn::encode_checkpoint(pipeline::build_toy_net(1));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(nn::decode_checkpoint(bad_magic), nn::CheckpointError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(nn::decode_checkpoint(bad_version), nn::CheckpointError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(nn::decode_checkpoint(truncated), nn::CheckpointError);
  }
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(nn::decode_checkpoint(trailing), nn::CheckpointError);
  CHECK_THROWS_AS(nn::load_checkpoint("/nonexistent/dir/x.pkck"), nn::CheckpointError);
}

TEST_CASE("network validation names the layer that does not compose") {
  nn::Network net;
  net.add(ConvLayer::make(1, 4, 3, 1, 1));
  net.add(ConvLayer::make(3, 4, 3, 1, 1));
  try {
    net.validate({1, 8, 8});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}
