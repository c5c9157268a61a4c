#include "gmprune/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gmprune::nn {

namespace {

enum class Kind : std::uint8_t { Conv = 0, Dense = 1, LeakyRelu = 2, GlobalAvgPool = 3 };

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const char* s, std::size_t n) { out_.insert(out_.end(), s, s + n); }

  void bits(const std::vector<bool>& flags) {
    std::vector<std::uint8_t> packed((flags.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (flags[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    out_.insert(out_.end(), packed.begin(), packed.end());
  }

  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) f32(v);
  }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::vector<bool> bits(std::size_t count) {
    need((count + 7) / 8);
    std::vector<bool> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = (in_[pos_ + i / 8] >> (i % 8)) & 1u;
    pos_ += (count + 7) / 8;
    return out;
  }

  Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) throw CheckpointError("checkpoint: implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = u32();
    const std::size_t n = shape_product(shape);
    need(n * 4);
    std::vector<float> values(n);
    for (auto& v : values) v = f32();
    return Tensor(std::move(shape), std::move(values));
  }

  void expect(const char* s, std::size_t n) {
    need(n);
    if (std::memcmp(in_.data() + pos_, s, n) != 0) throw CheckpointError("checkpoint: bad magic bytes");
    pos_ += n;
  }

  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network& net) {
  Writer w;
  w.bytes("PKCK", 4);
  w.u16(kCheckpointVersion);
  w.u64(net.rng_seed);
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const Layer& layer : net.layers) {
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(Kind::Conv));
      w.u8(static_cast<std::uint8_t>((c->bias ? 1 : 0) | (c->prunable ? 2 : 0)));
      w.u32(static_cast<std::uint32_t>(c->stride));
      w.u32(static_cast<std::uint32_t>(c->padding));
      w.tensor(c->filters);
      if (c->bias) {
        for (float v : c->bias->data()) w.f32(v);
      }
      w.bits(c->mask);
      w.bits(c->frozen);
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(Kind::Dense));
      w.u8(static_cast<std::uint8_t>(1 | (d->prunable ? 2 : 0)));
      w.tensor(d->weights);
      for (float v : d->bias.data()) w.f32(v);
      w.bits(d->mask);
      w.bits(d->frozen);
    } else if (const auto* r = std::get_if<LeakyRelu>(&layer)) {
      w.u8(static_cast<std::uint8_t>(Kind::LeakyRelu));
      w.f32(r->slope);
    } else {
      w.u8(static_cast<std::uint8_t>(Kind::GlobalAvgPool));
    }
  }
  return w.take();
}

Network decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.expect("PKCK", 4);
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Network net(r.u64());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = static_cast<Kind>(r.u8());
    switch (kind) {
      case Kind::Conv: {
        ConvLayer c;
        const std::uint8_t flags = r.u8();
        c.prunable = flags & 2;
        c.stride = r.u32();
        c.padding = r.u32();
        c.filters = r.tensor();
        if (c.filters.rank() != 4) throw CheckpointError("checkpoint: conv filters must be rank 4");
        const std::size_t M = c.filters.dim(0);
        if (flags & 1) {
          std::vector<float> b(M);
          for (auto& v : b) v = r.f32();
          c.bias = Tensor({M}, std::move(b));
        }
        c.mask = r.bits(M);
        c.frozen = r.bits(M);
        net.layers.emplace_back(std::move(c));
        break;
      }
      case Kind::Dense: {
        DenseLayer d;
        const std::uint8_t flags = r.u8();
        d.prunable = flags & 2;
        d.weights = r.tensor();
        if (d.weights.rank() != 2) throw CheckpointError("checkpoint: dense weights must be rank 2");
        const std::size_t M = d.weights.dim(0);
        std::vector<float> b(M);
        for (auto& v : b) v = r.f32();
        d.bias = Tensor({M}, std::move(b));
        d.mask = r.bits(M);
        d.frozen = r.bits(M);
        net.layers.emplace_back(std::move(d));
        break;
      }
      case Kind::LeakyRelu:
        net.layers.emplace_back(LeakyRelu{r.f32()});
        break;
      case Kind::GlobalAvgPool:
        net.layers.emplace_back(GlobalAvgPool{});
        break;
      default:
        throw CheckpointError("checkpoint: unknown layer kind " + std::to_string(static_cast<int>(kind)));
    }
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes after last layer");
  return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace gmprune::nn
