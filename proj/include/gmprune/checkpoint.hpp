#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "gmprune/network.hpp"

namespace gmprune::nn {

// Binary layout (all integers little-endian):
//   "PKCK" | u16 version | u64 rng_seed | u32 layer count | layer records
// Layer record:
//   u8 kind (0 conv, 1 dense, 2 leaky_relu, 3 global_avg_pool)
//   conv/dense: u8 flags (bit0 bias present, bit1 prunable)
//               conv only: u32 stride, u32 padding
//               u32 dim count, u32 dims..., f32 weights..., f32 bias... (if present),
//               mask bits, frozen bits (ceil(M/8) bytes each, LSB-first)
//   leaky_relu: f32 slope
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_checkpoint(const Network& net);
Network decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace gmprune::nn
