#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mmsense/transdope.hpp"

namespace mmsense::transdope {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "TDOP", u32 version,
//   config: u16 seq_len, range_bins, doppler_bins, channels, conv_filters,
//           embed_dim, heads, encoder_layers, ffn_kernel, u16 flags (bit 0 =
//           positional encoding), f64 input_scale,
//   u64 parameter count, then every tensor of parameters() in order as f32.
std::vector<std::uint8_t> encode_checkpoint(const TransDopeModel& model);

/// Rebuilds a model. When `expected` is given, a checkpoint whose config
/// differs from it is rejected.
TransDopeModel decode_checkpoint(std::span<const std::uint8_t> bytes,
                                 const std::optional<TransDopeConfig>& expected = std::nullopt);

void save_checkpoint(const std::filesystem::path& path, const TransDopeModel& model);
TransDopeModel load_checkpoint(const std::filesystem::path& path,
                               const std::optional<TransDopeConfig>& expected = std::nullopt);

}  // namespace mmsense::transdope
