#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mmsense/dsp.hpp"
#include "mmsense/radar.hpp"
#include "mmsense/scene.hpp"

namespace mmsense {

/// T consecutive ARD frames, layout [frame][range][doppler][channel].
struct ArdSequence {
  int frames = 0;
  int range_bins = 0;
  int doppler_bins = 0;
  int channels = 0;
  std::vector<float> values;

  std::size_t frame_size() const {
    return static_cast<std::size_t>(range_bins) * doppler_bins * channels;
  }
};

/// Stacks frames (all with identical dimensions) into a sequence.
ArdSequence make_sequence(std::span<const ArdFrame> frames);

/// Labelled ARD sequences stored contiguously.
///
/// On disk (little-endian): "ARDS", u32 version, u32 count, u16 T, u16 N,
/// u16 P, u16 C, then per record a u8 label followed by T*N*P*C f32 values.
struct Dataset {
  int frames_per_record = 8;
  int range_bins = 0;
  int doppler_bins = 0;
  int channels = 0;
  std::vector<std::uint8_t> labels;
  std::vector<float> values;

  std::size_t size() const { return labels.size(); }
  std::size_t frame_size() const {
    return static_cast<std::size_t>(range_bins) * doppler_bins * channels;
  }
  std::size_t record_size() const { return frame_size() * frames_per_record; }
  std::span<const float> record(std::size_t i) const {
    return {values.data() + i * record_size(), record_size()};
  }
  bool label(std::size_t i) const { return labels[i] != 0; }
  void append(std::span<const float> record, bool label);
  ArdSequence sequence(std::size_t i) const;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

struct DatasetOptions {
  int frames_per_record = 8;
  SceneKnobs knobs;
  dsp::Options dsp;
  double max_start_s = 0.5;  // each record starts at U[0, max_start_s)
};

/// Labelled sequences from a preset's family. Even-indexed records carry
/// metal (label 1), odd-indexed records do not, so an even count is exactly
/// balanced. Every record is a fresh scene seeded from (seed, index).
Dataset generate_dataset(ScenePreset preset, std::size_t records, const RadarConfig& config,
                         std::uint64_t seed, const DatasetOptions& options = {});

}  // namespace mmsense
