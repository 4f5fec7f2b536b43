#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mmsense/error.hpp"
#include "mmsense/radar.hpp"

namespace mmsense::wire {

// Frame layout, all integers little-endian:
//   0  magic "MMSE"      4 bytes
//   4  version           u16
//   6  kind              u16
//   8  burst_id          u32
//  12  timestamp_us      u64
//  20  payload_len       u32
//  24  payload           payload_len bytes
//  ..  crc32             u32 over header + payload
inline constexpr std::string_view kMagic = "MMSE";
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 24;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::uint32_t kMaxPayload = 64u << 20;

enum class FrameKind : std::uint16_t { burst = 1, detection = 2, config = 3 };

struct Frame {
  std::uint16_t version = kVersion;
  FrameKind kind = FrameKind::burst;
  std::uint32_t burst_id = 0;
  std::uint64_t timestamp_us = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

enum class DecodeErrorCode { bad_magic, bad_crc, truncated, unsupported_version, unknown_kind, bad_length };

std::string_view to_string(DecodeErrorCode code);

class DecodeError : public Error {
 public:
  DecodeError(DecodeErrorCode code, const std::string& what) : Error(what), code_(code) {}
  explicit DecodeError(const std::string& what) : DecodeError(DecodeErrorCode::truncated, what) {}
  DecodeErrorCode code() const { return code_; }

 private:
  DecodeErrorCode code_;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_frame(const Frame& frame);
void encode_frame_into(const Frame& frame, std::vector<std::uint8_t>& out);

/// Decodes exactly one frame occupying all of `bytes`.
Frame decode_frame(std::span<const std::uint8_t> bytes);

/// Classification emitted for a window of bursts.
struct Detection {
  std::uint32_t first_burst_id = 0;
  std::uint32_t last_burst_id = 0;
  double probability = 0.0;
  bool decision = false;
  std::uint64_t inference_latency_us = 0;
};

/// Burst payload: P*N*C complex samples in [chirp][sample][channel] order,
/// each as interleaved f32 (I, Q).
Frame make_burst_frame(const RawBurst& burst);
RawBurst burst_from_frame(const Frame& frame, const RadarConfig& config);

/// Config payload: u16 P, u16 N, u16 C, u16 reserved, f64 prf_hz,
/// f64 burst_rate_hz, f64 center_freq_hz, f64 bandwidth_hz. An empty payload
/// means the default configuration.
Frame make_config_frame(const RadarConfig& config);
RadarConfig config_from_frame(const Frame& frame);

/// Detection payload: u32 first_burst_id, f64 probability, u8 decision,
/// u64 latency_us. burst_id in the header carries the last burst.
Frame make_detection_frame(const Detection& detection);
Detection detection_from_frame(const Frame& frame);

/// Incremental parser for a byte stream of frames.
///
/// Corrupt frames are skipped and counted. A bad magic makes the parser scan
/// forward for the next "MMSE"; a bad CRC or an unsupported version skips the
/// whole frame using its declared length.
class StreamParser {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  /// Next complete valid frame, or nullopt if more bytes are needed.
  std::optional<Frame> next();

  std::uint64_t crc_errors() const { return crc_errors_; }
  std::uint64_t resync_bytes() const { return resync_bytes_; }
  std::uint64_t rejected_frames() const { return rejected_frames_; }
  std::size_t buffered() const { return buffer_.size() - start_; }

 private:
  void compact();

  std::vector<std::uint8_t> buffer_;
  std::size_t start_ = 0;
  std::uint64_t crc_errors_ = 0;
  std::uint64_t resync_bytes_ = 0;
  std::uint64_t rejected_frames_ = 0;
};

}  // namespace mmsense::wire
