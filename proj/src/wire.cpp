#include "mmsense/wire.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "mmsense/detail/bytes.hpp"

namespace mmsense::wire {

namespace {

using Reader = detail::ByteReader<DecodeError>;

struct Header {
  std::uint16_t version;
  std::uint16_t kind;
  std::uint32_t burst_id;
  std::uint64_t timestamp_us;
  std::uint32_t payload_len;
};

bool has_magic(const std::uint8_t* p) { return std::memcmp(p, kMagic.data(), 4) == 0; }

Header read_header(const std::uint8_t* p) {
  Reader r({p, kHeaderSize});
  r.take(4);
  Header h{};
  h.version = r.get<std::uint16_t>();
  h.kind = r.get<std::uint16_t>();
  h.burst_id = r.get<std::uint32_t>();
  h.timestamp_us = r.get<std::uint64_t>();
  h.payload_len = r.get<std::uint32_t>();
  return h;
}

bool known_kind(std::uint16_t kind) { return kind >= 1 && kind <= 3; }

void expect_kind(const Frame& frame, FrameKind kind, const char* what) {
  if (frame.kind != kind) throw Error(std::string("frame is not a ") + what + " frame");
}

}  // namespace

std::string_view to_string(DecodeErrorCode code) {
  switch (code) {
    case DecodeErrorCode::bad_magic: return "bad magic";
    case DecodeErrorCode::bad_crc: return "bad crc";
    case DecodeErrorCode::truncated: return "truncated";
    case DecodeErrorCode::unsupported_version: return "unsupported version";
    case DecodeErrorCode::unknown_kind: return "unknown kind";
    case DecodeErrorCode::bad_length: return "bad length";
  }
  return "unknown";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; frames are far below 4 GiB.
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

void encode_frame_into(const Frame& frame, std::vector<std::uint8_t>& out) {
  if (frame.payload.size() > kMaxPayload) throw Error("payload exceeds maximum frame size");
  const std::size_t start = out.size();
  out.reserve(start + kHeaderSize + frame.payload.size() + kCrcSize);
  detail::ByteWriter w(out);
  w.put_tag(kMagic);
  w.put<std::uint16_t>(frame.version);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(frame.kind));
  w.put<std::uint32_t>(frame.burst_id);
  w.put<std::uint64_t>(frame.timestamp_us);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(frame.payload.size()));
  w.put_bytes(frame.payload);
  w.put<std::uint32_t>(crc32({out.data() + start, out.size() - start}));
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  std::vector<std::uint8_t> out;
  encode_frame_into(frame, out);
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw DecodeError(DecodeErrorCode::truncated, "frame shorter than magic");
  if (!has_magic(bytes.data())) throw DecodeError(DecodeErrorCode::bad_magic, "bad frame magic");
  if (bytes.size() < kHeaderSize + kCrcSize) {
    throw DecodeError(DecodeErrorCode::truncated, "frame shorter than header");
  }
  const Header h = read_header(bytes.data());
  if (h.version != kVersion) {
    throw DecodeError(DecodeErrorCode::unsupported_version,
                      "unsupported frame version " + std::to_string(h.version));
  }
  const std::size_t total = kHeaderSize + std::size_t{h.payload_len} + kCrcSize;
  if (bytes.size() < total) {
    throw DecodeError(DecodeErrorCode::truncated, "frame truncated: have " +
                                                      std::to_string(bytes.size()) + " of " +
                                                      std::to_string(total) + " bytes");
  }
  if (bytes.size() > total) {
    throw DecodeError(DecodeErrorCode::bad_length, "trailing bytes after frame");
  }
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + total - kCrcSize, kCrcSize);
  if (stored != crc32(bytes.first(total - kCrcSize))) {
    throw DecodeError(DecodeErrorCode::bad_crc, "frame crc mismatch");
  }
  if (!known_kind(h.kind)) {
    throw DecodeError(DecodeErrorCode::unknown_kind, "unknown frame kind " + std::to_string(h.kind));
  }
  Frame f;
  f.version = h.version;
  f.kind = static_cast<FrameKind>(h.kind);
  f.burst_id = h.burst_id;
  f.timestamp_us = h.timestamp_us;
  f.payload.assign(bytes.begin() + kHeaderSize, bytes.begin() + kHeaderSize + h.payload_len);
  return f;
}

Frame make_burst_frame(const RawBurst& burst) {
  Frame f;
  f.kind = FrameKind::burst;
  f.burst_id = burst.burst_id;
  f.timestamp_us = burst.timestamp_us;
  f.payload.resize(burst.data.size() * 2 * sizeof(float));
  auto* out = f.payload.data();
  for (const auto& v : burst.data) {
    const float iq[2] = {static_cast<float>(v.real()), static_cast<float>(v.imag())};
    std::memcpy(out, iq, sizeof iq);
    out += sizeof iq;
  }
  return f;
}

RawBurst burst_from_frame(const Frame& frame, const RadarConfig& config) {
  expect_kind(frame, FrameKind::burst, "burst");
  RawBurst burst(config);
  if (frame.payload.size() != burst.data.size() * 2 * sizeof(float)) {
    std::ostringstream os;
    os << "burst payload is " << frame.payload.size() << " bytes, config expects "
       << burst.data.size() * 2 * sizeof(float);
    throw DecodeError(DecodeErrorCode::bad_length, os.str());
  }
  burst.burst_id = frame.burst_id;
  burst.timestamp_us = frame.timestamp_us;
  const auto* in = frame.payload.data();
  for (auto& v : burst.data) {
    float iq[2];
    std::memcpy(iq, in, sizeof iq);
    in += sizeof iq;
    v = Complex(iq[0], iq[1]);
  }
  return burst;
}

Frame make_config_frame(const RadarConfig& config) {
  Frame f;
  f.kind = FrameKind::config;
  detail::ByteWriter w(f.payload);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(config.chirps()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(config.samples()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(config.channels()));
  w.put<std::uint16_t>(0);
  w.put<double>(config.prf_hz());
  w.put<double>(config.burst_rate_hz());
  w.put<double>(config.center_freq_hz());
  w.put<double>(config.bandwidth_hz());
  return f;
}

RadarConfig config_from_frame(const Frame& frame) {
  expect_kind(frame, FrameKind::config, "config");
  if (frame.payload.empty()) return RadarConfig{};
  Reader r(frame.payload);
  RadarParams p;
  p.chirps_per_burst = r.get<std::uint16_t>();
  p.samples_per_chirp = r.get<std::uint16_t>();
  p.channels = r.get<std::uint16_t>();
  r.get<std::uint16_t>();
  p.prf_hz = r.get<double>();
  p.burst_rate_hz = r.get<double>();
  p.center_freq_hz = r.get<double>();
  p.bandwidth_hz = r.get<double>();
  if (r.remaining() != 0) throw DecodeError(DecodeErrorCode::bad_length, "oversized config payload");
  return RadarConfig(p);
}

Frame make_detection_frame(const Detection& d) {
  Frame f;
  f.kind = FrameKind::detection;
  f.burst_id = d.last_burst_id;
  detail::ByteWriter w(f.payload);
  w.put<std::uint32_t>(d.first_burst_id);
  w.put<double>(d.probability);
  w.put<std::uint8_t>(d.decision ? 1 : 0);
  w.put<std::uint64_t>(d.inference_latency_us);
  return f;
}

Detection detection_from_frame(const Frame& frame) {
  expect_kind(frame, FrameKind::detection, "detection");
  Reader r(frame.payload);
  Detection d;
  d.last_burst_id = frame.burst_id;
  d.first_burst_id = r.get<std::uint32_t>();
  d.probability = r.get<double>();
  d.decision = r.get<std::uint8_t>() != 0;
  d.inference_latency_us = r.get<std::uint64_t>();
  if (r.remaining() != 0) throw DecodeError(DecodeErrorCode::bad_length, "oversized detection payload");
  if (!std::isfinite(d.probability) || d.probability < 0.0 || d.probability > 1.0) {
    throw Error("detection probability outside [0, 1]");
  }
  return d;
}

void StreamParser::feed(std::span<const std::uint8_t> bytes) {
  compact();
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

void StreamParser::compact() {
  if (start_ > 0 && start_ * 2 >= buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(start_));
    start_ = 0;
  }
}

std::optional<Frame> StreamParser::next() {
  while (true) {
    const std::size_t avail = buffer_.size() - start_;
    if (avail < 4) return std::nullopt;
    const std::uint8_t* p = buffer_.data() + start_;
    if (!has_magic(p)) {
      // Scan for the next candidate magic.
      const auto* end = buffer_.data() + buffer_.size();
      const auto* hit = std::search(p + 1, end, kMagic.begin(), kMagic.end());
      const auto skipped = static_cast<std::size_t>(hit - p);
      const std::size_t keep = hit == end ? std::min<std::size_t>(3, avail) : 0;
      resync_bytes_ += skipped - keep;
      start_ += skipped - keep;
      if (hit == end) return std::nullopt;
      continue;
    }
    if (avail < kHeaderSize) return std::nullopt;
    const Header h = read_header(p);
    if (h.payload_len > kMaxPayload) {
      // Implausible header: treat as a false magic and resync.
      ++rejected_frames_;
      ++start_;
      ++resync_bytes_;
      continue;
    }
    const std::size_t total = kHeaderSize + std::size_t{h.payload_len} + kCrcSize;
    if (avail < total) return std::nullopt;
    try {
      Frame f = decode_frame({p, total});
      start_ += total;
      return f;
    } catch (const DecodeError& e) {
      if (e.code() == DecodeErrorCode::bad_crc) ++crc_errors_;
      ++rejected_frames_;
      start_ += total;
    }
  }
}

}  // namespace mmsense::wire
