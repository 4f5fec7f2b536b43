#include <doctest.h>

#include <cstring>
#include <random>

#include "mmsense/wire.hpp"
#include "oracles.hpp"

using namespace mmsense;
using namespace mmsense::wire;

namespace {

Frame random_frame(std::mt19937_64& gen) {
  Frame f;
  f.kind = static_cast<FrameKind>(1 + gen() % 3);
  f.burst_id = static_cast<std::uint32_t>(gen());
  f.timestamp_us = gen();
  f.payload.resize(gen() % 2048);
  for (auto& b : f.payload) b = static_cast<std::uint8_t>(gen());
  return f;
}

DecodeErrorCode decode_code(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_frame(bytes);
  } catch (const DecodeError& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return DecodeErrorCode::truncated;
}

}  // namespace

TEST_CASE("empty config frame is header plus crc") {
  Frame f;
  f.kind = FrameKind::config;
  const auto bytes = encode_frame(f);
  CHECK(bytes.size() == 28u);
  CHECK(std::memcmp(bytes.data(), "MMSE", 4) == 0);
  CHECK(decode_frame(bytes) == f);
  CHECK(config_from_frame(f) == RadarConfig{});
}

TEST_CASE("header layout is little-endian") {
  Frame f;
  f.kind = FrameKind::detection;
  f.burst_id = 0x01020304;
  f.timestamp_us = 0x1122334455667788ull;
  f.payload = {0xaa, 0xbb};
  const auto b = encode_frame(f);
  const std::vector<std::uint8_t> expect = {'M', 'M', 'S', 'E', 1, 0, 2, 0, 4, 3, 2, 1,
                                            0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11, 2, 0, 0, 0};
  CHECK(std::equal(expect.begin(), expect.end(), b.begin()));
  CHECK(b[24] == 0xaa);
  const std::uint32_t crc = crc32({b.data(), 26});
  CHECK(b[26] == (crc & 0xff));
  CHECK(b[29] == (crc >> 24));
}

TEST_CASE("crc32 check value") {
  const std::string s = "123456789";
  CHECK(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("default burst payload size and sample round trip") {
  const RadarConfig cfg;
  auto burst = oracle::random_burst(cfg, 5);
  burst.burst_id = 17;
  burst.timestamp_us = 680000;
  const Frame f = make_burst_frame(burst);
  CHECK(f.payload.size() == 24576u);
  CHECK(encode_frame(f).size() == 24576u + 28u);
  const auto back = burst_from_frame(decode_frame(encode_frame(f)), cfg);
  CHECK(back.burst_id == 17);
  CHECK(back.timestamp_us == 680000);
  for (std::size_t i = 0; i < burst.data.size(); ++i) {
    CHECK(back.data[i].real() == static_cast<float>(burst.data[i].real()));
    CHECK(back.data[i].imag() == static_cast<float>(burst.data[i].imag()));
  }
  // first sample is interleaved I then Q
  float iq[2];
  std::memcpy(iq, f.payload.data(), sizeof iq);
  CHECK(iq[0] == static_cast<float>(burst.data[0].real()));
  CHECK(iq[1] == static_cast<float>(burst.data[0].imag()));
}

TEST_CASE("codec round trip for 1000 random frames") {
  std::mt19937_64 gen(2024);
  for (int i = 0; i < 1000; ++i) {
    const Frame f = random_frame(gen);
    const auto bytes = encode_frame(f);
    REQUIRE(bytes.size() == 28 + f.payload.size());
    CHECK(decode_frame(bytes) == f);
  }
}

TEST_CASE("any single bit flip in the payload is a crc error") {
  std::mt19937_64 gen(7);
  Frame f;
  f.payload.resize(300);
  for (auto& b : f.payload) b = static_cast<std::uint8_t>(gen());
  const auto good = encode_frame(f);
  for (std::size_t byte = kHeaderSize; byte < kHeaderSize + f.payload.size(); ++byte) {
    for (int bit = 0; bit < 8; ++bit) {
      auto bad = good;
      bad[byte] ^= static_cast<std::uint8_t>(1u << bit);
      CHECK(decode_code(bad) == DecodeErrorCode::bad_crc);
    }
  }
}

TEST_CASE("distinct decode errors") {
  Frame f;
  f.payload = {1, 2, 3};
  const auto good = encode_frame(f);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(decode_code(bad_magic) == DecodeErrorCode::bad_magic);

  auto truncated = good;
  truncated.pop_back();
  CHECK(decode_code(truncated) == DecodeErrorCode::truncated);
  CHECK(decode_code({good.begin(), good.begin() + 10}) == DecodeErrorCode::truncated);

  auto version = good;
  version[4] = 9;
  CHECK(decode_code(version) == DecodeErrorCode::unsupported_version);

  Frame odd = f;
  odd.kind = static_cast<FrameKind>(7);
  CHECK(decode_code(encode_frame(odd)) == DecodeErrorCode::unknown_kind);

  auto trailing = good;
  trailing.push_back(0);
  CHECK(decode_code(trailing) == DecodeErrorCode::bad_length);
}

TEST_CASE("config and detection payloads") {
  RadarParams p;
  p.samples_per_chirp = 32;
  p.bandwidth_hz = 2e9;
  const RadarConfig cfg(p);
  const Frame cf = make_config_frame(cfg);
  CHECK(cf.payload.size() == 40u);
  CHECK(config_from_frame(decode_frame(encode_frame(cf))) == cfg);

  Detection d{100, 107, 0.875, true, 1234};
  const Frame df = make_detection_frame(d);
  CHECK(df.payload.size() == 21u);
  const auto back = detection_from_frame(decode_frame(encode_frame(df)));
  CHECK(back.first_burst_id == 100);
  CHECK(back.last_burst_id == 107);
  CHECK(back.probability == 0.875);
  CHECK(back.decision);
  CHECK(back.inference_latency_us == 1234);

  Detection bad = d;
  bad.probability = 1.5;
  CHECK_THROWS_AS(detection_from_frame(make_detection_frame(bad)), Error);
  CHECK_THROWS_AS(burst_from_frame(cf, cfg), Error);
}

TEST_CASE("burst payload size must match the config") {
  const RadarConfig cfg;
  const auto f = make_burst_frame(RawBurst(cfg));
  RadarParams p;
  p.channels = 2;
  CHECK_THROWS_AS(burst_from_frame(f, RadarConfig(p)), DecodeError);
}

TEST_CASE("stream parser handles arbitrary chunking") {
  std::mt19937_64 gen(11);
  std::vector<Frame> frames;
  std::vector<std::uint8_t> stream;
  for (int i = 0; i < 200; ++i) {
    frames.push_back(random_frame(gen));
    encode_frame_into(frames.back(), stream);
  }
  StreamParser parser;
  std::vector<Frame> out;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    const std::size_t n = std::min<std::size_t>(1 + gen() % 5000, stream.size() - pos);
    parser.feed({stream.data() + pos, n});
    pos += n;
    while (auto f = parser.next()) out.push_back(std::move(*f));
  }
  CHECK(out == frames);
  CHECK(parser.crc_errors() == 0);
  CHECK(parser.buffered() == 0);
}

TEST_CASE("stream parser skips corrupt frames and resyncs") {
  std::vector<std::uint8_t> stream;
  std::vector<Frame> frames;
  for (std::uint32_t i = 0; i < 6; ++i) {
    Frame f;
    f.burst_id = i;
    f.payload.assign(50, static_cast<std::uint8_t>(i));
    frames.push_back(f);
  }
  encode_frame_into(frames[0], stream);
  const std::vector<std::uint8_t> garbage = {'x', 'M', 'M', 'S', 0, 1, 2};
  stream.insert(stream.end(), garbage.begin(), garbage.end());
  encode_frame_into(frames[1], stream);
  const auto corrupt_at = stream.size() + kHeaderSize + 3;
  encode_frame_into(frames[2], stream);
  stream[corrupt_at] ^= 0x40;
  encode_frame_into(frames[3], stream);

  StreamParser parser;
  parser.feed(stream);
  std::vector<std::uint32_t> ids;
  while (auto f = parser.next()) ids.push_back(f->burst_id);
  CHECK(ids == std::vector<std::uint32_t>{0, 1, 3});
  CHECK(parser.crc_errors() == 1);
  CHECK(parser.resync_bytes() == garbage.size());
}
