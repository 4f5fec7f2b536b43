#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "mmsense/dataset.hpp"

using namespace mmsense;
namespace fs = std::filesystem;

namespace {

DatasetOptions frames(int n) {
  DatasetOptions o;
  o.frames_per_record = n;
  return o;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("mmsense_test_" + name); }

}  // namespace

TEST_CASE("two records are one positive and one negative") {
  const Dataset ds = generate_dataset(ScenePreset::person_with_metal, 2, RadarConfig{}, 1);
  REQUIRE(ds.size() == 2);
  CHECK(ds.label(0) != ds.label(1));
  CHECK(ds.frames_per_record == 8);
  CHECK(ds.range_bins == 64);
  CHECK(ds.doppler_bins == 16);
  CHECK(ds.channels == 3);
  CHECK(ds.values.size() == 2u * 8u * 64u * 16u * 3u);
  for (float v : ds.values) {
    CHECK(v >= 0.0f);
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("even counts are exactly balanced") {
  for (std::size_t n : {4u, 10u, 30u}) {
    const Dataset ds = generate_dataset(ScenePreset::crowd_one_metal, n, RadarConfig{}, 2, frames(1));
    std::size_t pos = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) pos += ds.label(i);
    CHECK(pos * 2 == n);
  }
  const Dataset odd = generate_dataset(ScenePreset::person, 3, RadarConfig{}, 2, frames(1));
  CHECK(odd.size() == 3);
}

TEST_CASE("generation is deterministic") {
  const auto a = generate_dataset(ScenePreset::person_with_metal, 4, RadarConfig{}, 9);
  const auto b = generate_dataset(ScenePreset::person_with_metal, 4, RadarConfig{}, 9);
  const auto c = generate_dataset(ScenePreset::person_with_metal, 4, RadarConfig{}, 10);
  CHECK(encode_dataset(a) == encode_dataset(b));
  CHECK(encode_dataset(a) != encode_dataset(c));
}

TEST_CASE("write then read is bit-identical") {
  const auto ds = generate_dataset(ScenePreset::crowd_one_metal, 6, RadarConfig{}, 3);
  const auto path = temp_path("roundtrip.ards");
  write_dataset(path, ds);
  const auto back = read_dataset(path);
  CHECK(back.labels == ds.labels);
  CHECK(back.frames_per_record == ds.frames_per_record);
  CHECK(back.range_bins == ds.range_bins);
  REQUIRE(back.values.size() == ds.values.size());
  CHECK(std::memcmp(back.values.data(), ds.values.data(), ds.values.size() * sizeof(float)) == 0);
  CHECK(fs::file_size(path) == 4 + 4 + 4 + 8 + ds.size() * (1 + ds.record_size() * 4));
  fs::remove(path);
}

TEST_CASE("header layout") {
  Dataset ds;
  ds.frames_per_record = 2;
  ds.range_bins = 4;
  ds.doppler_bins = 2;
  ds.channels = 1;
  std::vector<float> rec(16, 1.5f);
  ds.append(rec, true);
  const auto bytes = encode_dataset(ds);
  CHECK(std::memcmp(bytes.data(), "ARDS", 4) == 0);
  CHECK(bytes[4] == 1);   // version
  CHECK(bytes[8] == 1);   // count
  CHECK(bytes[12] == 2);  // T
  CHECK(bytes[14] == 4);  // N
  CHECK(bytes[16] == 2);  // P
  CHECK(bytes[18] == 1);  // C
  CHECK(bytes[20] == 1);  // label
  CHECK(bytes.size() == 21u + 16u * 4u);
  CHECK_THROWS_AS(ds.append(std::vector<float>(15), false), Error);
}

TEST_CASE("corrupt dataset bytes are rejected") {
  const auto ds = generate_dataset(ScenePreset::person, 2, RadarConfig{}, 3, frames(1));
  auto bytes = encode_dataset(ds);
  auto bad = bytes;
  bad[0] = 'Z';
  CHECK_THROWS_AS(decode_dataset(bad), Error);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_dataset(bad), Error);
  bad = bytes;
  bad[20] = 7;
  CHECK_THROWS_AS(decode_dataset(bad), Error);
  CHECK_THROWS_AS(read_dataset(temp_path("does_not_exist.ards")), Error);
  CHECK_THROWS_AS(write_dataset("/nonexistent-dir/x.ards", ds), Error);
  CHECK_THROWS_AS(generate_dataset(ScenePreset::person, 0, RadarConfig{}, 1), Error);
}

TEST_CASE("make_sequence stacks frames") {
  ArdFrame a, b;
  a.range_bins = b.range_bins = 2;
  a.doppler_bins = b.doppler_bins = 1;
  a.channels = b.channels = 1;
  a.values = {1, 2};
  b.values = {3, 4};
  const std::vector<ArdFrame> frames = {a, b};
  const auto seq = make_sequence(frames);
  CHECK(seq.frames == 2);
  CHECK(seq.values == std::vector<float>{1, 2, 3, 4});
  b.range_bins = 1;
  b.values = {3};
  CHECK_THROWS_AS(make_sequence(std::vector<ArdFrame>{a, b}), Error);
}

TEST_CASE("metal records carry a stronger peak") {
  const auto ds = generate_dataset(ScenePreset::person_with_metal, 40, RadarConfig{}, 5, frames(1));
  double pos = 0, neg = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto r = ds.record(i);
    const double peak = *std::max_element(r.begin(), r.end());
    (ds.label(i) ? pos : neg) += peak;
  }
  CHECK(pos > 2.0 * neg);
}
