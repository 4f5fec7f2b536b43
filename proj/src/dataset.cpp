#include "mmsense/dataset.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mmsense/detail/bytes.hpp"
#include "mmsense/rng.hpp"

namespace mmsense {

ArdSequence make_sequence(std::span<const ArdFrame> frames) {
  if (frames.empty()) throw Error("cannot build a sequence from zero frames");
  ArdSequence seq;
  seq.frames = static_cast<int>(frames.size());
  seq.range_bins = frames[0].range_bins;
  seq.doppler_bins = frames[0].doppler_bins;
  seq.channels = frames[0].channels;
  seq.values.reserve(seq.frame_size() * frames.size());
  for (const auto& f : frames) {
    if (f.range_bins != seq.range_bins || f.doppler_bins != seq.doppler_bins ||
        f.channels != seq.channels || f.values.size() != seq.frame_size()) {
      throw Error("frames in a sequence must share dimensions");
    }
    for (double v : f.values) seq.values.push_back(static_cast<float>(v));
  }
  return seq;
}

void Dataset::append(std::span<const float> record, bool label) {
  if (record.size() != record_size()) {
    std::ostringstream os;
    os << "record has " << record.size() << " values, dataset expects " << record_size();
    throw Error(os.str());
  }
  values.insert(values.end(), record.begin(), record.end());
  labels.push_back(label ? 1 : 0);
}

ArdSequence Dataset::sequence(std::size_t i) const {
  ArdSequence seq;
  seq.frames = frames_per_record;
  seq.range_bins = range_bins;
  seq.doppler_bins = doppler_bins;
  seq.channels = channels;
  auto r = record(i);
  seq.values.assign(r.begin(), r.end());
  return seq;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  out.reserve(20 + ds.size() * (1 + ds.record_size() * 4));
  detail::ByteWriter w(out);
  w.put_tag("ARDS");
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.size()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(ds.frames_per_record));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(ds.range_bins));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(ds.doppler_bins));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(ds.channels));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.put<std::uint8_t>(ds.labels[i]);
    const auto rec = ds.record(i);
    w.put_bytes({reinterpret_cast<const std::uint8_t*>(rec.data()), rec.size_bytes()});
  }
  return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader<Error> r(bytes);
  auto magic = r.take(4);
  if (std::string_view(reinterpret_cast<const char*>(magic.data()), 4) != "ARDS") {
    throw Error("not a dataset file (bad magic)");
  }
  if (auto version = r.get<std::uint32_t>(); version != kDatasetVersion) {
    throw Error("unsupported dataset version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  Dataset ds;
  ds.frames_per_record = r.get<std::uint16_t>();
  ds.range_bins = r.get<std::uint16_t>();
  ds.doppler_bins = r.get<std::uint16_t>();
  ds.channels = r.get<std::uint16_t>();
  if (ds.record_size() == 0) throw Error("dataset header has a zero dimension");
  if (r.remaining() != count * (1 + ds.record_size() * 4)) {
    throw Error("dataset body size does not match its header");
  }
  ds.labels.reserve(count);
  ds.values.reserve(count * ds.record_size());
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto label = r.get<std::uint8_t>();
    if (label > 1) throw Error("dataset label must be 0 or 1");
    ds.labels.push_back(label);
    const auto raw = r.take(ds.record_size() * sizeof(float));
    const std::size_t offset = ds.values.size();
    ds.values.resize(offset + ds.record_size());
    std::memcpy(ds.values.data() + offset, raw.data(), raw.size());
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const auto bytes = encode_dataset(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

Dataset generate_dataset(ScenePreset preset, std::size_t records, const RadarConfig& config,
                         std::uint64_t seed, const DatasetOptions& options) {
  if (records < 1) throw Error("dataset needs at least one record");
  if (options.frames_per_record < 1) throw Error("frames_per_record must be >= 1");
  Dataset ds;
  ds.frames_per_record = options.frames_per_record;
  ds.range_bins = config.samples();
  ds.doppler_bins = config.chirps();
  ds.channels = config.channels();
  ds.labels.reserve(records);
  ds.values.reserve(records * ds.record_size());

  const double interval = 1.0 / config.burst_rate_hz();
  std::vector<float> record(ds.record_size());
  for (std::size_t i = 0; i < records; ++i) {
    const bool metal = i % 2 == 0;
    const Scene scene = make_scene_variant(preset, metal, derive_seed({seed, i}), config,
                                           options.knobs);
    Rng start(derive_seed({seed, i, 0x7157}));
    const double t0 = start.uniform(0.0, options.max_start_s);
    for (int t = 0; t < options.frames_per_record; ++t) {
      const auto burst = synthesize_burst(scene, config, t0 + t * interval,
                                          static_cast<std::uint32_t>(t));
      const auto frame = dsp::process_burst(burst, options.dsp);
      auto* dst = record.data() + static_cast<std::size_t>(t) * ds.frame_size();
      for (std::size_t k = 0; k < frame.values.size(); ++k) dst[k] = static_cast<float>(frame.values[k]);
    }
    ds.append(record, metal);
  }
  return ds;
}

}  // namespace mmsense
