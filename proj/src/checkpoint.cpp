#include "mmsense/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mmsense/detail/bytes.hpp"

namespace mmsense::transdope {

std::vector<std::uint8_t> encode_checkpoint(const TransDopeModel& model) {
  const auto& c = model.config;
  std::vector<std::uint8_t> out;
  detail::ByteWriter w(out);
  w.put_tag("TDOP");
  w.put<std::uint32_t>(kCheckpointVersion);
  for (int v : {c.seq_len, c.range_bins, c.doppler_bins, c.channels, c.conv_filters, c.embed_dim, c.heads,
                c.encoder_layers, c.ffn_kernel}) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(v));
  }
  w.put<std::uint16_t>(c.positional_encoding ? 1 : 0);
  w.put<double>(c.input_scale);
  auto params = parameters(const_cast<TransDopeModel&>(model));
  std::uint64_t total = 0;
  for (const auto& p : params) total += p.size;
  w.put<std::uint64_t>(total);
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.size; ++i) w.put<float>(static_cast<float>(p.data[i]));
  }
  return out;
}

TransDopeModel decode_checkpoint(std::span<const std::uint8_t> bytes, const std::optional<TransDopeConfig>& expected) {
  detail::ByteReader<Error> r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), "TDOP", 4) != 0) throw Error("not a TransDope checkpoint (bad magic)");
  if (const auto version = r.get<std::uint32_t>(); version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  TransDopeConfig c;
  for (int* field : {&c.seq_len, &c.range_bins, &c.doppler_bins, &c.channels, &c.conv_filters, &c.embed_dim,
                     &c.heads, &c.encoder_layers, &c.ffn_kernel}) {
    *field = r.get<std::uint16_t>();
  }
  c.positional_encoding = (r.get<std::uint16_t>() & 1) != 0;
  c.input_scale = r.get<double>();
  c.validate();
  if (expected && !(*expected == c)) throw Error("checkpoint config does not match the expected model shape");

  TransDopeModel model = make_model(c, 0);
  auto params = parameters(model);
  std::uint64_t total = 0;
  for (const auto& p : params) total += p.size;
  if (const auto stored = r.get<std::uint64_t>(); stored != total) {
    std::ostringstream os;
    os << "checkpoint holds " << stored << " parameters, config implies " << total;
    throw Error(os.str());
  }
  if (r.remaining() != total * sizeof(float)) throw Error("checkpoint tensor data has the wrong length");
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.size; ++i) p.data[i] = r.get<float>();
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const TransDopeModel& model) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

TransDopeModel load_checkpoint(const std::filesystem::path& path, const std::optional<TransDopeConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected);
}

}  // namespace mmsense::transdope
