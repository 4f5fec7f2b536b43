#include "mmsense/config_file.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

namespace mmsense {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text, std::string_view key, int line) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw Error("config line " + std::to_string(line) + ": bad value for " + std::string(key) + ": '" +
                std::string(text) + "'");
  }
  return value;
}

}  // namespace

RadarConfig parse_radar_config(std::string_view text) {
  RadarParams p;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "chirps_per_burst") p.chirps_per_burst = parse_number<int>(value, key, line_no);
    else if (key == "samples_per_chirp") p.samples_per_chirp = parse_number<int>(value, key, line_no);
    else if (key == "channels") p.channels = parse_number<int>(value, key, line_no);
    else if (key == "prf_hz") p.prf_hz = parse_number<double>(value, key, line_no);
    else if (key == "burst_rate_hz") p.burst_rate_hz = parse_number<double>(value, key, line_no);
    else if (key == "center_freq_hz") p.center_freq_hz = parse_number<double>(value, key, line_no);
    else if (key == "bandwidth_hz") p.bandwidth_hz = parse_number<double>(value, key, line_no);
    else throw Error("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
  }
  return RadarConfig(p);
}

RadarConfig load_radar_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_radar_config(ss.str());
}

}  // namespace mmsense
