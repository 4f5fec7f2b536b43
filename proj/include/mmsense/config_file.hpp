#pragma once

#include <filesystem>
#include <string_view>

#include "mmsense/radar.hpp"

namespace mmsense {

/// Parses `key = value` lines overriding RadarConfig defaults. Blank lines
/// and `#` comments are ignored. Keys: chirps_per_burst, samples_per_chirp,
/// channels, prf_hz, burst_rate_hz, center_freq_hz, bandwidth_hz.
RadarConfig parse_radar_config(std::string_view text);
RadarConfig load_radar_config(const std::filesystem::path& path);

}  // namespace mmsense
