#include "mmsense/radar.hpp"

#include <bit>
#include <cmath>
#include <sstream>

namespace mmsense {

namespace {

bool is_power_of_two(int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); }

}  // namespace

RadarConfig::RadarConfig(const RadarParams& params) : params_(params) {
  std::ostringstream why;
  if (params.chirps_per_burst < 2 || !is_power_of_two(params.chirps_per_burst)) {
    why << "chirps_per_burst must be a power of two >= 2, got " << params.chirps_per_burst;
  } else if (params.samples_per_chirp < 2 || !is_power_of_two(params.samples_per_chirp)) {
    why << "samples_per_chirp must be a power of two >= 2, got " << params.samples_per_chirp;
  } else if (params.channels < 1) {
    why << "channels must be >= 1, got " << params.channels;
  } else if (!(params.prf_hz > 0) || !(params.burst_rate_hz > 0) ||
             !(params.center_freq_hz > 0) || !(params.bandwidth_hz > 0) ||
             !std::isfinite(params.prf_hz) || !std::isfinite(params.burst_rate_hz) ||
             !std::isfinite(params.center_freq_hz) || !std::isfinite(params.bandwidth_hz)) {
    why << "all frequencies must be finite and strictly positive";
  } else if (!(params.prf_hz > params.burst_rate_hz * params.chirps_per_burst)) {
    why << "burst does not fit in its interval: prf_hz (" << params.prf_hz
        << ") must exceed burst_rate_hz * chirps_per_burst ("
        << params.burst_rate_hz * params.chirps_per_burst << ")";
  }
  if (!why.str().empty()) throw Error("invalid RadarConfig: " + why.str());
}

double range_resolution(const RadarConfig& config) {
  return kSpeedOfLight / (2.0 * config.bandwidth_hz());
}

double max_range(const RadarConfig& config) {
  return config.samples() * range_resolution(config);
}

double velocity_resolution(const RadarConfig& config) {
  return config.wavelength_m() * config.prf_hz() / (2.0 * config.chirps());
}

double max_unambiguous_velocity(const RadarConfig& config) {
  return config.wavelength_m() * config.prf_hz() / 4.0;
}

BinPosition physical_to_bins(double range_m, double velocity_mps, const RadarConfig& config) {
  const double r_max = max_range(config);
  if (!std::isfinite(range_m) || range_m < 0.0 || range_m >= r_max) {
    std::ostringstream os;
    os << "range " << range_m << " m outside [0, " << r_max << ") m";
    throw Error(os.str());
  }
  const double v_max = max_unambiguous_velocity(config);
  if (!std::isfinite(velocity_mps) || std::abs(velocity_mps) >= v_max) {
    std::ostringstream os;
    os << "radial velocity " << velocity_mps << " m/s exceeds unambiguous limit " << v_max
       << " m/s";
    throw Error(os.str());
  }
  const double doppler_hz = 2.0 * velocity_mps / config.wavelength_m();
  const double bin_width_hz = config.prf_hz() / config.chirps();
  return {range_m / range_resolution(config), doppler_hz / bin_width_hz};
}

PhysicalPosition bins_to_physical(double range_bin, double doppler_bin, const RadarConfig& config) {
  const double bin_width_hz = config.prf_hz() / config.chirps();
  return {range_bin * range_resolution(config),
          doppler_bin * bin_width_hz * config.wavelength_m() / 2.0};
}

bool RawBurst::matches(const RadarConfig& config) const {
  return chirps == config.chirps() && samples == config.samples() &&
         channels == config.channels() && data.size() == config.burst_size();
}

bool RawBurst::all_finite() const {
  for (const auto& v : data) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  }
  return true;
}

}  // namespace mmsense
