#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mmsense/error.hpp"

namespace mmsense {

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s

/// Plain parameter bundle. Validated when wrapped in a RadarConfig.
struct RadarParams {
  int chirps_per_burst = 16;
  int samples_per_chirp = 64;
  int channels = 3;
  double prf_hz = 2000.0;
  double burst_rate_hz = 25.0;
  double center_freq_hz = 60e9;
  double bandwidth_hz = 1e9;

  bool operator==(const RadarParams&) const = default;
};

/// Immutable, validated radar/burst parameterization.
///
/// Chirp and sample counts must be powers of two (both axes are FFT'd) and a
/// whole burst must fit inside one burst interval.
class RadarConfig {
 public:
  RadarConfig() : RadarConfig(RadarParams{}) {}
  explicit RadarConfig(const RadarParams& params);

  const RadarParams& params() const { return params_; }
  int chirps() const { return params_.chirps_per_burst; }
  int samples() const { return params_.samples_per_chirp; }
  int channels() const { return params_.channels; }
  double prf_hz() const { return params_.prf_hz; }
  double burst_rate_hz() const { return params_.burst_rate_hz; }
  double center_freq_hz() const { return params_.center_freq_hz; }
  double bandwidth_hz() const { return params_.bandwidth_hz; }
  double wavelength_m() const { return kSpeedOfLight / params_.center_freq_hz; }

  /// Elements in one burst (P * N * C).
  std::size_t burst_size() const {
    return static_cast<std::size_t>(chirps()) * samples() * channels();
  }

  bool operator==(const RadarConfig& other) const { return params_ == other.params_; }

 private:
  RadarParams params_;
};

/// c / (2 * bandwidth).
double range_resolution(const RadarConfig& config);

/// samples_per_chirp * range_resolution.
double max_range(const RadarConfig& config);

/// Width of one Doppler bin in m/s: lambda * prf / (2 * P).
double velocity_resolution(const RadarConfig& config);

/// Largest unambiguous radial speed: lambda * prf / 4.
double max_unambiguous_velocity(const RadarConfig& config);

struct BinPosition {
  double range_bin = 0.0;
  double doppler_bin = 0.0;  // signed, relative to the zero-velocity bin
};

struct PhysicalPosition {
  double range_m = 0.0;
  double velocity_mps = 0.0;
};

/// Maps a range (m) and radial velocity (m/s, positive toward the radar) to
/// fractional range/Doppler bins. Throws Error outside [0, max_range) or
/// beyond the unambiguous velocity.
BinPosition physical_to_bins(double range_m, double velocity_mps, const RadarConfig& config);

/// Inverse of physical_to_bins. No range checks.
PhysicalPosition bins_to_physical(double range_bin, double doppler_bin, const RadarConfig& config);

using Complex = std::complex<double>;

/// One burst of complex baseband samples, layout [chirp][sample][channel].
struct RawBurst {
  std::uint32_t burst_id = 0;
  std::uint64_t timestamp_us = 0;
  int chirps = 0;
  int samples = 0;
  int channels = 0;
  std::vector<Complex> data;

  RawBurst() = default;
  explicit RawBurst(const RadarConfig& config)
      : chirps(config.chirps()),
        samples(config.samples()),
        channels(config.channels()),
        data(config.burst_size()) {}

  std::size_t index(int chirp, int sample, int channel) const {
    return (static_cast<std::size_t>(chirp) * samples + sample) * channels + channel;
  }
  Complex& at(int chirp, int sample, int channel) { return data[index(chirp, sample, channel)]; }
  const Complex& at(int chirp, int sample, int channel) const {
    return data[index(chirp, sample, channel)];
  }

  bool matches(const RadarConfig& config) const;
  bool all_finite() const;
};

/// Absolute range-Doppler magnitudes, layout [range][doppler][channel].
/// The Doppler axis is centre-shifted: zero velocity sits at bin P/2.
struct ArdFrame {
  std::uint32_t burst_id = 0;
  std::uint64_t timestamp_us = 0;
  int range_bins = 0;
  int doppler_bins = 0;
  int channels = 0;
  std::vector<double> values;

  std::size_t index(int range, int doppler, int channel) const {
    return (static_cast<std::size_t>(range) * doppler_bins + doppler) * channels + channel;
  }
  double at(int range, int doppler, int channel) const {
    return values[index(range, doppler, channel)];
  }
};

}  // namespace mmsense
